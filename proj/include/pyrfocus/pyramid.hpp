// Copyright 2026 The pyrfocus Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pyrfocus/jsonio.hpp"
#include "pyrfocus/raster.hpp"

namespace pyrfocus {

struct PyramidConfig {
  int tile_size = 336;       // B, pixel side of one tile
  int min_side = 1008;       // downsample chain stop threshold
  int thumbnail_size = 336;  // square side of the global thumbnail
  double base_gsd = 1.0;     // informational: ground sample distance at the
                             // finest level; level p carries base * 2^(P-p)
};

struct TileId {
  int level = 0;  // 1-based, 1 = coarsest tile level
  int row = 0;
  int col = 0;
};

/// One B x B tile of a level grid. origin_* is the tile's footprint mapped
/// back into original-image pixel coordinates (fractional, clamped to the
/// image bounds where the tile reaches into padding).
struct Tile {
  int row = 0;
  int col = 0;
  double origin_x0 = 0, origin_y0 = 0, origin_x1 = 0, origin_y1 = 0;
  bool padding_only = false;
};

/// Grid arithmetic for one level: tile counts, the common scale factor, the
/// post-resize dimensions and the zero-fill pads completing the grid.
struct GridSpec {
  int n_h = 0, n_w = 0;
  double r = 1.0;
  int resized_w = 0, resized_h = 0;
  int pad_right = 0, pad_bottom = 0;
};

struct LevelGeometry {
  int p = 0;  // 1-based from coarsest
  int source_w = 0, source_h = 0;
  double r = 1.0;
  int n_h = 0, n_w = 0;
  int resized_w = 0, resized_h = 0;
  int pad_right = 0, pad_bottom = 0;
  std::vector<Tile> tiles;  // row-major, n_h * n_w entries
};

/// Geometry of a full pyramid: everything needed for token layout, scoring
/// and coordinate mapping, without pixel data. Levels are ordered coarsest
/// to finest; the thumbnail is an extra global layer on top of these.
struct PyramidGeometry {
  PyramidConfig cfg;
  int orig_w = 0, orig_h = 0;
  std::vector<std::pair<int, int>> chain;  // (w, h), original first
  std::vector<LevelGeometry> levels;

  int P() const { return static_cast<int>(levels.size()); }

  /// Downsample factor 2^(P-p) between level p's source and the original.
  double down_factor(int p) const;

  /// Map level-p resized coordinates to original-image coordinates
  /// (unclamped) and back. x and y share the same transform since r is a
  /// single common scale.
  double level_to_origin(int p, double v) const;
  double origin_to_level(int p, double v) const;

  const LevelGeometry& level(int p) const;  // p is 1-based
  const Tile& tile(const TileId& id) const;
};

/// Pyramid with pixel data: per-level resized+padded rasters plus the global
/// thumbnail. Immutable after construction.
struct ImagePyramid {
  PyramidGeometry geom;
  RasterImage thumbnail;
  std::vector<RasterImage> level_images;  // parallel to geom.levels
};

/// Compute (N_h, N_w, r_p, resized dims, pads) for a source of H x W pixels
/// and tile side B. Total function; r >= 1 always.
GridSpec tile_grid(int H, int W, int B);

/// Dimension chain [original, /2, /4, ...], stopping at the first entry whose
/// shorter side is <= cfg.min_side (inclusive). Halving is floor division.
std::vector<std::pair<int, int>> build_downsample_chain(int w, int h,
                                                        const PyramidConfig& cfg);

ImagePyramid build_pyramid(const RasterImage& img, const PyramidConfig& cfg,
                           unsigned threads = 1);

/// The B x B pixel block of one tile; regions past the resized extent are
/// zero-filled padding.
RasterImage crop_tile(const ImagePyramid& pyr, const TileId& id);

/// Manifest serialization. Floats go through sig9 so dumps are byte-stable.
ojson manifest_json(const PyramidGeometry& geom);
PyramidGeometry manifest_from_json(const ojson& j);

/// Write every tile as L{p}/r{row}_c{col}.ppm (or .pgm for gray input)
/// under dir.
void dump_tiles(const ImagePyramid& pyr, const std::string& dir,
                unsigned threads = 1);

}  // namespace pyrfocus
