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

#include <utility>
#include <vector>

#include "pyrfocus/pyramid.hpp"

namespace pyrfocus {

/// Vision-token geometry. Each encoded tile contributes s*s tokens (the
/// post-projector grid), the thumbnail contributes s_th^2, and every tile-grid
/// row ends with one newline delimiter token.
struct TokenLayout {
  int s = 12;     // tokens per tile side
  int s_th = 24;  // thumbnail tokens per side

  int tile_tokens() const { return s * s; }
  int thumb_tokens() const { return s_th * s_th; }
  void validate() const;
};

/// Identity of one hr token in a level stream.
struct HrToken {
  bool newline = false;
  TileId tile;     // for newline tokens col is -1 and row is the grid row
  int in_row = 0;  // 0..s-1 inside the tile, row-major
  int in_col = 0;
};

/// The hr token stream of one level for a given encoded-tile subset. Order:
/// grid row by grid row, each encoded tile's s*s tokens (tiles by column),
/// then that row's newline. Rows with no encoded tile still emit a newline,
/// so n_hr = |encoded| * s^2 + n_h always holds.
struct LevelTokens {
  int level = 0;
  std::vector<TileId> encoded;   // row-major, deduplicated
  std::vector<HrToken> tokens;   // size n_hr
  std::vector<int> scorable;     // indices of non-newline tokens, in order

  int n_hr() const { return static_cast<int>(tokens.size()); }
};

/// Axis-aligned rectangle in original-image pixel coordinates.
struct RectD {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double area() const { return (x1 > x0 && y1 > y0) ? (x1 - x0) * (y1 - y0) : 0.0; }
};

LevelTokens make_level_tokens(const PyramidGeometry& geom, int level,
                              const std::vector<TileId>& encoded,
                              const TokenLayout& layout);

/// Stream for a level with every tile encoded (how a traversal starts).
LevelTokens full_level_tokens(const PyramidGeometry& geom, int level,
                              const TokenLayout& layout);

/// Original-image center of a non-newline token. Unclamped: centers inside a
/// padded tile margin land beyond the image bounds.
std::pair<double, double> token_center(const PyramidGeometry& geom,
                                       const TokenLayout& layout,
                                       const HrToken& t);

/// Original-image footprint of a non-newline token, clamped to the image.
/// Padding-margin tokens collapse to a zero-area rectangle at the edge.
RectD token_footprint(const PyramidGeometry& geom, const TokenLayout& layout,
                      const HrToken& t);

/// Tile-grid cell owning an original-image point at the given level. The
/// point is first clamped into the image, then mapped to level coordinates;
/// a point on a shared tile boundary belongs to the lower-index tile.
TileId tile_at_origin_point(const PyramidGeometry& geom, int level, double x,
                            double y);

}  // namespace pyrfocus
