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

#include "pyrfocus/layout.hpp"

#include <algorithm>
#include <cmath>

#include "pyrfocus/jsonio.hpp"

namespace pyrfocus {

void TokenLayout::validate() const {
  if (s < 1 || s_th < 1) throw UserError("layout: token grid sides must be >= 1");
}

LevelTokens make_level_tokens(const PyramidGeometry& geom, int level,
                              const std::vector<TileId>& encoded,
                              const TokenLayout& layout) {
  layout.validate();
  const LevelGeometry& lg = geom.level(level);

  LevelTokens lt;
  lt.level = level;
  lt.encoded = encoded;
  for (const TileId& id : lt.encoded) {
    if (id.level != level) throw UserError("layout: encoded tile from another level");
    geom.tile(id);  // bounds check
  }
  std::sort(lt.encoded.begin(), lt.encoded.end(),
            [](const TileId& a, const TileId& b) {
              return a.row != b.row ? a.row < b.row : a.col < b.col;
            });
  lt.encoded.erase(std::unique(lt.encoded.begin(), lt.encoded.end(),
                               [](const TileId& a, const TileId& b) {
                                 return a.row == b.row && a.col == b.col;
                               }),
                   lt.encoded.end());

  lt.tokens.reserve(lt.encoded.size() * static_cast<std::size_t>(layout.tile_tokens()) +
                    static_cast<std::size_t>(lg.n_h));
  std::size_t next = 0;
  for (int gr = 0; gr < lg.n_h; ++gr) {
    while (next < lt.encoded.size() && lt.encoded[next].row == gr) {
      const TileId& id = lt.encoded[next];
      for (int ir = 0; ir < layout.s; ++ir)
        for (int ic = 0; ic < layout.s; ++ic) {
          HrToken t;
          t.tile = id;
          t.in_row = ir;
          t.in_col = ic;
          lt.tokens.push_back(t);
        }
      ++next;
    }
    HrToken nl;
    nl.newline = true;
    nl.tile = TileId{level, gr, -1};
    lt.tokens.push_back(nl);
  }

  lt.scorable.reserve(lt.encoded.size() * static_cast<std::size_t>(layout.tile_tokens()));
  for (std::size_t i = 0; i < lt.tokens.size(); ++i)
    if (!lt.tokens[i].newline) lt.scorable.push_back(static_cast<int>(i));
  return lt;
}

LevelTokens full_level_tokens(const PyramidGeometry& geom, int level,
                              const TokenLayout& layout) {
  const LevelGeometry& lg = geom.level(level);
  std::vector<TileId> all;
  all.reserve(lg.tiles.size());
  for (const Tile& t : lg.tiles) all.push_back(TileId{level, t.row, t.col});
  return make_level_tokens(geom, level, all, layout);
}

std::pair<double, double> token_center(const PyramidGeometry& geom,
                                       const TokenLayout& layout,
                                       const HrToken& t) {
  if (t.newline) throw UserError("layout: newline tokens have no center");
  const double B = geom.cfg.tile_size;
  const double cell = B / layout.s;
  double cx = t.tile.col * B + (t.in_col + 0.5) * cell;
  double cy = t.tile.row * B + (t.in_row + 0.5) * cell;
  return {geom.level_to_origin(t.tile.level, cx),
          geom.level_to_origin(t.tile.level, cy)};
}

RectD token_footprint(const PyramidGeometry& geom, const TokenLayout& layout,
                      const HrToken& t) {
  if (t.newline) throw UserError("layout: newline tokens have no footprint");
  const double B = geom.cfg.tile_size;
  const double cell = B / layout.s;
  double lx0 = t.tile.col * B + t.in_col * cell;
  double ly0 = t.tile.row * B + t.in_row * cell;
  RectD r;
  r.x0 = std::clamp(geom.level_to_origin(t.tile.level, lx0), 0.0,
                    static_cast<double>(geom.orig_w));
  r.y0 = std::clamp(geom.level_to_origin(t.tile.level, ly0), 0.0,
                    static_cast<double>(geom.orig_h));
  r.x1 = std::clamp(geom.level_to_origin(t.tile.level, lx0 + cell), 0.0,
                    static_cast<double>(geom.orig_w));
  r.y1 = std::clamp(geom.level_to_origin(t.tile.level, ly0 + cell), 0.0,
                    static_cast<double>(geom.orig_h));
  return r;
}

namespace {

// Tile index owning coordinate v (level pixels) on a grid of B-sized cells.
// Shared boundaries snap to the lower-index cell; 1e-9 absorbs float noise
// from the origin -> level round trip.
int boundary_cell(double v, double B, int n_cells) {
  double t = v / B;
  double m = std::round(t);
  if (std::abs(t - m) <= 1e-9) t = m;
  int c = static_cast<int>(std::ceil(t)) - 1;
  return std::clamp(c, 0, n_cells - 1);
}

}  // namespace

TileId tile_at_origin_point(const PyramidGeometry& geom, int level, double x,
                            double y) {
  const LevelGeometry& lg = geom.level(level);
  double cx = std::clamp(x, 0.0, static_cast<double>(geom.orig_w));
  double cy = std::clamp(y, 0.0, static_cast<double>(geom.orig_h));
  double lx = geom.origin_to_level(level, cx);
  double ly = geom.origin_to_level(level, cy);
  const double B = geom.cfg.tile_size;
  TileId id;
  id.level = level;
  id.col = boundary_cell(lx, B, lg.n_w);
  id.row = boundary_cell(ly, B, lg.n_h);
  return id;
}

}  // namespace pyrfocus
