#include <doctest.h>

#include <random>

#include "pyrfocus/layout.hpp"

using namespace pyrfocus;

namespace {

RasterImage flat_image(int w, int h, unsigned char v = 7) {
  RasterImage img;
  img.width = w;
  img.height = h;
  img.channels = 1;
  img.data.assign(static_cast<std::size_t>(w) * h, v);
  return img;
}

PyramidGeometry geometry_for(int w, int h) {
  PyramidConfig cfg;
  return build_pyramid(flat_image(w, h), cfg, 1).geom;
}

}  // namespace

TEST_CASE("full level stream interleaves tiles and newlines") {
  PyramidGeometry geom = geometry_for(1008, 1008);  // single 3x3 level
  TokenLayout layout;
  LevelTokens lt = full_level_tokens(geom, 1, layout);

  CHECK(lt.level == 1);
  CHECK(lt.encoded.size() == 9);
  CHECK(lt.n_hr() == 9 * 144 + 3);
  CHECK(lt.scorable.size() == 9 * 144);

  // Row 0: tiles (0,0),(0,1),(0,2) then a newline at index 432.
  CHECK_FALSE(lt.tokens[0].newline);
  CHECK(lt.tokens[0].tile.row == 0);
  CHECK(lt.tokens[0].tile.col == 0);
  CHECK(lt.tokens[0].in_row == 0);
  CHECK(lt.tokens[0].in_col == 0);
  CHECK(lt.tokens[143].in_row == 11);
  CHECK(lt.tokens[143].in_col == 11);
  CHECK(lt.tokens[144].tile.col == 1);
  CHECK(lt.tokens[432].newline);
  CHECK(lt.tokens[432].tile.row == 0);
  CHECK(lt.tokens[432].tile.col == -1);
  CHECK(lt.tokens[433].tile.row == 1);
  CHECK(lt.tokens.back().newline);
  CHECK(lt.tokens.back().tile.row == 2);

  int newlines = 0;
  for (const auto& t : lt.tokens) newlines += t.newline ? 1 : 0;
  CHECK(newlines == 3);
  for (int i : lt.scorable) CHECK_FALSE(lt.tokens[static_cast<std::size_t>(i)].newline);
}

TEST_CASE("subset stream keeps every grid row's newline") {
  PyramidGeometry geom = geometry_for(1008, 1008);
  TokenLayout layout;
  // Unsorted with a duplicate; middle grid row has no encoded tile.
  std::vector<TileId> enc = {{1, 2, 0}, {1, 0, 1}, {1, 2, 0}};
  LevelTokens lt = make_level_tokens(geom, 1, enc, layout);

  REQUIRE(lt.encoded.size() == 2);
  CHECK(lt.encoded[0].row == 0);
  CHECK(lt.encoded[0].col == 1);
  CHECK(lt.encoded[1].row == 2);
  CHECK(lt.n_hr() == 2 * 144 + 3);

  CHECK(lt.tokens[0].tile.col == 1);       // row 0 tile block
  CHECK(lt.tokens[144].newline);           // row 0 newline
  CHECK(lt.tokens[145].newline);           // row 1 newline (no tiles)
  CHECK(lt.tokens[145].tile.row == 1);
  CHECK_FALSE(lt.tokens[146].newline);     // row 2 tile block
  CHECK(lt.tokens[146].tile.row == 2);
  CHECK(lt.tokens.back().newline);
}

TEST_CASE("token centers and footprints map through level geometry") {
  PyramidGeometry geom = geometry_for(1008, 1008);  // r = 1, single level
  TokenLayout layout;

  HrToken t;
  t.tile = TileId{1, 0, 0};
  t.in_row = 0;
  t.in_col = 0;
  auto [cx, cy] = token_center(geom, layout, t);
  CHECK(cx == doctest::Approx(14.0).epsilon(1e-12));
  CHECK(cy == doctest::Approx(14.0).epsilon(1e-12));
  RectD r = token_footprint(geom, layout, t);
  CHECK(r.x0 == doctest::Approx(0.0));
  CHECK(r.y0 == doctest::Approx(0.0));
  CHECK(r.x1 == doctest::Approx(28.0).epsilon(1e-12));
  CHECK(r.y1 == doctest::Approx(28.0).epsilon(1e-12));

  t.tile = TileId{1, 2, 1};
  t.in_row = 3;
  t.in_col = 7;
  auto [cx2, cy2] = token_center(geom, layout, t);
  CHECK(cx2 == doctest::Approx(336 + 7 * 28 + 14.0).epsilon(1e-12));
  CHECK(cy2 == doctest::Approx(672 + 3 * 28 + 14.0).epsilon(1e-12));

  HrToken nl;
  nl.newline = true;
  CHECK_THROWS_AS(token_center(geom, layout, nl), UserError);
  CHECK_THROWS_AS(token_footprint(geom, layout, nl), UserError);
}

TEST_CASE("centers are midpoints of footprints at every level") {
  PyramidGeometry geom = geometry_for(4000, 4000);  // 3 levels
  TokenLayout layout;
  for (int p = 1; p <= geom.P(); ++p) {
    LevelTokens lt = full_level_tokens(geom, p, layout);
    for (int idx : lt.scorable) {
      const HrToken& t = lt.tokens[static_cast<std::size_t>(idx)];
      // Skip tokens clipped by the image edge; clamping moves the box.
      auto [cx, cy] = token_center(geom, layout, t);
      if (cx >= 4000.0 || cy >= 4000.0) continue;
      RectD r = token_footprint(geom, layout, t);
      if (r.x1 >= 4000.0 || r.y1 >= 4000.0) continue;
      CHECK(cx == doctest::Approx((r.x0 + r.x1) / 2).epsilon(1e-9));
      CHECK(cy == doctest::Approx((r.y0 + r.y1) / 2).epsilon(1e-9));
    }
  }
}

TEST_CASE("padding-margin footprints collapse to zero area") {
  // 1000x500: grid 2x3, resized 1008x504, 168 rows of bottom padding.
  PyramidGeometry geom = geometry_for(1000, 500);
  TokenLayout layout;
  HrToken t;
  t.tile = TileId{1, 1, 0};
  t.in_row = 11;  // level rows 644..672, fully inside padding (starts at 504)
  t.in_col = 0;
  RectD r = token_footprint(geom, layout, t);
  CHECK(r.y0 == 500.0);
  CHECK(r.y1 == 500.0);
  CHECK(r.area() == 0.0);
}

TEST_CASE("boundary points belong to the lower-index tile") {
  PyramidGeometry geom = geometry_for(4000, 4000);
  // Level 2: r = 1.008, down factor 2. Origin x with level coord exactly
  // 1008 (= 336*3): x = 1008 * 2 / 1.008 = 2000.
  TileId id = tile_at_origin_point(geom, 2, 2000.0, 2000.0);
  CHECK(id.level == 2);
  CHECK(id.row == 2);
  CHECK(id.col == 2);

  // Nudge strictly inside the next tile.
  id = tile_at_origin_point(geom, 2, 2001.0, 2000.0);
  CHECK(id.col == 3);
  CHECK(id.row == 2);

  // Corners clamp into the grid.
  id = tile_at_origin_point(geom, 2, 0.0, 0.0);
  CHECK(id.row == 0);
  CHECK(id.col == 0);
  id = tile_at_origin_point(geom, 2, 4000.0, 4000.0);
  CHECK(id.row == geom.level(2).n_h - 1);
  CHECK(id.col == geom.level(2).n_w - 1);
}

TEST_CASE("tile ownership agrees with origin bboxes on random points") {
  PyramidGeometry geom = geometry_for(3137, 2221);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ux(0.0, 3137.0), uy(0.0, 2221.0);
  for (int p = 1; p <= geom.P(); ++p) {
    for (int rep = 0; rep < 200; ++rep) {
      double x = ux(rng), y = uy(rng);
      TileId id = tile_at_origin_point(geom, p, x, y);
      const Tile& t = geom.tile(id);
      // The owning tile's origin box must contain the point. Floor-halving
      // trims up to down_factor-1 pixels off the bottom/right of coarse
      // levels, so the grid's outermost tiles absorb that overhang.
      double over = geom.down_factor(p);
      bool last_col = id.col == geom.level(p).n_w - 1;
      bool last_row = id.row == geom.level(p).n_h - 1;
      CHECK(x >= t.origin_x0 - 1e-6);
      CHECK(x <= t.origin_x1 + (last_col ? over : 0.0) + 1e-6);
      CHECK(y >= t.origin_y0 - 1e-6);
      CHECK(y <= t.origin_y1 + (last_row ? over : 0.0) + 1e-6);
    }
  }
}

TEST_CASE("level token validation rejects foreign and bogus tiles") {
  PyramidGeometry geom = geometry_for(4000, 4000);
  TokenLayout layout;
  std::vector<TileId> enc = {{2, 0, 0}};
  CHECK_THROWS_AS(make_level_tokens(geom, 1, enc, layout), UserError);
  enc = {{1, 5, 0}};  // level 1 is 3x3
  CHECK_THROWS_AS(make_level_tokens(geom, 1, enc, layout), UserError);
  TokenLayout bad;
  bad.s = 0;
  CHECK_THROWS_AS(full_level_tokens(geom, 1, bad), UserError);
}
