#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "pyrfocus/provider.hpp"

using namespace pyrfocus;

namespace {

RasterImage gradient_image(int w, int h) {
  RasterImage img;
  img.width = w;
  img.height = h;
  img.channels = 1;
  img.data.resize(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.data[static_cast<std::size_t>(y) * w + x] =
          static_cast<unsigned char>((x * 7 + y * 13) % 256);
  return img;
}

ImagePyramid small_pyramid() {
  PyramidConfig cfg;
  return build_pyramid(gradient_image(1008, 1008), cfg, 1);
}

}  // namespace

TEST_CASE("synthetic heat field evaluates bumps and rects") {
  ojson spec = ojson::parse(R"({
    "bumps": [{"x": 100, "y": 100, "sigma": 10, "amp": 2.0}],
    "rects": [{"x0": 300, "y0": 300, "x1": 400, "y1": 400, "amp": 1.5},
              {"x0": 600, "y0": 600, "x1": 700, "y1": 700, "amp": 1.0,
               "falloff": 50}]
  })");
  SyntheticProvider prov(spec);
  CHECK(prov.heat_at(100, 100) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(prov.heat_at(100, 110) ==
        doctest::Approx(2.0 * std::exp(-0.5)).epsilon(1e-12));
  // Far tails of the other components leak ~1e-9 here.
  CHECK(prov.heat_at(350, 350) == doctest::Approx(1.5).epsilon(1e-8));
  CHECK(prov.heat_at(350, 401) < 1e-7);  // hard edge: only tails remain
  CHECK(prov.heat_at(650, 650) == doctest::Approx(1.0).epsilon(1e-9));
  // 50 px outside the soft rect: one falloff sigma.
  CHECK(prov.heat_at(750, 650) == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));

  CHECK_THROWS_AS(SyntheticProvider(ojson::object()), UserError);
  CHECK_THROWS_AS(SyntheticProvider(ojson::parse(
                      R"({"bumps":[{"x":0,"y":0,"sigma":0}]})")),
                  UserError);
  CHECK_THROWS_AS(SyntheticProvider(ojson::parse(
                      R"({"rects":[{"x0":10,"y0":0,"x1":5,"y1":5}]})")),
                  UserError);
}

TEST_CASE("synthetic provider scores token centers") {
  ImagePyramid pyr = small_pyramid();
  TokenLayout layout;
  LevelTokens lt = full_level_tokens(pyr.geom, 1, layout);

  // Bump exactly on the center of tile (0,0) token (0,0): origin (14,14).
  ojson spec = ojson::parse(R"({"bumps":[{"x":14,"y":14,"sigma":5,"amp":3}]})");
  SyntheticProvider prov(spec);
  auto s = prov.scores(pyr, lt, layout);
  REQUIRE(s.size() == lt.scorable.size());
  CHECK(s[0] == doctest::Approx(3.0).epsilon(1e-12));
  // All other scores strictly smaller.
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] < s[0]);
}

TEST_CASE("attention map files round-trip") {
  AttnFile f;
  f.layers = 2;
  f.heads = 3;
  f.j = 1;
  f.n_v = 4;
  for (int i = 0; i < 24; ++i) f.data.push_back(0.5f * i - 2.0f);
  const std::string path = "attn_roundtrip_test.attn";
  write_attn(path, f);
  AttnFile g = read_attn(path);
  CHECK(g.layers == 2);
  CHECK(g.heads == 3);
  CHECK(g.j == 1);
  CHECK(g.n_v == 4);
  CHECK(g.data == f.data);

  // Truncation and bad magic are rejected.
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "ATTN";
  }
  CHECK_THROWS_AS(read_attn(path), UserError);
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "JUNKJUNKJUNKJUNKJUNKJUNK";
  }
  CHECK_THROWS_AS(read_attn(path), UserError);
  std::remove(path.c_str());

  AttnFile mismatch = f;
  mismatch.data.pop_back();
  CHECK_THROWS_AS(write_attn(path, mismatch), UserError);
}

TEST_CASE("file provider reduces and subsets full-level maps") {
  ImagePyramid pyr = small_pyramid();
  TokenLayout layout;
  layout.s = 2;  // 4 tokens per tile, 9 tiles -> n_v = 36
  const LevelGeometry& lg = pyr.geom.level(1);
  REQUIRE(lg.tiles.size() == 9);

  // Two layers, two heads, two rows. Only the last layer's last row counts;
  // heads average. Fill earlier slots with large garbage to prove reduction.
  AttnFile f;
  f.layers = 2;
  f.heads = 2;
  f.j = 2;
  f.n_v = 36;
  f.data.assign(static_cast<std::size_t>(2) * 2 * 2 * 36, 99.0f);
  for (std::uint32_t c = 0; c < 36; ++c) {
    std::uint32_t tile = c / 4;
    // head 0 carries tile+1, head 1 carries tile+3 -> average tile+2.
    f.data[((1u * 2 + 0) * 2 + 1) * 36 + c] = static_cast<float>(tile + 1);
    f.data[((1u * 2 + 1) * 2 + 1) * 36 + c] = static_cast<float>(tile + 3);
  }
  write_attn("level_1.attn", f);

  FileProvider prov(".");
  std::vector<TileId> enc = {{1, 0, 2}, {1, 2, 1}};  // tile indices 2 and 7
  LevelTokens lt = make_level_tokens(pyr.geom, 1, enc, layout);
  auto s = prov.scores(pyr, lt, layout);
  REQUIRE(s.size() == 8);
  for (int i = 0; i < 4; ++i) CHECK(s[static_cast<std::size_t>(i)] == doctest::Approx(4.0));
  for (int i = 4; i < 8; ++i) CHECK(s[static_cast<std::size_t>(i)] == doctest::Approx(9.0));

  // Wrong column count for the level is rejected.
  TokenLayout wide;
  wide.s = 3;
  LevelTokens lt3 = make_level_tokens(pyr.geom, 1, enc, wide);
  CHECK_THROWS_AS(prov.scores(pyr, lt3, wide), UserError);
  std::remove("level_1.attn");

  FileProvider missing("no_such_dir");
  CHECK_THROWS_AS(missing.scores(pyr, lt, layout), UserError);
}

TEST_CASE("rfm provider is deterministic and content-sensitive") {
  ImagePyramid pyr = small_pyramid();
  TokenLayout layout;
  layout.s = 2;
  layout.s_th = 2;

  StackConfig sc;
  sc.layers = 2;
  sc.heads = 2;
  sc.model_dim = 16;
  sc.ff_dim = 16;
  sc.seed = 11;
  DecoderStack stack = make_stack(sc);

  RfmProviderConfig pc;
  RfmProvider prov(stack, pc);
  LevelTokens lt = full_level_tokens(pyr.geom, 1, layout);

  TokenSequence seq = prov.build_sequence(pyr, lt, layout);
  CHECK(seq.n_sys == 1);
  CHECK(seq.n_lr == 4);
  CHECK(seq.n_hr == lt.n_hr());
  CHECK(seq.n_txt == 2);
  CHECK(seq.turns == std::vector<int>{seq.n() - 1});
  seq.validate(sc.model_dim);

  auto s1 = prov.scores(pyr, lt, layout);
  REQUIRE(s1.size() == lt.scorable.size());
  for (double v : s1) CHECK(v >= 0);

  RfmProvider again(stack, pc);
  auto s2 = again.scores(pyr, lt, layout);
  CHECK(s1 == s2);

  // A different embed seed changes the scores.
  RfmProviderConfig pc2 = pc;
  pc2.embed_seed = 8;
  RfmProvider other(stack, pc2);
  CHECK(other.scores(pyr, lt, layout) != s1);

  // Content dependence: flat image yields different scores than gradient.
  PyramidConfig cfg;
  RasterImage flat;
  flat.width = 1008;
  flat.height = 1008;
  flat.channels = 1;
  flat.data.assign(1008u * 1008u, 200);
  ImagePyramid pyr_flat = build_pyramid(flat, cfg, 1);
  CHECK(prov.scores(pyr_flat, lt, layout) != s1);

  // Oversized sequences are refused, naming the cap.
  StackConfig tiny = sc;
  tiny.max_seq = 8;
  RfmProvider cramped(make_stack(tiny), pc);
  CHECK_THROWS_AS(cramped.scores(pyr, lt, layout), UserError);
}

TEST_CASE("exported level scores feed the file provider back") {
  ImagePyramid pyr = small_pyramid();
  TokenLayout layout;
  layout.s = 2;
  LevelTokens full = full_level_tokens(pyr.geom, 1, layout);

  std::vector<double> scores(full.scorable.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = 0.25 * static_cast<double>(i);
  export_level_scores("level_1.attn", 9, layout.s, full, scores, pyr.geom);

  FileProvider prov(".");
  auto back = prov.scores(pyr, full, layout);
  REQUIRE(back.size() == scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    CHECK(back[i] == doctest::Approx(scores[i]).epsilon(1e-7));

  // Subset export zero-fills tiles that were never scored.
  std::vector<TileId> enc = {{1, 1, 1}};
  LevelTokens sub = make_level_tokens(pyr.geom, 1, enc, layout);
  std::vector<double> subscores = {1, 2, 3, 4};
  export_level_scores("level_1.attn", 9, layout.s, sub, subscores, pyr.geom);
  auto all = prov.scores(pyr, full, layout);
  // Tile (1,1) is index 4: slots 16..19 carry 1..4, everything else zero.
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i >= 16 && i < 20)
      CHECK(all[i] == doctest::Approx(static_cast<double>(i - 15)));
    else
      CHECK(all[i] == 0.0);
  }
  std::remove("level_1.attn");
}
