#include <doctest.h>

#include <cmath>

#include "pyrfocus/cost.hpp"

using namespace pyrfocus;

namespace {

RasterImage flat_image(int w, int h, unsigned char v = 9) {
  RasterImage img;
  img.width = w;
  img.height = h;
  img.channels = 1;
  img.data.assign(static_cast<std::size_t>(w) * h, v);
  return img;
}

// The reference scenario as a bare trace: three traversed levels encoding
// 9, 36 and 50 tiles, alpha 0.25, terminal selection kept.
PruneTrace reference_trace(RetainMode mode = RetainMode::select) {
  PruneTrace t;
  t.cfg.alpha = 0.25;
  t.cfg.retain_mode = mode;
  t.orig_w = 4000;
  t.orig_h = 4000;
  t.levels = 3;
  t.terminal_level = 3;
  t.thumb_tokens = 576;
  int tiles[3] = {9, 36, 50};
  for (int i = 0; i < 3; ++i) {
    IterationTrace it;
    it.level = i + 1;
    it.n_tiles_encoded = tiles[i];
    t.iterations.push_back(it);
  }
  return t;
}

}  // namespace

TEST_CASE("anyres token counts") {
  TokenCounts c = anyres_tokens(144);
  CHECK(c.encoder_total == 83520);
  CHECK(c.llm_total == 21312);

  c = anyres_tokens(1);
  CHECK(c.encoder_total == 1152);
  CHECK(c.llm_total == 720);

  c = anyres_tokens(25);
  CHECK(c.encoder_total == 14976);
  CHECK(c.llm_total == 4176);

  CHECK_THROWS_AS(anyres_tokens(0), UserError);
}

TEST_CASE("dip token counts") {
  TokenCounts c = dip_tokens({9, 36}, 50, 0.25);
  CHECK(c.encoder_total == 55296);
  CHECK(c.llm_total == 2376);

  // Nothing traversed beyond the thumbnail.
  c = dip_tokens({}, 0, 0.25);
  CHECK(c.encoder_total == 576);
  CHECK(c.llm_total == 576);

  // Full selection at alpha=1 matches the flat grid on the LLM side and
  // exceeds it on the encoder side by the coarser levels' tiles.
  TokenCounts full = dip_tokens({9, 36}, 144, 1.0);
  TokenCounts flat = anyres_tokens(144);
  CHECK(full.llm_total == flat.llm_total);
  CHECK(full.encoder_total == flat.encoder_total + (9 + 36) * 576);

  // Dominance: no partial selection exceeds the full one.
  for (std::int64_t sel : {0, 1, 17, 50, 143, 144}) {
    for (double a : {0.1, 0.25, 0.5, 1.0}) {
      TokenCounts part = dip_tokens({9, 36}, sel, a);
      CHECK(part.encoder_total <= full.encoder_total);
      CHECK(part.llm_total <= full.llm_total);
    }
  }

  CHECK_THROWS_AS(dip_tokens({9, -1}, 5, 0.25), UserError);
  CHECK_THROWS_AS(dip_tokens({9}, -5, 0.25), UserError);
  CHECK_THROWS_AS(dip_tokens({9}, 5, 0.0), UserError);
  CHECK_THROWS_AS(dip_tokens({9}, 5, 1.5), UserError);
}

TEST_CASE("layer flops formula") {
  CostParams p;
  // n=1 collapses to the raw coefficients.
  CHECK(layer_flops(1, p) == 4.0 * 3584 * 3584 + 2.0 * 3584 + 3.0 * 3584 * 18944);
  CHECK(layer_flops(1, p) == 255073280.0);

  // The decode stage of the reference scenario.
  CHECK(28.0 * layer_flops(2376, p) == 18102087843840.0);

  // Monotone in n, d and m.
  CHECK(layer_flops(1000, p) < layer_flops(1001, p));
  CostParams bigger_d = p;
  bigger_d.d += 1;
  CHECK(layer_flops(1000, p) < layer_flops(1000, bigger_d));
  CostParams bigger_m = p;
  bigger_m.m += 1;
  CHECK(layer_flops(1000, p) < layer_flops(1000, bigger_m));

  // Two-matmul feed-forward variant is strictly cheaper.
  CostParams ff2 = p;
  ff2.ff_coeff = 2;
  CHECK(layer_flops(1000, ff2) ==
        layer_flops(1000, p) - 1000.0 * 3584 * 18944);

  CHECK_THROWS_AS(layer_flops(0, p), UserError);
}

TEST_CASE("reference scenario pipeline total") {
  CostReport rep = pipeline_report(reference_trace());
  CHECK(rep.encoder_tokens == 55296);
  CHECK(rep.llm_tokens == 2376);

  REQUIRE(rep.stages.size() == 4);
  CHECK(rep.stages[0].name == "rfm_level_1");
  CHECK(rep.stages[0].tokens == 1872);
  CHECK(rep.stages[0].layers == 4);
  CHECK(rep.stages[1].name == "rfm_level_2");
  CHECK(rep.stages[1].tokens == 5760);
  CHECK(rep.stages[2].name == "rfm_level_3");
  CHECK(rep.stages[2].tokens == 7776);
  CHECK(rep.stages[3].name == "llm");
  CHECK(rep.stages[3].tokens == 2376);
  CHECK(rep.stages[3].layers == 28);

  double sum = 0;
  for (const StageCost& s : rep.stages) sum += s.flops;
  CHECK(rep.total_flops == sum);

  // All terms are integer-valued, so the total is exact.
  CHECK(rep.total_flops == 36607754502144.0);
  CHECK(rep.total_tflops() == 36.61);
  CHECK(std::abs(rep.total_flops / 1e12 - 36.61) < 0.01);

  // The plain feed-forward variant misses the pinned total.
  CostParams ff2;
  ff2.ff_coeff = 2;
  CostReport rep2 = pipeline_report(reference_trace(), ff2);
  CHECK(rep2.total_tflops() == 27.91);

  PruneTrace empty;
  CHECK_THROWS_AS(pipeline_report(empty), UserError);
}

TEST_CASE("pipeline report from a live trace") {
  PyramidConfig pcfg;
  ImagePyramid pyr = build_pyramid(flat_image(2016, 2016), pcfg, 2);
  REQUIRE(pyr.geom.P() == 2);
  SyntheticProvider prov(
      ojson::parse(R"({"bumps":[{"x":500,"y":420,"sigma":90}]})"));

  PruneConfig cfg;
  PruneTrace trace = run_prune(pyr, prov, cfg);
  CostReport rep = pipeline_report(trace);

  std::int64_t tiles_sum = 0;
  for (const IterationTrace& it : trace.iterations)
    tiles_sum += it.n_tiles_encoded;
  CHECK(rep.encoder_tokens == (1 + tiles_sum) * 576);
  CHECK(rep.llm_tokens ==
        std::llround(cfg.alpha * trace.iterations.back().n_tiles_encoded *
                     144.0) +
            576);
  CHECK(rep.stages.size() == trace.iterations.size() + 1);
  double sum = 0;
  for (const StageCost& s : rep.stages) sum += s.flops;
  CHECK(rep.total_flops == sum);

  // Concatenating retained levels grows the decode stage accordingly.
  cfg.retain_mode = RetainMode::concat;
  PruneTrace ctrace = run_prune(pyr, prov, cfg);
  CostReport crep = pipeline_report(ctrace);
  std::int64_t want = 576;
  for (const IterationTrace& it : ctrace.iterations)
    want += std::llround(cfg.alpha * it.n_tiles_encoded * 144.0);
  CHECK(crep.llm_tokens == want);
  CHECK(crep.llm_tokens >= rep.llm_tokens);
}

TEST_CASE("comparison table") {
  std::vector<ComparisonRow> rows = comparison_table();
  REQUIRE(rows.size() == 7);

  CHECK(rows[0].method == "anyres-p144");
  CHECK(rows[0].vis_total == 83520);
  CHECK(rows[0].vis_to_llm == 21312);
  CHECK(rows[0].tflops == 243.37);

  CHECK(rows[1].method == "anyres + PruMerge++");
  CHECK(rows[1].vis_to_llm == 5328);
  CHECK(rows[1].tflops == 43.75);

  CHECK(rows[2].method == "anyres + VisionZip");
  CHECK(rows[2].vis_to_llm == 9280);
  CHECK(rows[2].tflops == 83.56);

  CHECK(rows[3].method == "anyres + FastV");
  CHECK(rows[3].vis_to_llm == 21312);
  CHECK(rows[3].tflops == 109.21);

  CHECK(rows[4].method == "anyres + PDrop");
  CHECK(rows[4].vis_to_llm == 21312);
  CHECK(rows[4].tflops == 101.62);

  CHECK(rows[5].method == "anyres + prune");
  CHECK(rows[5].vis_to_llm == 5760);
  CHECK(rows[5].tflops == 82.56);

  CHECK(rows[6].method == "dip-4layer + prune");
  CHECK(rows[6].vis_total == 55296);
  CHECK(rows[6].vis_to_llm == 2376);
  CHECK(rows[6].tflops == 36.61);

  for (int i = 0; i < 6; ++i) CHECK(rows[i].vis_total == 83520);
}

TEST_CASE("report json and comparison csv") {
  CostReport rep = pipeline_report(reference_trace());
  ojson j = cost_report_json(rep);
  CHECK(j["encoder_tokens"] == 55296);
  CHECK(j["llm_tokens"] == 2376);
  CHECK(j["total_flops"] == 36607754502144LL);
  CHECK(j["total_tflops"] == 36.61);
  REQUIRE(j["stages"].size() == 4);
  CHECK(j["stages"][0]["name"] == "rfm_level_1");
  CHECK(j["stages"][0]["tokens"] == 1872);
  CHECK(j["stages"][3]["flops"] == 18102087843840LL);

  // Dumping twice gives identical bytes.
  CHECK(j.dump(2) == cost_report_json(pipeline_report(reference_trace())).dump(2));

  std::string csv = comparison_csv(comparison_table());
  CHECK(csv.rfind("method,vis_tokens_total,vis_tokens_to_llm,tflops\n", 0) ==
        0);
  CHECK(csv.find("anyres-p144,83520,21312,243.37\n") != std::string::npos);
  CHECK(csv.find("dip-4layer + prune,55296,2376,36.61\n") !=
        std::string::npos);
  CHECK(csv.find("anyres + prune,83520,5760,82.56\n") != std::string::npos);
}

TEST_CASE("cost parameter validation") {
  CostParams p;
  p.d = 0;
  CHECK_THROWS_AS(p.validate(), UserError);
  p = CostParams{};
  p.llm_layers = 0;
  CHECK_THROWS_AS(p.validate(), UserError);
  p = CostParams{};
  p.ff_coeff = 0;
  CHECK_THROWS_AS(p.validate(), UserError);
  p = CostParams{};
  p.thumbnail_tokens = 0;
  CHECK_THROWS_AS(p.validate(), UserError);
  p = CostParams{};
  CHECK_NOTHROW(p.validate());
}
