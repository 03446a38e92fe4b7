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

#include "pyrfocus/cost.hpp"

#include <cmath>
#include <cstdio>

namespace pyrfocus {

void CostParams::validate() const {
  if (d < 1 || m < 1) throw UserError("cost: model widths must be >= 1");
  if (llm_layers < 1 || rfm_layers < 1)
    throw UserError("cost: layer counts must be >= 1");
  if (encoder_tokens_per_tile < 1 || llm_tokens_per_tile < 1 ||
      thumbnail_tokens < 1)
    throw UserError("cost: token constants must be >= 1");
  if (ff_coeff < 1) throw UserError("cost: ff_coeff must be >= 1");
}

TokenCounts anyres_tokens(std::int64_t t, const CostParams& params) {
  params.validate();
  if (t < 1) throw UserError("cost: anyres grid needs at least one tile");
  TokenCounts c;
  c.encoder_total = (t + 1) * params.encoder_tokens_per_tile;
  c.llm_total = t * params.llm_tokens_per_tile + params.thumbnail_tokens;
  return c;
}

TokenCounts dip_tokens(const std::vector<std::int64_t>& coarser_level_tiles,
                       std::int64_t selected_tiles, double alpha,
                       const CostParams& params) {
  params.validate();
  if (selected_tiles < 0) throw UserError("cost: negative tile selection");
  if (!(alpha > 0.0) || alpha > 1.0)
    throw UserError("cost: alpha must be in (0, 1]");
  std::int64_t coarser = 0;
  for (std::int64_t t : coarser_level_tiles) {
    if (t < 0) throw UserError("cost: negative tile count");
    coarser += t;
  }
  TokenCounts c;
  c.encoder_total =
      (1 + coarser + selected_tiles) * params.encoder_tokens_per_tile;
  c.llm_total = std::llround(alpha * static_cast<double>(selected_tiles) *
                             static_cast<double>(params.llm_tokens_per_tile)) +
                params.thumbnail_tokens;
  return c;
}

double layer_flops(std::int64_t n, const CostParams& params) {
  params.validate();
  if (n < 1) throw UserError("cost: token count must be >= 1");
  const double nd = static_cast<double>(n);
  const double dd = static_cast<double>(params.d);
  const double md = static_cast<double>(params.m);
  return 4.0 * nd * dd * dd + 2.0 * nd * nd * dd +
         static_cast<double>(params.ff_coeff) * nd * dd * md;
}

namespace {

double round2(double v) {
  return static_cast<double>(std::llround(v * 100.0)) / 100.0;
}

}  // namespace

double CostReport::total_tflops() const { return round2(total_flops / 1e12); }

CostReport pipeline_report(const PruneTrace& trace, const CostParams& params) {
  params.validate();
  if (trace.iterations.empty())
    throw UserError("cost: trace has no iterations");

  CostReport rep;
  std::int64_t tiles_sum = 0;
  for (const IterationTrace& it : trace.iterations) {
    const std::int64_t tiles = it.n_tiles_encoded;
    tiles_sum += tiles;
    StageCost st;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "rfm_level_%d", it.level);
    st.name = buf;
    st.tokens = tiles * params.llm_tokens_per_tile + params.thumbnail_tokens;
    st.layers = params.rfm_layers;
    st.flops = params.rfm_layers * layer_flops(st.tokens, params);
    rep.stages.push_back(st);
  }
  rep.encoder_tokens = (1 + tiles_sum) * params.encoder_tokens_per_tile;

  const double alpha = trace.cfg.alpha;
  const double per_tile = static_cast<double>(params.llm_tokens_per_tile);
  std::int64_t llm = params.thumbnail_tokens;
  if (trace.cfg.retain_mode == RetainMode::concat) {
    for (const IterationTrace& it : trace.iterations)
      llm += std::llround(alpha * it.n_tiles_encoded * per_tile);
  } else {
    llm +=
        std::llround(alpha * trace.iterations.back().n_tiles_encoded * per_tile);
  }
  rep.llm_tokens = llm;

  StageCost st;
  st.name = "llm";
  st.tokens = llm;
  st.layers = params.llm_layers;
  st.flops = params.llm_layers * layer_flops(llm, params);
  rep.stages.push_back(st);

  for (const StageCost& s : rep.stages) rep.total_flops += s.flops;
  return rep;
}

ojson cost_report_json(const CostReport& rep) {
  ojson j;
  j["encoder_tokens"] = rep.encoder_tokens;
  j["llm_tokens"] = rep.llm_tokens;
  j["stages"] = ojson::array();
  for (const StageCost& s : rep.stages) {
    ojson js;
    js["name"] = s.name;
    js["tokens"] = s.tokens;
    js["layers"] = s.layers;
    js["flops"] = static_cast<std::int64_t>(s.flops);
    j["stages"].push_back(js);
  }
  j["total_flops"] = static_cast<std::int64_t>(rep.total_flops);
  j["total_tflops"] = rep.total_tflops();
  return j;
}

std::vector<ComparisonRow> comparison_table(const CostParams& params) {
  params.validate();
  auto f = [&](std::int64_t n) { return layer_flops(n, params); };
  const int L = params.llm_layers;
  const int R = params.rfm_layers;

  // 4000x4000 scenario: 12x12 anyres grid; pyramid traversal encoding 9,
  // then 36, then 50 selected bottom-level tiles, alpha = 0.25.
  const TokenCounts flat = anyres_tokens(144, params);
  const TokenCounts dip = dip_tokens({9, 36}, 50, 0.25, params);
  const std::int64_t n_full = flat.llm_total;        // 21312
  const std::int64_t n_half = n_full / 2;            // 10656
  const std::int64_t n_quarter = n_full / 4;         // 5328
  const std::int64_t n_eighth = n_full / 8;          // 2664
  const std::int64_t n_pruned =                      // 5760
      std::llround(0.25 * 144 * params.llm_tokens_per_tile) +
      params.thumbnail_tokens;

  std::vector<ComparisonRow> rows;
  auto add = [&](const std::string& method, std::int64_t total,
                 std::int64_t to_llm, double flops) {
    rows.push_back({method, total, to_llm, round2(flops / 1e12)});
  };

  add("anyres-p144", flat.encoder_total, n_full, L * f(n_full));
  // Merges down to a quarter of the tokens before the LLM.
  add("anyres + PruMerge++", flat.encoder_total, n_quarter, L * f(n_quarter));
  // Fixed retained budget of 9280 tokens before the LLM.
  add("anyres + VisionZip", flat.encoder_total, 9280, L * f(9280));
  // Full set through 2 layers, half through the remaining ones.
  add("anyres + FastV", flat.encoder_total, n_full,
      2 * f(n_full) + (L - 2) * f(n_half));
  // Four stages of 7 layers, halving tokens at each stage boundary.
  add("anyres + PDrop", flat.encoder_total, n_full,
      (L / 4) * (f(n_full) + f(n_half) + f(n_quarter) + f(n_eighth)));
  // Scoring pass over the full flat grid, LLM on the retained quarter.
  add("anyres + prune", flat.encoder_total, n_pruned,
      R * f(n_full) + L * f(n_pruned));
  // Pyramid: scoring per level, LLM on the final selection.
  const std::int64_t n1 = 9 * params.llm_tokens_per_tile +
                          params.thumbnail_tokens;  // 1872
  const std::int64_t n2 = 36 * params.llm_tokens_per_tile +
                          params.thumbnail_tokens;  // 5760
  const std::int64_t n3 = 50 * params.llm_tokens_per_tile +
                          params.thumbnail_tokens;  // 7776
  add("dip-4layer + prune", dip.encoder_total, dip.llm_total,
      R * (f(n1) + f(n2) + f(n3)) + L * f(dip.llm_total));
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "method,vis_tokens_total,vis_tokens_to_llm,tflops\n";
  char buf[160];
  for (const ComparisonRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%lld,%lld,%.2f\n", r.method.c_str(),
                  static_cast<long long>(r.vis_total),
                  static_cast<long long>(r.vis_to_llm), r.tflops);
    out += buf;
  }
  return out;
}

}  // namespace pyrfocus
