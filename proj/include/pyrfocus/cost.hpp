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

#include <cstdint>
#include <string>
#include <vector>

#include "pyrfocus/jsonio.hpp"
#include "pyrfocus/prune.hpp"

namespace pyrfocus {

/// Transformer-stack cost model. Defaults describe a 7B-class decoder
/// (width 3584, ff width 18944, 28 layers) fronted by a 4-layer region
/// scoring stack. Token constants: 576 encoder tokens per tile, 144 after
/// 2x2 merge, 576 for the thumbnail.
struct CostParams {
  std::int64_t d = 3584;
  std::int64_t m = 18944;
  int llm_layers = 28;
  int rfm_layers = 4;
  std::int64_t encoder_tokens_per_tile = 576;
  std::int64_t llm_tokens_per_tile = 144;
  std::int64_t thumbnail_tokens = 576;
  // Coefficient of the n*d*m feed-forward term. A gated MLP runs three
  // such matmuls (gate, up, down), hence 3; set 2 for plain two-matmul FF.
  int ff_coeff = 3;

  void validate() const;
};

struct TokenCounts {
  std::int64_t encoder_total = 0;
  std::int64_t llm_total = 0;
};

/// Token counts for a flat any-resolution grid of t tiles plus thumbnail:
/// encoder sees (t+1)*576, the LLM sees t*144 + 576.
TokenCounts anyres_tokens(std::int64_t t, const CostParams& params = {});

/// Token counts for a pyramid run: every traversed coarser level encodes
/// all its tiles, the final level only the selected ones, and the LLM
/// receives the top-alpha share of the selected tiles' tokens plus the
/// thumbnail.
TokenCounts dip_tokens(const std::vector<std::int64_t>& coarser_level_tiles,
                       std::int64_t selected_tiles, double alpha,
                       const CostParams& params = {});

/// FLOPs of one decoder layer over n tokens:
///   4*n*d^2 (qkv/out projections) + 2*n^2*d (attention) + ff_coeff*n*d*m.
double layer_flops(std::int64_t n, const CostParams& params = {});

struct StageCost {
  std::string name;
  std::int64_t tokens = 0;
  int layers = 0;
  double flops = 0;
};

struct CostReport {
  std::int64_t encoder_tokens = 0;
  std::int64_t llm_tokens = 0;
  std::vector<StageCost> stages;
  double total_flops = 0;

  /// Total in TFLOPs, rounded to two decimals.
  double total_tflops() const;
};

/// Cost of a recorded pruning run. Each traversed level is one scoring
/// stage over tiles*144 + 576 tokens; the decode stage covers the tokens
/// the run retained (alpha share per contributing level plus thumbnail).
CostReport pipeline_report(const PruneTrace& trace,
                           const CostParams& params = {});

ojson cost_report_json(const CostReport& rep);

struct ComparisonRow {
  std::string method;
  std::int64_t vis_total = 0;
  std::int64_t vis_to_llm = 0;
  double tflops = 0;  // rounded to two decimals
};

/// Reference comparison on a 4000x4000 image (144-tile anyres grid,
/// 9/36/50-tile pyramid, alpha = 0.25): the flat baseline, four published
/// token-reduction schedules on top of it, attention pruning on the flat
/// grid, and the pyramid pipeline.
std::vector<ComparisonRow> comparison_table(const CostParams& params = {});

/// CSV with header method,vis_tokens_total,vis_tokens_to_llm,tflops.
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

}  // namespace pyrfocus
