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
#include <vector>

#include "pyrfocus/provider.hpp"

namespace pyrfocus {

enum class RetainMode { select, concat };
enum class DepthMode { dynamic, fixed };

RetainMode retain_mode_from_string(const std::string& s);
DepthMode depth_mode_from_string(const std::string& s);
std::string to_string(RetainMode m);
std::string to_string(DepthMode m);

struct PruneConfig {
  double alpha = 0.25;
  int n_max = 40;
  RetainMode retain_mode = RetainMode::select;
  DepthMode depth_mode = DepthMode::dynamic;
  int fixed_layers = 0;  // total layer count incl. the thumbnail when fixed
  TokenLayout layout;

  void validate() const;
};

/// Rank-based selection: the indices of the k = max(1, round(alpha * n))
/// largest scores, ties broken toward the lower index, returned ascending.
std::vector<int> top_alpha(const std::vector<double>& scores, double alpha);

/// Key tiles of level p+1: a tile is key iff at least one selected token's
/// original-image center lands in it (boundaries owned by the lower-index
/// tile). p_key holds token-stream indices into lt.tokens. Deduplicated,
/// row-major. Tiles that are pure padding are never key.
std::vector<TileId> map_tokens_to_tiles(const std::vector<int>& p_key,
                                        const LevelTokens& lt,
                                        const PyramidGeometry& geom,
                                        const TokenLayout& layout);

struct RetainedToken {
  bool newline = false;
  int level = 0;
  TileId tile;     // for newlines: col -1, row = grid row
  int in_row = 0;
  int in_col = 0;
};

struct IterationTrace {
  int level = 0;
  int n_tiles_encoded = 0;
  int n_scored = 0;
  int k = 0;
  bool all_zero = false;
  double score_min = 0, score_max = 0, score_sum = 0;
  double selected_mass = 0;  // selected share of the score sum (reporting only)
  std::vector<int> selected_tokens;  // token-stream indices, ascending
  std::vector<TileId> key_tiles;     // next-level tiles; empty at the terminal
  std::string branch;  // "descend" | "prune-and-break" | "prune-at-final"
};

struct PruneTrace {
  PruneConfig cfg;
  std::string provider;
  int orig_w = 0, orig_h = 0;
  int levels = 0;          // pyramid depth P
  int terminal_level = 0;
  bool depth_clamped = false;
  int thumb_tokens = 0;
  std::vector<IterationTrace> iterations;
  std::vector<RetainedToken> retained;  // level-ascending, stream order

  /// Non-newline retained tokens (the budgeted count).
  int retained_hr_count() const;
};

/// Algorithm: walk the pyramid coarse to fine. Per level: score, select the
/// top-alpha tokens, map them to next-level tiles. Descend onto those tiles;
/// stop early when they outnumber n_max (dynamic depth only), or at the
/// final level. The terminal selection is kept (select mode), or every
/// traversed level's selection is kept (concat mode). Thumbnail tokens and
/// newline delimiters are always retained.
PruneTrace run_prune(const ImagePyramid& pyr, AttentionProvider& provider,
                     const PruneConfig& cfg);

/// True when two traces took identical decisions: same iterations, branches,
/// selections, tiles, and retained set. Score statistics are ignored, so
/// rank-preserving transforms of the provider compare equal.
bool same_decisions(const PruneTrace& a, const PruneTrace& b);

ojson trace_json(const PruneTrace& trace);
PruneTrace trace_from_json(const ojson& j);

/// Terminal-level scores painted into original-image geometry, max side
/// max_side, normalized to 0..255.
RasterImage render_heatmap(const PyramidGeometry& geom, const LevelTokens& lt,
                           const std::vector<double>& scorable_scores,
                           const TokenLayout& layout, int max_side = 1024);

}  // namespace pyrfocus
