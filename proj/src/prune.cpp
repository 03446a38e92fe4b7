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

#include "pyrfocus/prune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace pyrfocus {

RetainMode retain_mode_from_string(const std::string& s) {
  if (s == "select") return RetainMode::select;
  if (s == "concat") return RetainMode::concat;
  throw UserError("unknown retain mode: " + s);
}

DepthMode depth_mode_from_string(const std::string& s) {
  if (s == "dynamic") return DepthMode::dynamic;
  if (s == "fixed") return DepthMode::fixed;
  throw UserError("unknown depth mode: " + s);
}

std::string to_string(RetainMode m) {
  return m == RetainMode::select ? "select" : "concat";
}

std::string to_string(DepthMode m) {
  return m == DepthMode::dynamic ? "dynamic" : "fixed";
}

void PruneConfig::validate() const {
  if (!(alpha > 0) || !(alpha <= 1.0))
    throw UserError("prune: alpha must be in (0, 1]");
  if (n_max < 1) throw UserError("prune: n_max must be >= 1");
  if (depth_mode == DepthMode::fixed && fixed_layers < 2)
    throw UserError("prune: fixed depth needs >= 2 layers (thumbnail + one level)");
  layout.validate();
}

std::vector<int> top_alpha(const std::vector<double>& scores, double alpha) {
  if (scores.empty()) throw UserError("top_alpha: no scores");
  const int n = static_cast<int>(scores.size());
  int k = static_cast<int>(std::llround(alpha * n));
  k = std::clamp(k, 1, n);
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    double sa = scores[static_cast<std::size_t>(a)];
    double sb = scores[static_cast<std::size_t>(b)];
    return sa != sb ? sa > sb : a < b;
  });
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<TileId> map_tokens_to_tiles(const std::vector<int>& p_key,
                                        const LevelTokens& lt,
                                        const PyramidGeometry& geom,
                                        const TokenLayout& layout) {
  const int next = lt.level + 1;
  if (next > geom.P()) throw UserError("map_tokens_to_tiles: no finer level");
  std::set<std::pair<int, int>> cells;
  for (int idx : p_key) {
    if (idx < 0 || idx >= lt.n_hr())
      throw UserError("map_tokens_to_tiles: token index out of range");
    const HrToken& t = lt.tokens[static_cast<std::size_t>(idx)];
    if (t.newline) throw UserError("map_tokens_to_tiles: newline token selected");
    auto [cx, cy] = token_center(geom, layout, t);
    TileId id = tile_at_origin_point(geom, next, cx, cy);
    if (geom.tile(id).padding_only) continue;
    cells.emplace(id.row, id.col);
  }
  std::vector<TileId> out;
  out.reserve(cells.size());
  for (const auto& [r, c] : cells) out.push_back(TileId{next, r, c});
  return out;
}

int PruneTrace::retained_hr_count() const {
  int n = 0;
  for (const auto& t : retained) n += t.newline ? 0 : 1;
  return n;
}

namespace {

void append_retained(PruneTrace& trace, const LevelTokens& lt,
                     const std::vector<int>& selected) {
  std::vector<int> keep = selected;
  for (int i = 0; i < lt.n_hr(); ++i)
    if (lt.tokens[static_cast<std::size_t>(i)].newline) keep.push_back(i);
  std::sort(keep.begin(), keep.end());
  for (int idx : keep) {
    const HrToken& t = lt.tokens[static_cast<std::size_t>(idx)];
    RetainedToken r;
    r.newline = t.newline;
    r.level = lt.level;
    r.tile = t.tile;
    r.in_row = t.in_row;
    r.in_col = t.in_col;
    trace.retained.push_back(r);
  }
}

}  // namespace

PruneTrace run_prune(const ImagePyramid& pyr, AttentionProvider& provider,
                     const PruneConfig& cfg) {
  cfg.validate();
  const PyramidGeometry& geom = pyr.geom;
  const int P = geom.P();

  PruneTrace trace;
  trace.cfg = cfg;
  trace.provider = provider.name();
  trace.orig_w = geom.orig_w;
  trace.orig_h = geom.orig_h;
  trace.levels = P;
  trace.thumb_tokens = cfg.layout.thumb_tokens();

  int target = P;
  if (cfg.depth_mode == DepthMode::fixed) {
    target = cfg.fixed_layers - 1;  // one layer is the thumbnail
    if (target > P) {
      target = P;
      trace.depth_clamped = true;
    }
  }

  // History of traversed levels for concat retention.
  std::vector<std::pair<LevelTokens, std::vector<int>>> history;

  std::vector<TileId> encoded;
  {
    const LevelGeometry& lg = geom.level(1);
    for (const Tile& t : lg.tiles) encoded.push_back(TileId{1, t.row, t.col});
  }

  for (int p = 1;; ++p) {
    LevelTokens lt = make_level_tokens(geom, p, encoded, cfg.layout);
    std::vector<double> scores = provider.scores(pyr, lt, cfg.layout);
    if (scores.size() != lt.scorable.size())
      throw UserError("provider returned " + std::to_string(scores.size()) +
                      " scores for " + std::to_string(lt.scorable.size()) +
                      " scorable tokens");
    for (double v : scores)
      if (!(v >= 0)) throw UserError("provider returned a negative score");

    std::vector<int> sel_scorable = top_alpha(scores, cfg.alpha);

    IterationTrace it;
    it.level = p;
    it.n_tiles_encoded = static_cast<int>(lt.encoded.size());
    it.n_scored = static_cast<int>(scores.size());
    it.k = static_cast<int>(sel_scorable.size());
    auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
    it.score_min = *mn;
    it.score_max = *mx;
    it.score_sum = std::accumulate(scores.begin(), scores.end(), 0.0);
    it.all_zero = it.score_max == 0.0;
    double sel_sum = 0;
    it.selected_tokens.reserve(sel_scorable.size());
    for (int i : sel_scorable) {
      sel_sum += scores[static_cast<std::size_t>(i)];
      it.selected_tokens.push_back(lt.scorable[static_cast<std::size_t>(i)]);
    }
    it.selected_mass = it.score_sum > 0 ? sel_sum / it.score_sum : 0.0;

    bool final_level = p == target;
    if (!final_level) {
      it.key_tiles = map_tokens_to_tiles(it.selected_tokens, lt, geom, cfg.layout);
      bool over_budget = cfg.depth_mode == DepthMode::dynamic &&
                         static_cast<int>(it.key_tiles.size()) > cfg.n_max;
      it.branch = over_budget ? "prune-and-break" : "descend";
    } else {
      it.branch = "prune-at-final";
    }

    history.emplace_back(std::move(lt), it.selected_tokens);
    bool stop = it.branch != "descend";
    if (!stop) encoded = it.key_tiles;
    trace.iterations.push_back(std::move(it));
    if (stop) {
      trace.terminal_level = p;
      break;
    }
  }

  if (cfg.retain_mode == RetainMode::concat) {
    for (const auto& [lt, sel] : history) append_retained(trace, lt, sel);
  } else {
    const auto& [lt, sel] = history.back();
    append_retained(trace, lt, sel);
  }
  return trace;
}

bool same_decisions(const PruneTrace& a, const PruneTrace& b) {
  auto tiles_eq = [](const std::vector<TileId>& x, const std::vector<TileId>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i].level != y[i].level || x[i].row != y[i].row || x[i].col != y[i].col)
        return false;
    return true;
  };
  if (a.cfg.alpha != b.cfg.alpha || a.cfg.n_max != b.cfg.n_max ||
      a.cfg.retain_mode != b.cfg.retain_mode ||
      a.cfg.depth_mode != b.cfg.depth_mode ||
      a.cfg.fixed_layers != b.cfg.fixed_layers ||
      a.cfg.layout.s != b.cfg.layout.s || a.cfg.layout.s_th != b.cfg.layout.s_th)
    return false;
  if (a.orig_w != b.orig_w || a.orig_h != b.orig_h || a.levels != b.levels ||
      a.terminal_level != b.terminal_level ||
      a.depth_clamped != b.depth_clamped || a.thumb_tokens != b.thumb_tokens)
    return false;
  if (a.iterations.size() != b.iterations.size()) return false;
  for (std::size_t i = 0; i < a.iterations.size(); ++i) {
    const IterationTrace& x = a.iterations[i];
    const IterationTrace& y = b.iterations[i];
    if (x.level != y.level || x.n_tiles_encoded != y.n_tiles_encoded ||
        x.n_scored != y.n_scored || x.k != y.k || x.branch != y.branch ||
        x.selected_tokens != y.selected_tokens ||
        !tiles_eq(x.key_tiles, y.key_tiles))
      return false;
  }
  if (a.retained.size() != b.retained.size()) return false;
  for (std::size_t i = 0; i < a.retained.size(); ++i) {
    const RetainedToken& x = a.retained[i];
    const RetainedToken& y = b.retained[i];
    if (x.newline != y.newline || x.level != y.level || x.tile.row != y.tile.row ||
        x.tile.col != y.tile.col || x.in_row != y.in_row || x.in_col != y.in_col)
      return false;
  }
  return true;
}

namespace {

std::string tile_str(const TileId& id) {
  return "L" + std::to_string(id.level) + "/r" + std::to_string(id.row) +
         "_c" + std::to_string(id.col);
}

TileId parse_tile_str(const std::string& s) {
  TileId id;
  if (std::sscanf(s.c_str(), "L%d/r%d_c%d", &id.level, &id.row, &id.col) != 3)
    throw UserError("trace: bad tile id '" + s + "'");
  return id;
}

}  // namespace

ojson trace_json(const PruneTrace& trace) {
  ojson j;
  j["config"] = {{"alpha", sig9(trace.cfg.alpha)},
                 {"n_max", trace.cfg.n_max},
                 {"retain_mode", to_string(trace.cfg.retain_mode)},
                 {"depth_mode", to_string(trace.cfg.depth_mode)},
                 {"fixed_layers", trace.cfg.fixed_layers},
                 {"layout", {{"s", trace.cfg.layout.s}, {"s_th", trace.cfg.layout.s_th}}}};
  j["provider"] = trace.provider;
  j["original"] = {{"width", trace.orig_w}, {"height", trace.orig_h}};
  j["levels"] = trace.levels;
  j["terminal_level"] = trace.terminal_level;
  j["depth_clamped"] = trace.depth_clamped;
  j["thumbnail_tokens"] = trace.thumb_tokens;
  j["iterations"] = ojson::array();
  for (const IterationTrace& it : trace.iterations) {
    ojson ji;
    ji["level"] = it.level;
    ji["tiles_encoded"] = it.n_tiles_encoded;
    ji["n_scored"] = it.n_scored;
    ji["k"] = it.k;
    ji["all_zero"] = it.all_zero;
    ji["score_min"] = sig9(it.score_min);
    ji["score_max"] = sig9(it.score_max);
    ji["score_sum"] = sig9(it.score_sum);
    ji["selected_mass"] = sig9(it.selected_mass);
    ji["selected_tokens"] = it.selected_tokens;
    ojson tiles = ojson::array();
    for (const TileId& id : it.key_tiles) tiles.push_back(tile_str(id));
    ji["key_tiles"] = tiles;
    ji["branch"] = it.branch;
    j["iterations"].push_back(ji);
  }
  j["retained"] = ojson::array();
  for (const RetainedToken& t : trace.retained) {
    ojson jt;
    jt["newline"] = t.newline;
    jt["level"] = t.level;
    if (t.newline) {
      jt["grid_row"] = t.tile.row;
    } else {
      jt["tile"] = tile_str(t.tile);
      jt["in_row"] = t.in_row;
      jt["in_col"] = t.in_col;
    }
    j["retained"].push_back(jt);
  }
  return j;
}

PruneTrace trace_from_json(const ojson& j) {
  PruneTrace t;
  try {
    const auto& c = j.at("config");
    t.cfg.alpha = c.at("alpha").get<double>();
    t.cfg.n_max = c.at("n_max").get<int>();
    t.cfg.retain_mode = retain_mode_from_string(c.at("retain_mode").get<std::string>());
    t.cfg.depth_mode = depth_mode_from_string(c.at("depth_mode").get<std::string>());
    t.cfg.fixed_layers = c.at("fixed_layers").get<int>();
    t.cfg.layout.s = c.at("layout").at("s").get<int>();
    t.cfg.layout.s_th = c.at("layout").at("s_th").get<int>();
    t.provider = j.at("provider").get<std::string>();
    t.orig_w = j.at("original").at("width").get<int>();
    t.orig_h = j.at("original").at("height").get<int>();
    t.levels = j.at("levels").get<int>();
    t.terminal_level = j.at("terminal_level").get<int>();
    t.depth_clamped = j.at("depth_clamped").get<bool>();
    t.thumb_tokens = j.at("thumbnail_tokens").get<int>();
    for (const auto& ji : j.at("iterations")) {
      IterationTrace it;
      it.level = ji.at("level").get<int>();
      it.n_tiles_encoded = ji.at("tiles_encoded").get<int>();
      it.n_scored = ji.at("n_scored").get<int>();
      it.k = ji.at("k").get<int>();
      it.all_zero = ji.at("all_zero").get<bool>();
      it.score_min = ji.at("score_min").get<double>();
      it.score_max = ji.at("score_max").get<double>();
      it.score_sum = ji.at("score_sum").get<double>();
      it.selected_mass = ji.at("selected_mass").get<double>();
      it.selected_tokens = ji.at("selected_tokens").get<std::vector<int>>();
      for (const auto& ts : ji.at("key_tiles"))
        it.key_tiles.push_back(parse_tile_str(ts.get<std::string>()));
      it.branch = ji.at("branch").get<std::string>();
      t.iterations.push_back(std::move(it));
    }
    for (const auto& jt : j.at("retained")) {
      RetainedToken r;
      r.newline = jt.at("newline").get<bool>();
      r.level = jt.at("level").get<int>();
      if (r.newline) {
        r.tile = TileId{r.level, jt.at("grid_row").get<int>(), -1};
      } else {
        r.tile = parse_tile_str(jt.at("tile").get<std::string>());
        r.in_row = jt.at("in_row").get<int>();
        r.in_col = jt.at("in_col").get<int>();
      }
      t.retained.push_back(r);
    }
  } catch (const ojson::exception& e) {
    throw UserError(std::string("trace: ") + e.what());
  }
  return t;
}

RasterImage render_heatmap(const PyramidGeometry& geom, const LevelTokens& lt,
                           const std::vector<double>& scorable_scores,
                           const TokenLayout& layout, int max_side) {
  if (scorable_scores.size() != lt.scorable.size())
    throw UserError("heatmap: score count mismatch");
  if (max_side < 1) throw UserError("heatmap: max_side must be >= 1");
  double scale = std::min(1.0, static_cast<double>(max_side) /
                                   std::max(geom.orig_w, geom.orig_h));
  RasterImage img;
  img.width = std::max(1, static_cast<int>(std::lround(geom.orig_w * scale)));
  img.height = std::max(1, static_cast<int>(std::lround(geom.orig_h * scale)));
  img.channels = 1;
  img.data.assign(static_cast<std::size_t>(img.width) * img.height, 0);

  double mx = 0;
  for (double v : scorable_scores) mx = std::max(mx, v);
  if (mx == 0) return img;

  for (std::size_t i = 0; i < scorable_scores.size(); ++i) {
    const HrToken& t = lt.tokens[static_cast<std::size_t>(lt.scorable[i])];
    RectD r = token_footprint(geom, layout, t);
    int x0 = std::clamp(static_cast<int>(std::floor(r.x0 * scale)), 0, img.width);
    int x1 = std::clamp(static_cast<int>(std::ceil(r.x1 * scale)), 0, img.width);
    int y0 = std::clamp(static_cast<int>(std::floor(r.y0 * scale)), 0, img.height);
    int y1 = std::clamp(static_cast<int>(std::ceil(r.y1 * scale)), 0, img.height);
    unsigned char v = static_cast<unsigned char>(
        std::lround(255.0 * scorable_scores[i] / mx));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        unsigned char& px = img.data[static_cast<std::size_t>(y) * img.width + x];
        px = std::max(px, v);
      }
  }
  return img;
}

}  // namespace pyrfocus
