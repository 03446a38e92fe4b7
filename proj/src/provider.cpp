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

#include "pyrfocus/provider.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace pyrfocus {

namespace {

double get_num(const ojson& j, const char* key, double fallback,
               bool required = false) {
  if (!j.contains(key)) {
    if (required) throw UserError(std::string("heat spec: missing ") + key);
    return fallback;
  }
  if (!j[key].is_number()) throw UserError(std::string("heat spec: ") + key + " must be a number");
  return j[key].get<double>();
}

}  // namespace

SyntheticProvider::SyntheticProvider(const ojson& heat_spec) {
  if (!heat_spec.is_object()) throw UserError("heat spec: expected a JSON object");
  if (heat_spec.contains("bumps")) {
    for (const auto& b : heat_spec["bumps"]) {
      Bump bump;
      bump.x = get_num(b, "x", 0, true);
      bump.y = get_num(b, "y", 0, true);
      bump.sigma = get_num(b, "sigma", 1, true);
      bump.amp = get_num(b, "amp", 1.0);
      if (!(bump.sigma > 0)) throw UserError("heat spec: sigma must be > 0");
      if (!(bump.amp >= 0)) throw UserError("heat spec: amp must be >= 0");
      bumps_.push_back(bump);
    }
  }
  if (heat_spec.contains("rects")) {
    for (const auto& r : heat_spec["rects"]) {
      Rect rect;
      rect.x0 = get_num(r, "x0", 0, true);
      rect.y0 = get_num(r, "y0", 0, true);
      rect.x1 = get_num(r, "x1", 0, true);
      rect.y1 = get_num(r, "y1", 0, true);
      rect.amp = get_num(r, "amp", 1.0);
      rect.falloff = get_num(r, "falloff", 0.0);
      if (rect.x1 <= rect.x0 || rect.y1 <= rect.y0)
        throw UserError("heat spec: degenerate rect");
      if (!(rect.amp >= 0) || !(rect.falloff >= 0))
        throw UserError("heat spec: amp and falloff must be >= 0");
      rects_.push_back(rect);
    }
  }
  if (bumps_.empty() && rects_.empty())
    throw UserError("heat spec: needs at least one bump or rect");
}

double SyntheticProvider::heat_at(double x, double y) const {
  double v = 0;
  for (const Bump& b : bumps_) {
    double dx = x - b.x, dy = y - b.y;
    v += b.amp * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma));
  }
  for (const Rect& r : rects_) {
    double dx = std::max({r.x0 - x, 0.0, x - r.x1});
    double dy = std::max({r.y0 - y, 0.0, y - r.y1});
    if (dx == 0 && dy == 0) {
      v += r.amp;
    } else if (r.falloff > 0) {
      v += r.amp * std::exp(-(dx * dx + dy * dy) / (2 * r.falloff * r.falloff));
    }
  }
  return v;
}

std::vector<double> SyntheticProvider::scores(const ImagePyramid& pyr,
                                              const LevelTokens& tokens,
                                              const TokenLayout& layout) {
  std::vector<double> out;
  out.reserve(tokens.scorable.size());
  for (int idx : tokens.scorable) {
    auto [cx, cy] = token_center(pyr.geom, layout,
                                 tokens.tokens[static_cast<std::size_t>(idx)]);
    out.push_back(heat_at(cx, cy));
  }
  return out;
}

AttnFile read_attn(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ATTN", 4) != 0)
    throw UserError(path + ": not an attention-map file");
  auto read_u32 = [&]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  std::uint32_t version = read_u32();
  if (version != 1) throw UserError(path + ": unsupported version");
  AttnFile f;
  f.layers = read_u32();
  f.heads = read_u32();
  f.j = read_u32();
  f.n_v = read_u32();
  if (!in || f.layers == 0 || f.heads == 0 || f.j == 0 || f.n_v == 0)
    throw UserError(path + ": bad header");
  std::size_t n = static_cast<std::size_t>(f.layers) * f.heads * f.j * f.n_v;
  if (n > (1u << 30)) throw UserError(path + ": implausibly large map");
  f.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                      (static_cast<std::uint32_t>(b[1]) << 8) |
                      (static_cast<std::uint32_t>(b[2]) << 16) |
                      (static_cast<std::uint32_t>(b[3]) << 24);
    float v;
    std::memcpy(&v, &u, 4);
    f.data[i] = v;
  }
  if (!in) throw UserError(path + ": truncated payload");
  for (float v : f.data)
    if (!std::isfinite(v)) throw UserError(path + ": non-finite entry");
  return f;
}

void write_attn(const std::string& path, const AttnFile& f) {
  std::size_t n = static_cast<std::size_t>(f.layers) * f.heads * f.j * f.n_v;
  if (f.data.size() != n) throw UserError("attention map: size/header mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path);
  out.write("ATTN", 4);
  auto write_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  write_u32(1);
  write_u32(f.layers);
  write_u32(f.heads);
  write_u32(f.j);
  write_u32(f.n_v);
  for (float v : f.data) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                          static_cast<unsigned char>((u >> 8) & 0xff),
                          static_cast<unsigned char>((u >> 16) & 0xff),
                          static_cast<unsigned char>((u >> 24) & 0xff)};
    out.write(reinterpret_cast<char*>(b), 4);
  }
  if (!out) throw UserError("write failed for " + path);
}

void write_attn(const std::string& path, const AttentionRecord& rec) {
  AttnFile f;
  f.layers = static_cast<std::uint32_t>(rec.layers);
  f.heads = static_cast<std::uint32_t>(rec.heads);
  f.j = static_cast<std::uint32_t>(rec.j);
  f.n_v = static_cast<std::uint32_t>(rec.n_v);
  f.data.reserve(rec.data.size());
  for (double v : rec.data) f.data.push_back(static_cast<float>(v));
  write_attn(path, f);
}

FileProvider::FileProvider(std::string dir) : dir_(std::move(dir)) {}

std::vector<double> FileProvider::scores(const ImagePyramid& pyr,
                                         const LevelTokens& tokens,
                                         const TokenLayout& layout) {
  const LevelGeometry& lg = pyr.geom.level(tokens.level);
  const int s2 = layout.tile_tokens();
  const std::string path =
      dir_ + "/level_" + std::to_string(tokens.level) + ".attn";
  AttnFile f = read_attn(path);
  std::size_t want = static_cast<std::size_t>(lg.tiles.size()) * s2;
  if (f.n_v != want)
    throw UserError(path + ": expected " + std::to_string(want) +
                    " columns for this level, found " + std::to_string(f.n_v));

  // Reduce: last layer, last row, head average.
  std::vector<double> full(f.n_v, 0.0);
  for (std::uint32_t c = 0; c < f.n_v; ++c) {
    double acc = 0;
    for (std::uint32_t h = 0; h < f.heads; ++h)
      acc += f.at(f.layers - 1, h, f.j - 1, c);
    full[c] = acc / f.heads;
    if (full[c] < 0) throw UserError(path + ": negative score");
  }

  std::vector<double> out;
  out.reserve(tokens.scorable.size());
  for (const TileId& id : tokens.encoded) {
    std::size_t base = (static_cast<std::size_t>(id.row) * lg.n_w + id.col) *
                       static_cast<std::size_t>(s2);
    for (int t = 0; t < s2; ++t) out.push_back(full[base + t]);
  }
  return out;
}

RfmProvider::RfmProvider(DecoderStack stack, RfmProviderConfig cfg)
    : stack_(std::move(stack)), cfg_(cfg) {
  if (cfg_.n_sys < 0 || cfg_.n_txt < 1)
    throw UserError("rfm provider: need n_sys >= 0 and n_txt >= 1");
  const int d = stack_.cfg.model_dim;
  std::mt19937_64 rng(cfg_.embed_seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  content_proj_ = Matrix(16, d);
  for (auto& v : content_proj_.a) v = u(rng) / 4.0;  // 1/sqrt(16)
  pos_proj_ = Matrix(2, d);
  for (auto& v : pos_proj_.a) v = u(rng);
  auto vec = [&](double scale) {
    std::vector<double> v(static_cast<std::size_t>(d));
    for (auto& x : v) x = scale * u(rng);
    return v;
  };
  newline_vec_ = vec(0.5);
  sys_vec_ = vec(0.5);
  txt_vec_ = vec(0.5);
  query_vec_ = vec(1.0);
}

std::vector<double> RfmProvider::embed_patch(const RasterImage& img, double x0,
                                             double y0, double x1, double y1,
                                             double pos_x, double pos_y) const {
  int ix0 = std::clamp(static_cast<int>(std::lround(x0)), 0, img.width);
  int iy0 = std::clamp(static_cast<int>(std::lround(y0)), 0, img.height);
  int ix1 = std::clamp(static_cast<int>(std::lround(x1)), 0, img.width);
  int iy1 = std::clamp(static_cast<int>(std::lround(y1)), 0, img.height);
  const int d = stack_.cfg.model_dim;
  std::vector<double> e(static_cast<std::size_t>(d), 0.0);

  if (ix1 > ix0 && iy1 > iy0) {
    RasterImage patch = crop(img, ix0, iy0, ix1 - ix0, iy1 - iy0);
    RasterImage small = resize_bilinear(patch, 4, 4, cfg_.threads);
    double g[16];
    for (int p = 0; p < 16; ++p) {
      double acc = 0;
      for (int c = 0; c < small.channels; ++c)
        acc += small.data[static_cast<std::size_t>(p) * small.channels + c];
      g[p] = acc / (small.channels * 255.0);
    }
    for (int p = 0; p < 16; ++p)
      for (int c = 0; c < d; ++c) e[static_cast<std::size_t>(c)] += g[p] * content_proj_(p, c);
  }
  for (int c = 0; c < d; ++c)
    e[static_cast<std::size_t>(c)] +=
        pos_x * pos_proj_(0, c) + pos_y * pos_proj_(1, c);
  return e;
}

TokenSequence RfmProvider::build_sequence(const ImagePyramid& pyr,
                                          const LevelTokens& tokens,
                                          const TokenLayout& layout) const {
  const PyramidGeometry& geom = pyr.geom;
  const int d = stack_.cfg.model_dim;
  TokenSequence seq;
  seq.n_sys = cfg_.n_sys;
  seq.n_lr = layout.thumb_tokens();
  seq.n_hr = tokens.n_hr();
  seq.n_txt = cfg_.n_txt;
  seq.emb = Matrix(seq.n(), d);
  int row = 0;
  auto put = [&](const std::vector<double>& v) {
    for (int c = 0; c < d; ++c) seq.emb(row, c) = v[static_cast<std::size_t>(c)];
    ++row;
  };

  for (int i = 0; i < seq.n_sys; ++i) put(sys_vec_);

  // Thumbnail tokens: s_th x s_th cells over the thumbnail square. Cell
  // centers map back to original coordinates through the thumbnail scale.
  const RasterImage& th = pyr.thumbnail;
  double cell_th = static_cast<double>(th.width) / layout.s_th;
  double r_th = std::min(static_cast<double>(th.width) / geom.orig_w,
                         static_cast<double>(th.height) / geom.orig_h);
  for (int ir = 0; ir < layout.s_th; ++ir)
    for (int ic = 0; ic < layout.s_th; ++ic) {
      double x0 = ic * cell_th, y0 = ir * cell_th;
      double cx = std::clamp((x0 + cell_th / 2) / r_th, 0.0,
                             static_cast<double>(geom.orig_w));
      double cy = std::clamp((y0 + cell_th / 2) / r_th, 0.0,
                             static_cast<double>(geom.orig_h));
      put(embed_patch(th, x0, y0, x0 + cell_th, y0 + cell_th, cx / geom.orig_w,
                      cy / geom.orig_h));
    }

  const RasterImage& lvl = pyr.level_images[static_cast<std::size_t>(tokens.level - 1)];
  const double B = geom.cfg.tile_size;
  const double cell = B / layout.s;
  for (const HrToken& t : tokens.tokens) {
    if (t.newline) {
      put(newline_vec_);
      continue;
    }
    double x0 = t.tile.col * B + t.in_col * cell;
    double y0 = t.tile.row * B + t.in_row * cell;
    auto [cx, cy] = token_center(geom, layout, t);
    cx = std::clamp(cx, 0.0, static_cast<double>(geom.orig_w));
    cy = std::clamp(cy, 0.0, static_cast<double>(geom.orig_h));
    put(embed_patch(lvl, x0, y0, x0 + cell, y0 + cell, cx / geom.orig_w,
                    cy / geom.orig_h));
  }

  for (int i = 0; i < seq.n_txt - 1; ++i) put(txt_vec_);
  put(query_vec_);
  seq.turns = {seq.n() - 1};
  return seq;
}

std::vector<double> RfmProvider::scores(const ImagePyramid& pyr,
                                        const LevelTokens& tokens,
                                        const TokenLayout& layout) {
  TokenSequence seq = build_sequence(pyr, tokens, layout);
  if (seq.n() > stack_.cfg.max_seq)
    throw UserError("rfm provider: level needs " + std::to_string(seq.n()) +
                    " tokens, stack caps at " + std::to_string(stack_.cfg.max_seq) +
                    "; use a smaller token grid");
  const int H = stack_.cfg.heads;
  const int last = stack_.cfg.layers;
  Matrix avg;
  for (int h = 0; h < H; ++h) {
    Matrix rows = extract_rows_via_value_matrix(stack_, seq, last, h);
    if (h == 0) {
      avg = rows;
    } else {
      add_inplace(avg, rows);
    }
  }
  scale_inplace(avg, 1.0 / H);

  const int r = avg.rows - 1;  // last turn row
  std::vector<double> out;
  out.reserve(tokens.scorable.size());
  for (int idx : tokens.scorable)
    out.push_back(std::max(0.0, avg(r, seq.n_lr + idx)));
  return out;
}

void export_level_scores(const std::string& path, int n_tiles, int s,
                         const LevelTokens& tokens,
                         const std::vector<double>& scorable_scores,
                         const PyramidGeometry& geom) {
  if (scorable_scores.size() != tokens.scorable.size())
    throw UserError("export: score count mismatch");
  const LevelGeometry& lg = geom.level(tokens.level);
  AttnFile f;
  f.layers = 1;
  f.heads = 1;
  f.j = 1;
  f.n_v = static_cast<std::uint32_t>(n_tiles) * static_cast<std::uint32_t>(s * s);
  f.data.assign(f.n_v, 0.0f);
  for (std::size_t i = 0; i < tokens.scorable.size(); ++i) {
    const HrToken& t = tokens.tokens[static_cast<std::size_t>(tokens.scorable[i])];
    std::size_t tile_idx = static_cast<std::size_t>(t.tile.row) * lg.n_w + t.tile.col;
    std::size_t slot = tile_idx * static_cast<std::size_t>(s * s) +
                       static_cast<std::size_t>(t.in_row) * s + t.in_col;
    f.data[slot] = static_cast<float>(scorable_scores[i]);
  }
  write_attn(path, f);
}

}  // namespace pyrfocus
