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
#include <memory>
#include <string>
#include <vector>

#include "pyrfocus/jsonio.hpp"
#include "pyrfocus/layout.hpp"
#include "pyrfocus/toyattn.hpp"

namespace pyrfocus {

/// Scoring backend for the selection loop. Returns one nonnegative score per
/// entry of tokens.scorable, in that order; newline tokens are never scored.
class AttentionProvider {
 public:
  virtual ~AttentionProvider() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> scores(const ImagePyramid& pyr,
                                     const LevelTokens& tokens,
                                     const TokenLayout& layout) = 0;
};

/// Heat field over original-image coordinates, read from JSON:
/// {"bumps": [{"x","y","sigma","amp"}], "rects": [{"x0","y0","x1","y1",
/// "amp","falloff"}]}. A token's score is the field sampled at its center:
/// bumps are isotropic gaussians; rects score amp inside, and decay with a
/// gaussian of width falloff on the outside (0 = hard indicator).
class SyntheticProvider : public AttentionProvider {
 public:
  explicit SyntheticProvider(const ojson& heat_spec);
  std::string name() const override { return "oracle"; }
  std::vector<double> scores(const ImagePyramid& pyr, const LevelTokens& tokens,
                             const TokenLayout& layout) override;

  /// Field value at an original-image point.
  double heat_at(double x, double y) const;

 private:
  struct Bump {
    double x = 0, y = 0, sigma = 1, amp = 1;
  };
  struct Rect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0, amp = 1, falloff = 0;
  };
  std::vector<Bump> bumps_;
  std::vector<Rect> rects_;
};

/// Flat attention-map container mirroring the on-disk format.
struct AttnFile {
  std::uint32_t layers = 0, heads = 0, j = 0, n_v = 0;
  std::vector<float> data;  // [layer][head][row][col]

  float at(std::uint32_t l, std::uint32_t h, std::uint32_t r,
           std::uint32_t c) const {
    return data[((static_cast<std::size_t>(l) * heads + h) * j + r) * n_v + c];
  }
};

AttnFile read_attn(const std::string& path);
void write_attn(const std::string& path, const AttnFile& f);
/// Convenience export of a full record (f64 narrowed to f32).
void write_attn(const std::string& path, const AttentionRecord& rec);

/// Precomputed maps from disk, one file per pyramid level, named
/// "level_{p}.attn" inside dir. Each file must cover the full tile grid of
/// its level: n_v = n_tiles * s^2, columns in row-major tile order with s^2
/// row-major token slots per tile (no newline or thumbnail columns). The
/// provider reduces to the last layer's last row averaged over heads, then
/// subsets the columns of the currently encoded tiles.
class FileProvider : public AttentionProvider {
 public:
  explicit FileProvider(std::string dir);
  std::string name() const override { return "file"; }
  std::vector<double> scores(const ImagePyramid& pyr, const LevelTokens& tokens,
                             const TokenLayout& layout) override;

 private:
  std::string dir_;
};

struct RfmProviderConfig {
  int n_sys = 1;
  int n_txt = 2;
  std::uint64_t embed_seed = 7;
  unsigned threads = 1;
};

/// Desk-scale focus model: deterministic pixel embeddings fed through the
/// decoder stack, scored from the last layer's text-to-vision attention row,
/// head-averaged, extracted with the identity-value kernel. Token embeddings
/// are content (a seeded projection of the 4x4-downsampled gray patch) plus a
/// global position embedding of the token's normalized original-image center;
/// newline tokens use a fixed delimiter embedding.
class RfmProvider : public AttentionProvider {
 public:
  RfmProvider(DecoderStack stack, RfmProviderConfig cfg);
  std::string name() const override { return "rfm"; }
  std::vector<double> scores(const ImagePyramid& pyr, const LevelTokens& tokens,
                             const TokenLayout& layout) override;

  /// The embedded sequence the stack sees for one level; exposed so exports
  /// and tests can replay the exact input.
  TokenSequence build_sequence(const ImagePyramid& pyr,
                               const LevelTokens& tokens,
                               const TokenLayout& layout) const;

 private:
  DecoderStack stack_;
  RfmProviderConfig cfg_;
  Matrix content_proj_;  // 16 x d
  Matrix pos_proj_;      // 2 x d
  std::vector<double> newline_vec_, sys_vec_, txt_vec_, query_vec_;

  std::vector<double> embed_patch(const RasterImage& img, double x0, double y0,
                                  double x1, double y1, double pos_x,
                                  double pos_y) const;
};

/// Full-grid score map for one level (every tile encoded), written as a
/// 1x1x1xn_v file consumable by FileProvider. Scores for tiles the provider
/// was not asked about are zero.
void export_level_scores(const std::string& path, int n_tiles, int s,
                         const LevelTokens& tokens,
                         const std::vector<double>& scorable_scores,
                         const PyramidGeometry& geom);

}  // namespace pyrfocus
