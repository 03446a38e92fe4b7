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

#include "pyrfocus/matrix.hpp"

namespace pyrfocus {

// Layer indexing convention: public APIs that take "layer index i" use
// 1-based indices (weights of layer 1 are the first applied), matching how
// teacher/student pairings like [1,5,11,14] are written in configs. Head
// indices are 0-based.

struct StackConfig {
  int layers = 8;
  int heads = 4;
  int model_dim = 32;
  int ff_dim = 64;
  int max_seq = 4096;
  std::uint64_t seed = 1;

  int head_dim() const { return model_dim / heads; }
  void validate() const;
};

/// Weights of one pre-norm decoder layer. Query/key/value projections are
/// stored as d x d matrices; head h owns the column block
/// [h*head_dim, (h+1)*head_dim).
struct LayerWeights {
  Matrix wq, wk, wv;  // d x d
  Matrix wo;          // d x d, applied to the concatenated head outputs
  Matrix w1;          // d x ff
  Matrix w2;          // ff x d
  std::vector<double> g_attn;  // RMSNorm gain before attention, size d
  std::vector<double> g_ff;    // RMSNorm gain before the feed-forward, size d
};

struct DecoderStack {
  StackConfig cfg;
  std::vector<LayerWeights> layers;
};

/// Fresh stack with matrices drawn uniform(-1/sqrt d, 1/sqrt d) from the
/// seeded generator; norm gains start at 1.
DecoderStack make_stack(const StackConfig& cfg);

/// Embedded input sequence, segmented [sys][vision lr, hr][text]. Turn
/// boundaries are absolute indices of last-text-tokens (j >= 1 of them),
/// all inside the text segment.
struct TokenSequence {
  Matrix emb;  // n x d
  int n_sys = 0;
  int n_lr = 0;
  int n_hr = 0;
  int n_txt = 0;
  std::vector<int> turns;

  int n() const { return n_sys + n_lr + n_hr + n_txt; }
  int n_vis() const { return n_lr + n_hr; }
  int vis_begin() const { return n_sys; }
  int vis_end() const { return n_sys + n_vis(); }
  int txt_begin() const { return vis_end(); }
  void validate(int model_dim) const;
};

/// Attention rows from every turn-boundary token to all vision tokens, for
/// every (layer, head). Layout [layer][head][turn][vision column], layer and
/// head 0-based here (storage order, not config notation).
struct AttentionRecord {
  int layers = 0, heads = 0, j = 0, n_v = 0;
  std::vector<double> data;

  AttentionRecord() = default;
  AttentionRecord(int L, int H, int J, int NV)
      : layers(L), heads(H), j(J), n_v(NV),
        data(static_cast<std::size_t>(L) * H * J * NV, 0.0) {}

  std::size_t index(int l, int h, int r, int c) const {
    return ((static_cast<std::size_t>(l) * heads + h) * j + r) * n_v + c;
  }
  double& at(int l, int h, int r, int c) { return data[index(l, h, r, c)]; }
  double at(int l, int h, int r, int c) const { return data[index(l, h, r, c)]; }
  const double* row(int l, int h, int r) const {
    return data.data() + index(l, h, r, 0);
  }
  double* row(int l, int h, int r) { return data.data() + index(l, h, r, 0); }
};

/// Softmax(Q K^T / sqrt(d_head)) with optional causal mask. Masked entries
/// are exactly zero; each row sums to 1 over its unmasked prefix.
Matrix attention_scores(const Matrix& q, const Matrix& k, bool causal);

struct ForwardResult {
  Matrix out;           // n x d final hidden states
  AttentionRecord rec;  // all layers/heads, turn rows, vision columns
};

/// Streaming forward pass: O(n*d) memory per head, no n x n attention
/// materialization. Deterministic for fixed weights regardless of threads.
ForwardResult forward(const DecoderStack& stack, const TokenSequence& seq,
                      unsigned threads = 1);

/// Per-layer activations kept for reverse-mode differentiation.
struct LayerCache {
  Matrix x_in;             // layer input, n x d
  Matrix xn;               // RMSNorm(x_in) * g_attn
  std::vector<double> rms_attn;  // per-row rms of x_in
  std::vector<Matrix> q, k, v;   // per head, n x head_dim
  std::vector<Matrix> att;       // per head, n x n row-stochastic
  Matrix cat;              // concatenated head outputs, n x d
  Matrix h;                // x_in + cat * wo
  Matrix hn;               // RMSNorm(h) * g_ff
  std::vector<double> rms_ff;
  Matrix u;                // hn * w1, n x ff
  Matrix act;              // gelu(u)
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix out;
  AttentionRecord rec;
};

/// Forward pass that materializes per-head attention matrices; used by
/// training. Memory is O(layers * heads * n^2).
ForwardCache forward_cached(const DecoderStack& stack, const TokenSequence& seq);

/// Attention rows of one (layer, head) extracted by running the streaming
/// attention kernel with the value matrix replaced by identity basis vectors
/// on the vision columns: the kernel's output at a query row is then the
/// attention row itself. layer is 1-based, head 0-based.
Matrix extract_rows_via_value_matrix(const DecoderStack& stack,
                                     const TokenSequence& seq, int layer,
                                     int head);

/// Input hidden states entering layer `layer` (1-based); layer = M+1 gives
/// the final output. Exposed for tests that compare intermediate taps.
Matrix layer_input(const DecoderStack& stack, const TokenSequence& seq,
                   int layer);

/// Deep-copy teacher layers m_1..m_R (1-based, strictly increasing) into a
/// fresh student stack.
DecoderStack init_student_from_teacher(const DecoderStack& teacher,
                                       const std::vector<int>& indices);

/// Gradient container shaped like the stack's weights.
struct StackGrads {
  std::vector<LayerWeights> layers;
};
StackGrads zero_grads(const DecoderStack& stack);

/// Reverse-mode sweep. rec_grad holds dLoss/d(record entry) for every
/// (layer, head, turn row, vision column); entries for undistilled layers are
/// zero. Embeddings are constants. Throws on non-finite intermediates,
/// naming the layer and head.
StackGrads backward_through_stack(const DecoderStack& stack,
                                  const ForwardCache& cache,
                                  const TokenSequence& seq,
                                  const AttentionRecord& rec_grad);

/// Flat binary checkpoint, magic "TWTS", with a JSON sidecar (same path +
/// ".json") listing tensor names and shapes.
void save_checkpoint(const std::string& path, const DecoderStack& stack);
DecoderStack load_checkpoint(const std::string& path);

}  // namespace pyrfocus
