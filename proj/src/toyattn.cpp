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

#include "pyrfocus/toyattn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "pyrfocus/jsonio.hpp"
#include "pyrfocus/threadpool.hpp"

namespace pyrfocus {

namespace {

constexpr double kRmsEps = 1e-12;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// y_i = x_i * g_i / rms(x); returns per-row rms values.
std::vector<double> rmsnorm(const Matrix& x, const std::vector<double>& g,
                            Matrix& out) {
  out = Matrix(x.rows, x.cols);
  std::vector<double> rms(static_cast<std::size_t>(x.rows));
  for (int i = 0; i < x.rows; ++i) {
    double ss = 0;
    for (int j = 0; j < x.cols; ++j) ss += x(i, j) * x(i, j);
    double r = std::sqrt(ss / x.cols + kRmsEps);
    rms[static_cast<std::size_t>(i)] = r;
    for (int j = 0; j < x.cols; ++j) out(i, j) = x(i, j) * g[static_cast<std::size_t>(j)] / r;
  }
  return rms;
}

// Reverse of rmsnorm: accumulates into dx and dg given dy.
void rmsnorm_backward(const Matrix& x, const std::vector<double>& g,
                      const std::vector<double>& rms, const Matrix& dy,
                      Matrix& dx, std::vector<double>& dg) {
  int d = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    double r = rms[static_cast<std::size_t>(i)];
    double dot = 0;
    for (int j = 0; j < d; ++j) dot += dy(i, j) * g[static_cast<std::size_t>(j)] * x(i, j);
    double coef = dot / (d * r * r * r);
    for (int j = 0; j < d; ++j) {
      dx(i, j) += dy(i, j) * g[static_cast<std::size_t>(j)] / r - x(i, j) * coef;
      dg[static_cast<std::size_t>(j)] += dy(i, j) * x(i, j) / r;
    }
  }
}

// Column block of head h from a d x d projection applied to xn.
Matrix head_project(const Matrix& xn, const Matrix& w, int head, int head_dim) {
  Matrix out(xn.rows, head_dim);
  int off = head * head_dim;
  for (int i = 0; i < xn.rows; ++i)
    for (int k = 0; k < xn.cols; ++k) {
      double v = xn(i, k);
      if (v == 0.0) continue;
      for (int j = 0; j < head_dim; ++j) out(i, j) += v * w(k, off + j);
    }
  return out;
}

void fill_uniform(Matrix& m, std::mt19937_64& rng, double lim) {
  std::uniform_real_distribution<double> dist(-lim, lim);
  for (auto& v : m.a) v = dist(rng);
}

}  // namespace

void StackConfig::validate() const {
  if (layers < 1 || heads < 1 || model_dim < 1 || ff_dim < 1 || max_seq < 1)
    throw UserError("stack config: non-positive dimension");
  if (model_dim % heads != 0)
    throw UserError("stack config: model_dim must be divisible by heads");
}

void TokenSequence::validate(int model_dim) const {
  if (n_sys < 0 || n_lr < 0 || n_hr < 0 || n_txt < 1)
    throw UserError("sequence: bad segment counts (need at least one text token)");
  if (emb.rows != n() || emb.cols != model_dim)
    throw UserError("sequence: embedding shape mismatch");
  if (turns.empty()) throw UserError("sequence: need at least one turn boundary");
  int prev = -1;
  for (int t : turns) {
    if (t < txt_begin() || t >= n() || t <= prev)
      throw UserError("sequence: turn boundaries must be increasing text indices");
    prev = t;
  }
}

DecoderStack make_stack(const StackConfig& cfg) {
  cfg.validate();
  DecoderStack s;
  s.cfg = cfg;
  std::mt19937_64 rng(cfg.seed);
  double lim = 1.0 / std::sqrt(static_cast<double>(cfg.model_dim));
  int d = cfg.model_dim, f = cfg.ff_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    LayerWeights w;
    w.wq = Matrix(d, d);
    w.wk = Matrix(d, d);
    w.wv = Matrix(d, d);
    w.wo = Matrix(d, d);
    w.w1 = Matrix(d, f);
    w.w2 = Matrix(f, d);
    fill_uniform(w.wq, rng, lim);
    fill_uniform(w.wk, rng, lim);
    fill_uniform(w.wv, rng, lim);
    fill_uniform(w.wo, rng, lim);
    fill_uniform(w.w1, rng, lim);
    fill_uniform(w.w2, rng, lim);
    w.g_attn.assign(static_cast<std::size_t>(d), 1.0);
    w.g_ff.assign(static_cast<std::size_t>(d), 1.0);
    s.layers.push_back(std::move(w));
  }
  return s;
}

Matrix attention_scores(const Matrix& q, const Matrix& k, bool causal) {
  if (q.cols != k.cols) throw std::runtime_error("attention_scores: dim mismatch");
  double inv = 1.0 / std::sqrt(static_cast<double>(q.cols));
  Matrix out(q.rows, k.rows);
  for (int i = 0; i < q.rows; ++i) {
    int limit = causal ? i + 1 : k.rows;
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> logit(static_cast<std::size_t>(limit));
    for (int j = 0; j < limit; ++j) {
      double l = 0;
      for (int c = 0; c < q.cols; ++c) l += q(i, c) * k(j, c);
      l *= inv;
      logit[static_cast<std::size_t>(j)] = l;
      m = std::max(m, l);
    }
    double s = 0;
    for (int j = 0; j < limit; ++j) {
      double e = std::exp(logit[static_cast<std::size_t>(j)] - m);
      out(i, j) = e;
      s += e;
    }
    for (int j = 0; j < limit; ++j) out(i, j) /= s;
  }
  return out;
}

namespace {

// One streaming causal attention pass for a single head: fills out (n x
// head_dim) with online-softmax accumulation, never materializing n x n
// state.
void stream_head(const Matrix& q, const Matrix& k, const Matrix& v,
                 Matrix& out, unsigned threads) {
  const int n = q.rows, dh = q.cols;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t ii) {
    int i = static_cast<int>(ii);
    double m = -std::numeric_limits<double>::infinity();
    double s = 0;
    std::vector<double> acc(static_cast<std::size_t>(dh), 0.0);
    for (int j = 0; j <= i; ++j) {
      double l = 0;
      for (int c = 0; c < dh; ++c) l += q(i, c) * k(j, c);
      l *= inv;
      double m_new = std::max(m, l);
      double scale = std::exp(m - m_new);  // exp(-inf) == 0 on first step
      double p = std::exp(l - m_new);
      s = s * scale + p;
      for (int c = 0; c < dh; ++c)
        acc[static_cast<std::size_t>(c)] = acc[static_cast<std::size_t>(c)] * scale + p * v(j, c);
      m = m_new;
    }
    for (int c = 0; c < dh; ++c) out(i, c) = acc[static_cast<std::size_t>(c)] / s;
  });
}

// Direct softmax of one query row, sliced to [col_begin, col_end).
void record_row(const Matrix& q, const Matrix& k, int qi, int col_begin,
                int col_end, double* dst) {
  const int dh = q.cols;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> logit(static_cast<std::size_t>(qi + 1));
  double m = -std::numeric_limits<double>::infinity();
  for (int j = 0; j <= qi; ++j) {
    double l = 0;
    for (int c = 0; c < dh; ++c) l += q(qi, c) * k(j, c);
    l *= inv;
    logit[static_cast<std::size_t>(j)] = l;
    m = std::max(m, l);
  }
  double s = 0;
  for (int j = 0; j <= qi; ++j) s += std::exp(logit[static_cast<std::size_t>(j)] - m);
  for (int c = col_begin; c < col_end; ++c)
    dst[c - col_begin] =
        c <= qi ? std::exp(logit[static_cast<std::size_t>(c)] - m) / s : 0.0;
}

struct LayerStep {
  Matrix x_out;
  // per-head q/k for record extraction at this layer
  std::vector<Matrix> q, k;
  Matrix xn;
};

LayerStep run_layer(const DecoderStack& stack, const Matrix& x, int l,
                    unsigned threads) {
  const StackConfig& cfg = stack.cfg;
  const LayerWeights& w = stack.layers[static_cast<std::size_t>(l)];
  const int n = x.rows, d = cfg.model_dim, dh = cfg.head_dim();

  LayerStep st;
  rmsnorm(x, w.g_attn, st.xn);

  Matrix cat(n, d);
  st.q.resize(static_cast<std::size_t>(cfg.heads));
  st.k.resize(static_cast<std::size_t>(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h) {
    st.q[static_cast<std::size_t>(h)] = head_project(st.xn, w.wq, h, dh);
    st.k[static_cast<std::size_t>(h)] = head_project(st.xn, w.wk, h, dh);
    Matrix v = head_project(st.xn, w.wv, h, dh);
    Matrix ho(n, dh);
    stream_head(st.q[static_cast<std::size_t>(h)], st.k[static_cast<std::size_t>(h)], v, ho, threads);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < dh; ++c) cat(i, h * dh + c) = ho(i, c);
  }

  Matrix hres = matmul(cat, w.wo);
  add_inplace(hres, x);

  Matrix hn;
  rmsnorm(hres, w.g_ff, hn);
  Matrix u = matmul(hn, w.w1);
  Matrix act(u.rows, u.cols);
  for (std::size_t i = 0; i < u.a.size(); ++i) act.a[i] = gelu(u.a[i]);
  st.x_out = matmul(act, w.w2);
  add_inplace(st.x_out, hres);
  return st;
}

}  // namespace

ForwardResult forward(const DecoderStack& stack, const TokenSequence& seq,
                      unsigned threads) {
  stack.cfg.validate();
  seq.validate(stack.cfg.model_dim);
  if (seq.n() > stack.cfg.max_seq)
    throw UserError("sequence length exceeds configured max_seq");

  const int J = static_cast<int>(seq.turns.size());
  ForwardResult res;
  res.rec = AttentionRecord(stack.cfg.layers, stack.cfg.heads, J, seq.n_vis());

  Matrix x = seq.emb;
  for (int l = 0; l < stack.cfg.layers; ++l) {
    LayerStep st = run_layer(stack, x, l, threads);
    for (int h = 0; h < stack.cfg.heads; ++h)
      for (int r = 0; r < J; ++r)
        record_row(st.q[static_cast<std::size_t>(h)], st.k[static_cast<std::size_t>(h)],
                   seq.turns[static_cast<std::size_t>(r)], seq.vis_begin(),
                   seq.vis_end(), res.rec.row(l, h, r));
    x = std::move(st.x_out);
  }
  res.out = std::move(x);
  return res;
}

ForwardCache forward_cached(const DecoderStack& stack, const TokenSequence& seq) {
  stack.cfg.validate();
  seq.validate(stack.cfg.model_dim);
  if (seq.n() > stack.cfg.max_seq)
    throw UserError("sequence length exceeds configured max_seq");

  const StackConfig& cfg = stack.cfg;
  const int n = seq.n(), d = cfg.model_dim, dh = cfg.head_dim();
  const int J = static_cast<int>(seq.turns.size());

  ForwardCache fc;
  fc.rec = AttentionRecord(cfg.layers, cfg.heads, J, seq.n_vis());
  Matrix x = seq.emb;

  for (int l = 0; l < cfg.layers; ++l) {
    const LayerWeights& w = stack.layers[static_cast<std::size_t>(l)];
    LayerCache lc;
    lc.x_in = x;
    lc.rms_attn = rmsnorm(lc.x_in, w.g_attn, lc.xn);

    lc.q.resize(static_cast<std::size_t>(cfg.heads));
    lc.k.resize(static_cast<std::size_t>(cfg.heads));
    lc.v.resize(static_cast<std::size_t>(cfg.heads));
    lc.att.resize(static_cast<std::size_t>(cfg.heads));
    lc.cat = Matrix(n, d);
    for (int h = 0; h < cfg.heads; ++h) {
      auto hs = static_cast<std::size_t>(h);
      lc.q[hs] = head_project(lc.xn, w.wq, h, dh);
      lc.k[hs] = head_project(lc.xn, w.wk, h, dh);
      lc.v[hs] = head_project(lc.xn, w.wv, h, dh);
      lc.att[hs] = attention_scores(lc.q[hs], lc.k[hs], true);
      Matrix ho = matmul(lc.att[hs], lc.v[hs]);
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < dh; ++c) lc.cat(i, h * dh + c) = ho(i, c);
      for (int r = 0; r < J; ++r) {
        int t = seq.turns[static_cast<std::size_t>(r)];
        for (int c = 0; c < seq.n_vis(); ++c)
          fc.rec.at(l, h, r, c) = lc.att[hs](t, seq.vis_begin() + c);
      }
    }

    lc.h = matmul(lc.cat, w.wo);
    add_inplace(lc.h, lc.x_in);
    lc.rms_ff = rmsnorm(lc.h, w.g_ff, lc.hn);
    lc.u = matmul(lc.hn, w.w1);
    lc.act = Matrix(lc.u.rows, lc.u.cols);
    for (std::size_t i = 0; i < lc.u.a.size(); ++i) lc.act.a[i] = gelu(lc.u.a[i]);
    x = matmul(lc.act, w.w2);
    add_inplace(x, lc.h);
    fc.layers.push_back(std::move(lc));
  }
  fc.out = std::move(x);
  return fc;
}

Matrix layer_input(const DecoderStack& stack, const TokenSequence& seq,
                   int layer) {
  stack.cfg.validate();
  seq.validate(stack.cfg.model_dim);
  if (layer < 1 || layer > stack.cfg.layers + 1)
    throw UserError("layer index out of range");
  Matrix x = seq.emb;
  for (int l = 0; l < layer - 1; ++l) x = run_layer(stack, x, l, 1).x_out;
  return x;
}

Matrix extract_rows_via_value_matrix(const DecoderStack& stack,
                                     const TokenSequence& seq, int layer,
                                     int head) {
  if (layer < 1 || layer > stack.cfg.layers || head < 0 ||
      head >= stack.cfg.heads)
    throw UserError("layer/head out of range");
  Matrix x = layer_input(stack, seq, layer);
  const LayerWeights& w = stack.layers[static_cast<std::size_t>(layer - 1)];
  Matrix xn;
  rmsnorm(x, w.g_attn, xn);
  const int dh = stack.cfg.head_dim();
  Matrix q = head_project(xn, w.wq, head, dh);
  Matrix k = head_project(xn, w.wk, head, dh);

  const int vb = seq.vis_begin(), ve = seq.vis_end(), nv = seq.n_vis();
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix rows(static_cast<int>(seq.turns.size()), nv);

  // Flash-style kernel: V is the identity basis over vision positions, so
  // the output accumulator collapses to the attention row itself.
  for (std::size_t r = 0; r < seq.turns.size(); ++r) {
    int t = seq.turns[r];
    double m = -std::numeric_limits<double>::infinity();
    double s = 0;
    std::vector<double> acc(static_cast<std::size_t>(nv), 0.0);
    for (int j = 0; j <= t; ++j) {
      double l = 0;
      for (int c = 0; c < dh; ++c) l += q(t, c) * k(j, c);
      l *= inv;
      double m_new = std::max(m, l);
      double scale = std::exp(m - m_new);
      double p = std::exp(l - m_new);
      s = s * scale + p;
      for (auto& a : acc) a *= scale;
      if (j >= vb && j < ve) acc[static_cast<std::size_t>(j - vb)] += p;
      m = m_new;
    }
    for (int c = 0; c < nv; ++c) rows(static_cast<int>(r), c) = acc[static_cast<std::size_t>(c)] / s;
  }
  return rows;
}

DecoderStack init_student_from_teacher(const DecoderStack& teacher,
                                       const std::vector<int>& indices) {
  if (indices.empty()) throw UserError("empty layer index list");
  int prev = 0;
  for (int m : indices) {
    if (m <= prev || m > teacher.cfg.layers)
      throw UserError("layer indices must be strictly increasing and within 1..M");
    prev = m;
  }
  DecoderStack s;
  s.cfg = teacher.cfg;
  s.cfg.layers = static_cast<int>(indices.size());
  for (int m : indices)
    s.layers.push_back(teacher.layers[static_cast<std::size_t>(m - 1)]);
  return s;
}

StackGrads zero_grads(const DecoderStack& stack) {
  StackGrads g;
  int d = stack.cfg.model_dim, f = stack.cfg.ff_dim;
  for (int l = 0; l < stack.cfg.layers; ++l) {
    LayerWeights w;
    w.wq = Matrix(d, d);
    w.wk = Matrix(d, d);
    w.wv = Matrix(d, d);
    w.wo = Matrix(d, d);
    w.w1 = Matrix(d, f);
    w.w2 = Matrix(f, d);
    w.g_attn.assign(static_cast<std::size_t>(d), 0.0);
    w.g_ff.assign(static_cast<std::size_t>(d), 0.0);
    g.layers.push_back(std::move(w));
  }
  return g;
}

StackGrads backward_through_stack(const DecoderStack& stack,
                                  const ForwardCache& cache,
                                  const TokenSequence& seq,
                                  const AttentionRecord& rec_grad) {
  const StackConfig& cfg = stack.cfg;
  if (rec_grad.layers != cfg.layers || rec_grad.heads != cfg.heads ||
      rec_grad.j != static_cast<int>(seq.turns.size()) ||
      rec_grad.n_v != seq.n_vis())
    throw std::runtime_error("backward: record gradient shape mismatch");

  const int n = seq.n(), d = cfg.model_dim, dh = cfg.head_dim();
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  StackGrads grads = zero_grads(stack);
  Matrix dx(n, d);  // gradient w.r.t. the current layer's output

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const LayerWeights& w = stack.layers[static_cast<std::size_t>(l)];
    const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
    LayerWeights& gw = grads.layers[static_cast<std::size_t>(l)];

    // x_out = h + gelu(hn w1) w2
    Matrix dh_res = dx;  // residual branch
    Matrix dact = matmul(dx, transpose(w.w2));
    add_inplace(gw.w2, matmul(transpose(lc.act), dx));
    Matrix du(n, cfg.ff_dim);
    for (std::size_t i = 0; i < du.a.size(); ++i)
      du.a[i] = dact.a[i] * gelu_grad(lc.u.a[i]);
    add_inplace(gw.w1, matmul(transpose(lc.hn), du));
    Matrix dhn = matmul(du, transpose(w.w1));
    rmsnorm_backward(lc.h, w.g_ff, lc.rms_ff, dhn, dh_res, gw.g_ff);

    // h = x_in + cat wo
    Matrix dx_in = dh_res;
    Matrix dcat = matmul(dh_res, transpose(w.wo));
    add_inplace(gw.wo, matmul(transpose(lc.cat), dh_res));

    Matrix dxn(n, d);
    for (int h = 0; h < cfg.heads; ++h) {
      auto hs = static_cast<std::size_t>(h);
      const Matrix& A = lc.att[hs];
      Matrix dhead(n, dh);
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < dh; ++c) dhead(i, c) = dcat(i, h * dh + c);

      // dA from the output path (causal entries only; A is zero elsewhere)
      Matrix dA(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
          double v = 0;
          for (int c = 0; c < dh; ++c) v += dhead(i, c) * lc.v[hs](j, c);
          dA(i, j) = v;
        }
      // dA from the recorded rows
      for (int r = 0; r < rec_grad.j; ++r) {
        int t = seq.turns[static_cast<std::size_t>(r)];
        const double* g = rec_grad.row(l, h, r);
        for (int c = 0; c < rec_grad.n_v; ++c)
          dA(t, seq.vis_begin() + c) += g[c];
      }

      Matrix dv = matmul(transpose(A), dhead);

      // softmax backward, rows independently
      Matrix dL(n, n);
      for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j <= i; ++j) s += dA(i, j) * A(i, j);
        for (int j = 0; j <= i; ++j) dL(i, j) = A(i, j) * (dA(i, j) - s);
      }

      Matrix dq(n, dh), dk(n, dh);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
          double g = dL(i, j) * inv;
          if (g == 0.0) continue;
          for (int c = 0; c < dh; ++c) {
            dq(i, c) += g * lc.k[hs](j, c);
            dk(j, c) += g * lc.q[hs](i, c);
          }
        }

      if (!all_finite(dq) || !all_finite(dk) || !all_finite(dv))
        throw std::runtime_error("backward: non-finite gradient at layer " +
                                 std::to_string(l + 1) + " head " +
                                 std::to_string(h));

      // accumulate projection grads into the head's column block
      for (int i = 0; i < n; ++i)
        for (int k2 = 0; k2 < d; ++k2) {
          double xv = lc.xn(i, k2);
          if (xv == 0.0) continue;
          for (int c = 0; c < dh; ++c) {
            gw.wq(k2, h * dh + c) += xv * dq(i, c);
            gw.wk(k2, h * dh + c) += xv * dk(i, c);
            gw.wv(k2, h * dh + c) += xv * dv(i, c);
          }
        }
      // dxn += dq Wq_h^T + dk Wk_h^T + dv Wv_h^T
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < dh; ++c) {
          double a = dq(i, c), b = dk(i, c), vv = dv(i, c);
          for (int k2 = 0; k2 < d; ++k2)
            dxn(i, k2) += a * w.wq(k2, h * dh + c) + b * w.wk(k2, h * dh + c) +
                          vv * w.wv(k2, h * dh + c);
        }
    }

    rmsnorm_backward(lc.x_in, w.g_attn, lc.rms_attn, dxn, dx_in, gw.g_attn);
    dx = std::move(dx_in);
  }
  return grads;
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_tensor(std::ostream& out, const std::vector<double>& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}
void read_tensor(std::istream& in, std::vector<double>& t) {
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, const DecoderStack& stack) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path);
  out.write("TWTS", 4);
  write_u32(out, 1);  // version
  write_u32(out, static_cast<std::uint32_t>(stack.cfg.layers));
  write_u32(out, static_cast<std::uint32_t>(stack.cfg.heads));
  write_u32(out, static_cast<std::uint32_t>(stack.cfg.model_dim));
  write_u32(out, static_cast<std::uint32_t>(stack.cfg.ff_dim));
  write_u32(out, static_cast<std::uint32_t>(stack.cfg.max_seq));
  write_u64(out, stack.cfg.seed);

  ojson tensors = ojson::array();
  auto note = [&tensors](const std::string& name, int r, int c) {
    tensors.push_back({{"name", name}, {"shape", {r, c}}});
  };
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const LayerWeights& w = stack.layers[l];
    std::string prefix = "layer" + std::to_string(l + 1) + ".";
    write_tensor(out, w.wq.a);
    note(prefix + "wq", w.wq.rows, w.wq.cols);
    write_tensor(out, w.wk.a);
    note(prefix + "wk", w.wk.rows, w.wk.cols);
    write_tensor(out, w.wv.a);
    note(prefix + "wv", w.wv.rows, w.wv.cols);
    write_tensor(out, w.wo.a);
    note(prefix + "wo", w.wo.rows, w.wo.cols);
    write_tensor(out, w.w1.a);
    note(prefix + "w1", w.w1.rows, w.w1.cols);
    write_tensor(out, w.w2.a);
    note(prefix + "w2", w.w2.rows, w.w2.cols);
    write_tensor(out, w.g_attn);
    note(prefix + "g_attn", 1, static_cast<int>(w.g_attn.size()));
    write_tensor(out, w.g_ff);
    note(prefix + "g_ff", 1, static_cast<int>(w.g_ff.size()));
  }
  if (!out) throw UserError("short write to " + path);

  ojson side;
  side["magic"] = "TWTS";
  side["version"] = 1;
  side["config"] = {{"layers", stack.cfg.layers},
                    {"heads", stack.cfg.heads},
                    {"model_dim", stack.cfg.model_dim},
                    {"ff_dim", stack.cfg.ff_dim},
                    {"max_seq", stack.cfg.max_seq},
                    {"seed", stack.cfg.seed}};
  side["tensors"] = tensors;
  save_json(path + ".json", side);
}

DecoderStack load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TWTS", 4) != 0)
    throw UserError(path + ": not a TWTS checkpoint");
  if (read_u32(in) != 1) throw UserError(path + ": unsupported version");

  StackConfig cfg;
  cfg.layers = static_cast<int>(read_u32(in));
  cfg.heads = static_cast<int>(read_u32(in));
  cfg.model_dim = static_cast<int>(read_u32(in));
  cfg.ff_dim = static_cast<int>(read_u32(in));
  cfg.max_seq = static_cast<int>(read_u32(in));
  cfg.seed = read_u64(in);
  cfg.validate();

  DecoderStack s;
  s.cfg = cfg;
  int d = cfg.model_dim, f = cfg.ff_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    LayerWeights w;
    w.wq = Matrix(d, d);
    w.wk = Matrix(d, d);
    w.wv = Matrix(d, d);
    w.wo = Matrix(d, d);
    w.w1 = Matrix(d, f);
    w.w2 = Matrix(f, d);
    w.g_attn.assign(static_cast<std::size_t>(d), 0.0);
    w.g_ff.assign(static_cast<std::size_t>(d), 0.0);
    read_tensor(in, w.wq.a);
    read_tensor(in, w.wk.a);
    read_tensor(in, w.wv.a);
    read_tensor(in, w.wo.a);
    read_tensor(in, w.w1.a);
    read_tensor(in, w.w2.a);
    read_tensor(in, w.g_attn);
    read_tensor(in, w.g_ff);
    s.layers.push_back(std::move(w));
  }
  if (!in) throw UserError(path + ": truncated checkpoint");
  return s;
}

}  // namespace pyrfocus
