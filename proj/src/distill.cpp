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

#include "pyrfocus/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace pyrfocus {

namespace {

constexpr double kLogEps = 1e-12;

// KL(p || q) between the renormalized positive parts of t and a over the
// column subset sel (nullptr = all n columns). Logs clamped at kLogEps.
double kl_row(const double* t, const double* a, int n,
              const std::vector<int>* sel) {
  double st = 0, sa = 0;
  int m = sel ? static_cast<int>(sel->size()) : n;
  for (int i = 0; i < m; ++i) {
    int c = sel ? (*sel)[static_cast<std::size_t>(i)] : i;
    st += t[c];
    sa += a[c];
  }
  if (st <= 0) return 0.0;
  double kl = 0;
  for (int i = 0; i < m; ++i) {
    int c = sel ? (*sel)[static_cast<std::size_t>(i)] : i;
    double p = t[c] / st;
    if (p <= 0) continue;
    double q = sa > 0 ? a[c] / sa : 0.0;
    kl += p * (std::log(std::max(p, kLogEps)) - std::log(std::max(q, kLogEps)));
  }
  return kl;
}

// d(kl_row)/d(a_c), scaled by w, accumulated into da (full-row indexing).
void kl_row_grad(const double* t, const double* a, int n,
                 const std::vector<int>* sel, double w, double* da) {
  double st = 0, sa = 0;
  int m = sel ? static_cast<int>(sel->size()) : n;
  for (int i = 0; i < m; ++i) {
    int c = sel ? (*sel)[static_cast<std::size_t>(i)] : i;
    st += t[c];
    sa += a[c];
  }
  if (st <= 0 || sa <= 0) return;  // flat (fully clamped) region
  double dot = 0;
  std::vector<double> g(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    int c = sel ? (*sel)[static_cast<std::size_t>(i)] : i;
    double p = t[c] / st;
    double q = a[c] / sa;
    if (p > 0 && q > kLogEps) g[static_cast<std::size_t>(i)] = -p / q;
    dot += g[static_cast<std::size_t>(i)] * q;
  }
  for (int i = 0; i < m; ++i) {
    int c = sel ? (*sel)[static_cast<std::size_t>(i)] : i;
    da[c] += w * (g[static_cast<std::size_t>(i)] - dot) / sa;
  }
}

std::vector<int> mask_indices(const std::vector<char>& mask) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(static_cast<int>(i));
  return idx;
}

}  // namespace

int LayerPairPlan::teacher_layer_for(int sl) const {
  for (std::size_t i = 0; i < student_indices.size(); ++i)
    if (student_indices[i] == sl) return teacher_indices[i];
  throw UserError("plan: student layer " + std::to_string(sl) + " not in plan");
}

void LayerPairPlan::validate(int teacher_layers) const {
  if (student_indices.empty() ||
      student_indices.size() != teacher_indices.size())
    throw UserError("plan: student/teacher index lists must be same-size, non-empty");
  for (std::size_t i = 0; i < student_indices.size(); ++i)
    if (student_indices[i] != static_cast<int>(i) + 1)
      throw UserError("plan: student_indices must enumerate student layers 1..R");
  int prev = 0;
  for (int m : teacher_indices) {
    if (m <= prev || m > teacher_layers)
      throw UserError("plan: teacher_indices must be strictly increasing within 1..M");
    prev = m;
  }
  if (R() >= teacher_layers)
    throw UserError("plan: student must be shallower than the teacher");
  if (distilled_pairs.empty())
    throw UserError("plan: need at least one distilled pair");
  prev = 0;
  for (int k : distilled_pairs) {
    if (k <= prev || k > R())
      throw UserError("plan: distilled_pairs must be increasing student layers");
    prev = k;
  }
}

void LossWeights::validate() const {
  if (!(lambda_hr >= 0) || !(lambda_mse >= 0) || !(lambda_kl >= 0))
    throw UserError("loss weights must be finite and nonnegative");
}

std::vector<char> make_hr_mask(const TokenSequence& seq) {
  std::vector<char> mask(static_cast<std::size_t>(seq.n_vis()), 0);
  for (int i = seq.n_lr; i < seq.n_vis(); ++i) mask[static_cast<std::size_t>(i)] = 1;
  return mask;
}

void validate_batch(const DistillBatch& batch, int model_dim) {
  batch.seq.validate(model_dim);
  if (static_cast<int>(batch.hr_mask.size()) != batch.seq.n_vis())
    throw UserError("batch: hr mask size mismatch");
  int marked = 0;
  for (std::size_t i = 0; i < batch.hr_mask.size(); ++i) {
    bool canonical = static_cast<int>(i) >= batch.seq.n_lr;
    if (static_cast<bool>(batch.hr_mask[i]) != canonical)
      throw UserError("batch: hr mask must select exactly the hr columns");
    marked += batch.hr_mask[i] ? 1 : 0;
  }
  if (marked != batch.seq.n_hr) throw UserError("batch: hr mask count mismatch");
  if (batch.teacher_rec.j != static_cast<int>(batch.seq.turns.size()) ||
      batch.teacher_rec.n_v != batch.seq.n_vis())
    throw UserError("batch: teacher record shape mismatch");
}

double kl_loss(const std::vector<Matrix>& teacher_rows,
               const std::vector<Matrix>& student_rows,
               const std::vector<char>& hr_mask, double lambda_hr) {
  if (teacher_rows.size() != student_rows.size())
    throw UserError("kl_loss: pair count mismatch");
  std::vector<int> hr = mask_indices(hr_mask);
  double total = 0;
  for (std::size_t k = 0; k < teacher_rows.size(); ++k) {
    const Matrix& t = teacher_rows[k];
    const Matrix& a = student_rows[k];
    if (t.rows != a.rows || t.cols != a.cols ||
        t.cols != static_cast<int>(hr_mask.size()))
      throw UserError("kl_loss: row shape mismatch");
    double acc = 0;
    for (int r = 0; r < t.rows; ++r) {
      acc += kl_row(t.row_ptr(r), a.row_ptr(r), t.cols, nullptr);
      acc += lambda_hr * kl_row(t.row_ptr(r), a.row_ptr(r), t.cols, &hr);
    }
    total += acc / t.rows;  // average over turns
  }
  return total;
}

double mse_loss(const std::vector<Matrix>& teacher_hr,
                const std::vector<Matrix>& student_hr) {
  if (teacher_hr.size() != student_hr.size())
    throw UserError("mse_loss: pair count mismatch");
  double total = 0;
  for (std::size_t k = 0; k < teacher_hr.size(); ++k) {
    const Matrix& t = teacher_hr[k];
    const Matrix& a = student_hr[k];
    if (t.rows != a.rows || t.cols != a.cols)
      throw UserError("mse_loss: shape mismatch");
    double acc = 0;
    for (std::size_t i = 0; i < t.a.size(); ++i) {
      double d = a.a[i] - t.a[i];
      acc += d * d;
    }
    total += acc / static_cast<double>(t.a.size());
  }
  return total;
}

namespace {

// Shared loss core: computes the Eq-style total for one item from the
// student's record, optionally filling the gradient w.r.t. record entries.
double item_loss(const AttentionRecord& stu, const DistillBatch& batch,
                 const LayerPairPlan& plan, const LossWeights& w,
                 AttentionRecord* rec_grad) {
  const AttentionRecord& tea = batch.teacher_rec;
  const int H = stu.heads, J = stu.j, NV = stu.n_v;
  const int K = plan.K();
  std::vector<int> hr = mask_indices(batch.hr_mask);
  const int n_hr = static_cast<int>(hr.size());
  const double inv_kh = 1.0 / (static_cast<double>(K) * H);

  double total = 0;
  for (int k : plan.distilled_pairs) {
    int sl = k - 1;                              // student record layer
    int tl = plan.teacher_layer_for(k) - 1;      // teacher record layer
    for (int h = 0; h < H; ++h) {
      double kl_term = 0, mse_term = 0;
      for (int r = 0; r < J; ++r) {
        const double* trow = tea.row(tl, h, r);
        const double* arow = stu.row(sl, h, r);
        kl_term += kl_row(trow, arow, NV, nullptr);
        kl_term += w.lambda_hr * kl_row(trow, arow, NV, &hr);
        for (int c : hr) {
          double d = arow[c] - trow[c];
          mse_term += d * d;
        }
        if (rec_grad) {
          double* da = rec_grad->row(sl, h, r);
          double wkl = inv_kh * w.lambda_kl / J;
          kl_row_grad(trow, arow, NV, nullptr, wkl, da);
          kl_row_grad(trow, arow, NV, &hr, wkl * w.lambda_hr, da);
          double wmse = inv_kh * w.lambda_mse * 2.0 /
                        (static_cast<double>(J) * n_hr);
          for (int c : hr) da[c] += wmse * (arow[c] - trow[c]);
        }
      }
      kl_term /= J;
      mse_term /= static_cast<double>(J) * n_hr;
      total += inv_kh * (w.lambda_mse * mse_term + w.lambda_kl * kl_term);
    }
  }
  return total;
}

void check_batch_against(const DecoderStack& student, const DistillBatch& batch,
                         const LayerPairPlan& plan) {
  validate_batch(batch, student.cfg.model_dim);
  if (batch.teacher_rec.heads != student.cfg.heads)
    throw UserError("batch: teacher head count differs from student");
  for (int k : plan.distilled_pairs)
    if (plan.teacher_layer_for(k) > batch.teacher_rec.layers)
      throw UserError("batch: teacher record misses a distilled layer");
}

}  // namespace

double total_loss(const DecoderStack& student, const DistillBatch& batch,
                  const LayerPairPlan& plan, const LossWeights& weights) {
  weights.validate();
  plan.validate(batch.teacher_rec.layers);
  if (plan.R() != student.cfg.layers)
    throw UserError("plan: student layer count mismatch");
  check_batch_against(student, batch, plan);
  ForwardResult fr = forward(student, batch.seq);
  return item_loss(fr.rec, batch, plan, weights, nullptr);
}

double total_loss_mean(const DecoderStack& student,
                       const std::vector<DistillBatch>& data,
                       const LayerPairPlan& plan, const LossWeights& weights) {
  if (data.empty()) throw UserError("no training data");
  double s = 0;
  for (const auto& b : data) s += total_loss(student, b, plan, weights);
  return s / static_cast<double>(data.size());
}

LossAndGrads loss_and_grads(const DecoderStack& student,
                            const std::vector<DistillBatch>& data,
                            const LayerPairPlan& plan,
                            const LossWeights& weights) {
  if (data.empty()) throw UserError("no training data");
  weights.validate();
  plan.validate(data.front().teacher_rec.layers);
  if (plan.R() != student.cfg.layers)
    throw UserError("plan: student layer count mismatch");

  LossAndGrads out;
  out.grads = zero_grads(student);
  const double invN = 1.0 / static_cast<double>(data.size());

  for (const auto& batch : data) {
    check_batch_against(student, batch, plan);
    ForwardCache fc = forward_cached(student, batch.seq);
    AttentionRecord rec_grad(student.cfg.layers, student.cfg.heads, fc.rec.j,
                             fc.rec.n_v);
    out.loss += invN * item_loss(fc.rec, batch, plan, weights, &rec_grad);
    for (auto& g : rec_grad.data) g *= invN;
    StackGrads item = backward_through_stack(student, fc, batch.seq, rec_grad);
    for (std::size_t l = 0; l < item.layers.size(); ++l) {
      add_inplace(out.grads.layers[l].wq, item.layers[l].wq);
      add_inplace(out.grads.layers[l].wk, item.layers[l].wk);
      add_inplace(out.grads.layers[l].wv, item.layers[l].wv);
      add_inplace(out.grads.layers[l].wo, item.layers[l].wo);
      add_inplace(out.grads.layers[l].w1, item.layers[l].w1);
      add_inplace(out.grads.layers[l].w2, item.layers[l].w2);
      for (std::size_t i = 0; i < item.layers[l].g_attn.size(); ++i)
        out.grads.layers[l].g_attn[i] += item.layers[l].g_attn[i];
      for (std::size_t i = 0; i < item.layers[l].g_ff.size(); ++i)
        out.grads.layers[l].g_ff[i] += item.layers[l].g_ff[i];
    }
  }
  return out;
}

TrainResult train(const DecoderStack& teacher,
                  const std::vector<DistillBatch>& data,
                  const LayerPairPlan& plan, const LossWeights& weights,
                  int steps, double lr, std::uint64_t seed) {
  plan.validate(teacher.cfg.layers);
  weights.validate();
  if (steps < 0) throw UserError("negative step count");

  TrainResult res;
  res.student = init_student_from_teacher(teacher, plan.teacher_indices);
  res.student.cfg.seed = seed;

  for (int step = 0; step < steps; ++step) {
    LossAndGrads lg = loss_and_grads(res.student, data, plan, weights);
    res.curve.push_back(lg.loss);
    if (!(lg.loss <= 1e6))
      throw std::runtime_error("training diverged at step " +
                               std::to_string(step) + ", loss " +
                               std::to_string(lg.loss));
    for (std::size_t l = 0; l < res.student.layers.size(); ++l) {
      LayerWeights& w = res.student.layers[l];
      const LayerWeights& g = lg.grads.layers[l];
      for (std::size_t i = 0; i < w.wq.a.size(); ++i) w.wq.a[i] -= lr * g.wq.a[i];
      for (std::size_t i = 0; i < w.wk.a.size(); ++i) w.wk.a[i] -= lr * g.wk.a[i];
      for (std::size_t i = 0; i < w.wv.a.size(); ++i) w.wv.a[i] -= lr * g.wv.a[i];
      for (std::size_t i = 0; i < w.wo.a.size(); ++i) w.wo.a[i] -= lr * g.wo.a[i];
      for (std::size_t i = 0; i < w.w1.a.size(); ++i) w.w1.a[i] -= lr * g.w1.a[i];
      for (std::size_t i = 0; i < w.w2.a.size(); ++i) w.w2.a[i] -= lr * g.w2.a[i];
      for (std::size_t i = 0; i < w.g_attn.size(); ++i)
        w.g_attn[i] -= lr * g.g_attn[i];
      for (std::size_t i = 0; i < w.g_ff.size(); ++i) w.g_ff[i] -= lr * g.g_ff[i];
    }
  }
  res.curve.push_back(total_loss_mean(res.student, data, plan, weights));
  return res;
}

void write_loss_csv(const std::string& path, const std::vector<double>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path);
  out << "step,loss\n";
  char buf[48];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, curve[i]);
    out << buf;
  }
}

void PlantedTaskConfig::validate() const {
  if (grid < 2 || block < 1 || block > grid)
    throw UserError("task: need 1 <= block <= grid, grid >= 2");
  if (n_sys < 0 || n_lr < 1 || n_txt < 1 || cell_px < 1 || n_markers < 1)
    throw UserError("task: non-positive counts");
  if (!(hot_mass > 0) || !(lr_mass >= 0) || !(vis_mass <= 1.0) ||
      hot_mass + lr_mass >= vis_mass + 1e-12)
    throw UserError("task: mass budget must satisfy hot + lr < vis <= 1");
}

std::vector<PlantedSample> make_planted_samples(const PlantedTaskConfig& task,
                                                const StackConfig& teacher_cfg,
                                                const LayerPairPlan& plan,
                                                int count, std::uint64_t seed) {
  task.validate();
  teacher_cfg.validate();
  plan.validate(teacher_cfg.layers);
  if (count < 1) throw UserError("task: need at least one sample");

  const int d = teacher_cfg.model_dim;
  const int n_hr = task.grid * task.grid;
  const int n_v = task.n_lr + n_hr;
  const int n = task.n_sys + n_v + task.n_txt;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto rand_vec = [&](double scale) {
    std::vector<double> v(static_cast<std::size_t>(d));
    double ss = 0;
    for (auto& x : v) {
      x = unit(rng);
      ss += x * x;
    }
    double norm = std::sqrt(ss);
    for (auto& x : v) x = scale * x / (norm > 0 ? norm : 1.0);
    return v;
  };

  std::vector<std::vector<double>> markers;
  for (int q = 0; q < task.n_markers; ++q)
    markers.push_back(rand_vec(task.marker_scale));
  std::vector<std::vector<double>> sys_rows;
  for (int i = 0; i < task.n_sys; ++i) sys_rows.push_back(rand_vec(1.0));
  std::vector<std::vector<double>> lr_rows;
  for (int i = 0; i < task.n_lr; ++i) lr_rows.push_back(rand_vec(1.0));

  const int n_hot = task.block * task.block;
  const double hot_v = task.hot_mass / n_hot;
  const double lr_v = task.lr_mass / task.n_lr;
  const double cold_v =
      (task.vis_mass - task.hot_mass - task.lr_mass) / (n_hr - n_hot > 0 ? n_hr - n_hot : 1);

  std::uniform_int_distribution<int> pos(0, task.grid - task.block);
  std::uniform_int_distribution<int> pick(0, task.n_markers - 1);

  std::vector<PlantedSample> samples;
  samples.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    PlantedSample ps;
    ps.block_row = pos(rng);
    ps.block_col = pos(rng);
    int q = pick(rng);

    TokenSequence seq;
    seq.n_sys = task.n_sys;
    seq.n_lr = task.n_lr;
    seq.n_hr = n_hr;
    seq.n_txt = task.n_txt;
    seq.emb = Matrix(n, d);
    int row = 0;
    auto put = [&](const std::vector<double>& v) {
      for (int c = 0; c < d; ++c) seq.emb(row, c) = v[static_cast<std::size_t>(c)];
      ++row;
    };
    for (const auto& v : sys_rows) put(v);
    for (const auto& v : lr_rows) put(v);
    for (int r = 0; r < task.grid; ++r)
      for (int c = 0; c < task.grid; ++c) {
        std::vector<double> v = rand_vec(task.noise_scale);
        bool hot = r >= ps.block_row && r < ps.block_row + task.block &&
                   c >= ps.block_col && c < ps.block_col + task.block;
        if (hot)
          for (int i = 0; i < d; ++i)
            v[static_cast<std::size_t>(i)] += markers[static_cast<std::size_t>(q)][static_cast<std::size_t>(i)];
        put(v);
      }
    for (int i = 0; i < task.n_txt - 1; ++i) put(rand_vec(task.noise_scale));
    {
      std::vector<double> cue = rand_vec(0.1);
      for (int i = 0; i < d; ++i)
        cue[static_cast<std::size_t>(i)] += markers[static_cast<std::size_t>(q)][static_cast<std::size_t>(i)];
      put(cue);
    }
    seq.turns = {n - 1};

    AttentionRecord rec(teacher_cfg.layers, teacher_cfg.heads, 1, n_v);
    for (int k : plan.distilled_pairs) {
      int tl = plan.teacher_layer_for(k) - 1;
      for (int h = 0; h < teacher_cfg.heads; ++h) {
        double* dst = rec.row(tl, h, 0);
        for (int i = 0; i < task.n_lr; ++i) dst[i] = lr_v;
        for (int r = 0; r < task.grid; ++r)
          for (int c = 0; c < task.grid; ++c) {
            bool hot = r >= ps.block_row && r < ps.block_row + task.block &&
                       c >= ps.block_col && c < ps.block_col + task.block;
            dst[task.n_lr + r * task.grid + c] = hot ? hot_v : cold_v;
          }
      }
    }

    ps.batch.seq = std::move(seq);
    ps.batch.teacher_rec = std::move(rec);
    ps.batch.hr_mask = make_hr_mask(ps.batch.seq);
    samples.push_back(std::move(ps));
  }
  return samples;
}

std::vector<double> student_hr_scores(const DecoderStack& student,
                                      const DistillBatch& batch) {
  ForwardResult fr = forward(student, batch.seq);
  const int last = student.cfg.layers - 1;
  const int r = fr.rec.j - 1;
  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(batch.seq.n_hr));
  for (int c = batch.seq.n_lr; c < batch.seq.n_vis(); ++c) {
    double s = 0;
    for (int h = 0; h < student.cfg.heads; ++h) s += fr.rec.at(last, h, r, c);
    scores.push_back(s / student.cfg.heads);
  }
  return scores;
}

TrainConfig default_train_config() {
  TrainConfig cfg;
  cfg.teacher.layers = 8;
  cfg.teacher.heads = 4;
  cfg.teacher.model_dim = 32;
  cfg.teacher.ff_dim = 64;
  cfg.teacher.max_seq = 4096;
  cfg.teacher.seed = 1;
  cfg.plan.student_indices = {1, 2, 3};
  cfg.plan.teacher_indices = {1, 4, 8};
  cfg.plan.distilled_pairs = {1, 3};
  return cfg;
}

TrainConfig train_config_from_json(const ojson& j) {
  TrainConfig cfg = default_train_config();
  try {
    if (j.contains("stack")) {
      const auto& s = j["stack"];
      cfg.teacher.layers = s.value("layers", cfg.teacher.layers);
      cfg.teacher.heads = s.value("heads", cfg.teacher.heads);
      cfg.teacher.model_dim = s.value("model_dim", cfg.teacher.model_dim);
      cfg.teacher.ff_dim = s.value("ff_dim", cfg.teacher.ff_dim);
      cfg.teacher.max_seq = s.value("max_seq", cfg.teacher.max_seq);
      cfg.teacher.seed = s.value("seed", cfg.teacher.seed);
    }
    if (j.contains("plan")) {
      const auto& p = j["plan"];
      if (p.contains("student_indices"))
        cfg.plan.student_indices = p["student_indices"].get<std::vector<int>>();
      if (p.contains("teacher_indices"))
        cfg.plan.teacher_indices = p["teacher_indices"].get<std::vector<int>>();
      if (p.contains("distilled_pairs"))
        cfg.plan.distilled_pairs = p["distilled_pairs"].get<std::vector<int>>();
    }
    if (j.contains("weights")) {
      const auto& w = j["weights"];
      cfg.weights.lambda_hr = w.value("lambda_hr", cfg.weights.lambda_hr);
      cfg.weights.lambda_mse = w.value("lambda_mse", cfg.weights.lambda_mse);
      cfg.weights.lambda_kl = w.value("lambda_kl", cfg.weights.lambda_kl);
    }
    cfg.steps = j.value("steps", cfg.steps);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.train_samples = j.value("train_samples", cfg.train_samples);
    if (j.contains("task")) {
      const auto& t = j["task"];
      cfg.task.grid = t.value("grid", cfg.task.grid);
      cfg.task.block = t.value("block", cfg.task.block);
      cfg.task.n_sys = t.value("n_sys", cfg.task.n_sys);
      cfg.task.n_lr = t.value("n_lr", cfg.task.n_lr);
      cfg.task.n_txt = t.value("n_txt", cfg.task.n_txt);
      cfg.task.cell_px = t.value("cell_px", cfg.task.cell_px);
      cfg.task.n_markers = t.value("n_markers", cfg.task.n_markers);
      cfg.task.marker_scale = t.value("marker_scale", cfg.task.marker_scale);
      cfg.task.noise_scale = t.value("noise_scale", cfg.task.noise_scale);
      cfg.task.hot_mass = t.value("hot_mass", cfg.task.hot_mass);
      cfg.task.lr_mass = t.value("lr_mass", cfg.task.lr_mass);
      cfg.task.vis_mass = t.value("vis_mass", cfg.task.vis_mass);
    }
  } catch (const ojson::exception& e) {
    throw UserError(std::string("training config: ") + e.what());
  }
  return cfg;
}

ojson train_config_to_json(const TrainConfig& cfg) {
  ojson j;
  j["stack"] = {{"layers", cfg.teacher.layers},   {"heads", cfg.teacher.heads},
                {"model_dim", cfg.teacher.model_dim},
                {"ff_dim", cfg.teacher.ff_dim},   {"max_seq", cfg.teacher.max_seq},
                {"seed", cfg.teacher.seed}};
  j["plan"] = {{"student_indices", cfg.plan.student_indices},
               {"teacher_indices", cfg.plan.teacher_indices},
               {"distilled_pairs", cfg.plan.distilled_pairs}};
  j["weights"] = {{"lambda_hr", sig9(cfg.weights.lambda_hr)},
                  {"lambda_mse", sig9(cfg.weights.lambda_mse)},
                  {"lambda_kl", sig9(cfg.weights.lambda_kl)}};
  j["steps"] = cfg.steps;
  j["lr"] = sig9(cfg.lr);
  j["seed"] = cfg.seed;
  j["train_samples"] = cfg.train_samples;
  j["task"] = {{"grid", cfg.task.grid},
               {"block", cfg.task.block},
               {"n_sys", cfg.task.n_sys},
               {"n_lr", cfg.task.n_lr},
               {"n_txt", cfg.task.n_txt},
               {"cell_px", cfg.task.cell_px},
               {"n_markers", cfg.task.n_markers},
               {"marker_scale", sig9(cfg.task.marker_scale)},
               {"noise_scale", sig9(cfg.task.noise_scale)},
               {"hot_mass", sig9(cfg.task.hot_mass)},
               {"lr_mass", sig9(cfg.task.lr_mass)},
               {"vis_mass", sig9(cfg.task.vis_mass)}};
  return j;
}

}  // namespace pyrfocus
