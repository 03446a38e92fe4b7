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
#include "pyrfocus/toyattn.hpp"

namespace pyrfocus {

/// Student/teacher layer pairing. All indices are 1-based. student_indices
/// is normally [1..R]; teacher_indices[i] is the teacher layer the i-th
/// student layer was initialized from; distilled_pairs lists the student
/// layers whose attention is aligned during training (a subset of the
/// initialization pairs).
struct LayerPairPlan {
  std::vector<int> student_indices;
  std::vector<int> teacher_indices;
  std::vector<int> distilled_pairs;

  int R() const { return static_cast<int>(student_indices.size()); }
  int K() const { return static_cast<int>(distilled_pairs.size()); }
  /// Teacher layer paired with student layer sl (1-based).
  int teacher_layer_for(int sl) const;
  void validate(int teacher_layers) const;
};

struct LossWeights {
  double lambda_hr = 2.0;
  double lambda_mse = 1.0;
  double lambda_kl = 1.0;
  void validate() const;
};

/// One training example: an embedded sequence, the frozen teacher attention
/// record (indexed by teacher layers), and the mask naming which vision
/// columns are hr tokens.
struct DistillBatch {
  TokenSequence seq;
  AttentionRecord teacher_rec;
  std::vector<char> hr_mask;  // size n_vis, true exactly on hr columns
};

/// Canonical hr mask for a sequence: false on the n_lr thumbnail columns,
/// true on the n_hr columns after them.
std::vector<char> make_hr_mask(const TokenSequence& seq);
void validate_batch(const DistillBatch& batch, int model_dim);

/// KL term: rows are renormalized to distributions over their support, the
/// hr sub-rows renormalized separately and weighted by lambda_hr. One matrix
/// per pair k (shape j x n_v); turn rows are averaged. Logs are clamped at
/// 1e-12 so missing student support never produces infinities.
double kl_loss(const std::vector<Matrix>& teacher_rows,
               const std::vector<Matrix>& student_rows,
               const std::vector<char>& hr_mask, double lambda_hr);

/// MSE term on raw (unnormalized) hr attention values, mean per pair over
/// turn rows and hr columns, summed over pairs.
double mse_loss(const std::vector<Matrix>& teacher_hr,
                const std::vector<Matrix>& student_hr);

/// Total distillation loss for one batch item:
///   (1/(K*H)) * sum_h (lambda_mse * L_mse(h) + lambda_kl * L_kl(h)).
double total_loss(const DecoderStack& student, const DistillBatch& batch,
                  const LayerPairPlan& plan, const LossWeights& weights);

/// Mean of total_loss over a dataset.
double total_loss_mean(const DecoderStack& student,
                       const std::vector<DistillBatch>& data,
                       const LayerPairPlan& plan, const LossWeights& weights);

struct LossAndGrads {
  double loss = 0;
  StackGrads grads;
};

/// Loss plus analytic reverse-mode gradients for every student parameter,
/// averaged over the dataset. The teacher record is a constant.
LossAndGrads loss_and_grads(const DecoderStack& student,
                            const std::vector<DistillBatch>& data,
                            const LayerPairPlan& plan,
                            const LossWeights& weights);

struct TrainResult {
  DecoderStack student;
  std::vector<double> curve;  // loss before each step, then the final loss
};

/// Plain full-batch gradient descent with fixed learning rate. The student
/// starts as the teacher layers named by plan.teacher_indices. Deterministic;
/// seed is recorded in the student's config for provenance. Aborts when the
/// loss exceeds 1e6.
TrainResult train(const DecoderStack& teacher,
                  const std::vector<DistillBatch>& data,
                  const LayerPairPlan& plan, const LossWeights& weights,
                  int steps, double lr, std::uint64_t seed);

void write_loss_csv(const std::string& path, const std::vector<double>& curve);

/// Synthetic planted-region task. hr tokens form a grid of cells over a
/// square canvas; each sample plants a block of hot cells carrying one of a
/// small set of marker directions, and the final text token carries the same
/// marker as the query cue. Teacher rows put most vision mass uniformly on
/// the hot block, so a student matching them must learn query-conditioned
/// content lookup rather than a positional bias.
struct PlantedTaskConfig {
  int grid = 12;        // hr cell grid side; n_hr = grid^2
  int block = 4;        // hot block side in cells
  int n_sys = 2;
  int n_lr = 4;
  int n_txt = 2;
  int cell_px = 40;     // pixel size of one cell footprint
  int n_markers = 2;
  double marker_scale = 1.0;
  double noise_scale = 0.4;
  double hot_mass = 0.90;   // teacher vision mass on the hot block
  double lr_mass = 0.02;    // teacher vision mass on thumbnail columns
  double vis_mass = 0.97;   // total teacher mass on vision columns
  void validate() const;
};

struct PlantedSample {
  DistillBatch batch;
  int block_row = 0;  // hot block origin, in cells
  int block_col = 0;
};

/// Deterministic sample set. Teacher rows are written into the record at the
/// teacher layers named by plan's distilled pairs, identically for all heads.
std::vector<PlantedSample> make_planted_samples(const PlantedTaskConfig& task,
                                                const StackConfig& teacher_cfg,
                                                const LayerPairPlan& plan,
                                                int count, std::uint64_t seed);

/// Head-averaged last-layer attention scores over hr columns for one sample;
/// the ranking signal the selection loop would consume.
std::vector<double> student_hr_scores(const DecoderStack& student,
                                      const DistillBatch& batch);

/// Training run configuration, JSON round-trippable:
/// {stack:{...}, plan:{...}, weights:{...}, steps, lr, seed,
///  task:{...}, train_samples}.
struct TrainConfig {
  StackConfig teacher;
  LayerPairPlan plan;
  LossWeights weights;
  int steps = 500;
  double lr = 0.05;
  std::uint64_t seed = 1;
  PlantedTaskConfig task;
  int train_samples = 24;
};

TrainConfig default_train_config();
TrainConfig train_config_from_json(const ojson& j);
ojson train_config_to_json(const TrainConfig& cfg);

}  // namespace pyrfocus
