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
#include <map>
#include <string>
#include <vector>

#include "pyrfocus/prune.hpp"

namespace pyrfocus {

// ---------------------------------------------------------------- recall --

struct GroundTruthRegion {
  std::string image;
  std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // pixel bbox, x1/y1 exclusive

  RectD rect() const;
  /// Rejects regions with no area or outside the image.
  void validate(std::int64_t img_w, std::int64_t img_h) const;
};

/// Exact fraction of gt covered by the union of the rectangles.
double covered_fraction(const std::vector<RectD>& rects, const RectD& gt);

/// A region counts as found only when strictly more than half of its area
/// is covered.
bool localization_hit(const std::vector<RectD>& rects, const RectD& gt);

/// Footprints of the retained high-resolution tokens in original-image
/// pixels. Newline delimiters carry no area and are skipped; thumbnail
/// tokens are excluded on purpose, since they blanket the whole image and
/// would make every region count as covered.
std::vector<RectD> retained_footprints(const PruneTrace& trace,
                                       const PyramidGeometry& geom);

struct RecallStats {
  int total = 0;
  int hits = 0;

  double recall() const { return total > 0 ? double(hits) / total : 0.0; }
};

// ----------------------------------------------------------- open answers --

/// Lowercase, punctuation stripped, articles removed, whitespace collapsed.
std::string normalize_answer(const std::string& s);

class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;
  virtual std::string name() const = 0;
  /// Score in [0, 1] for two already-normalized answers.
  virtual double similarity(const std::string& a, const std::string& b) = 0;
};

/// Binary similarity from a synonym lexicon {word: [synonyms, ...]}.
/// Symmetric: a pair matches when either side lists the other.
class LexiconSimilarity : public SimilarityProvider {
 public:
  explicit LexiconSimilarity(const ojson& lexicon);
  std::string name() const override { return "lexicon"; }
  double similarity(const std::string& a, const std::string& b) override;

 private:
  std::map<std::string, std::vector<std::string>> syn_;
};

/// Path similarity on a category tree {child: parent}: twice the depth of
/// the deepest common ancestor over the summed node depths. Terms missing
/// from the tree score 0.
class TaxonomySimilarity : public SimilarityProvider {
 public:
  explicit TaxonomySimilarity(const ojson& parent_map);
  std::string name() const override { return "taxonomy"; }
  double similarity(const std::string& a, const std::string& b) override;

 private:
  std::vector<std::string> path_to_root(const std::string& w) const;
  std::map<std::string, std::string> parent_;
};

/// Correct iff the normalized strings match exactly or the provider scores
/// them at or above the threshold. An empty prediction is incorrect.
bool score_open_ended(const std::string& prediction, const std::string& gold,
                      SimilarityProvider& sim, double threshold = 0.8);

struct QARecord {
  std::string image;
  std::string question;
  std::string type;
  std::string answer;      // gold, 1-3 words
  std::string prediction;  // empty until merged
};

/// The closed set of question types.
const std::vector<std::string>& qa_types();

struct TypeAccuracy {
  std::string type;
  int total = 0;
  int correct = 0;

  double accuracy_pct() const {
    return total > 0 ? 100.0 * correct / total : 0.0;
  }
};

/// Per-type tallies in qa_types() order (all types listed, even empty).
std::vector<TypeAccuracy> score_dataset(const std::vector<QARecord>& records,
                                        SimilarityProvider& sim,
                                        double threshold = 0.8);

/// CSV: type,total,correct,accuracy with a trailing "overall" row.
std::string accuracy_csv(const std::vector<TypeAccuracy>& rows);

// ------------------------------------------------------------- references --

struct DetectionLabel {
  std::string image;
  std::string category;
  std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // pixel bbox, exclusive ends

  std::int64_t width() const { return x1 - x0; }
  std::int64_t height() const { return y1 - y0; }
  std::int64_t area() const { return width() * height(); }
  void validate(std::int64_t img_w, std::int64_t img_h) const;
};

struct UniqueReference {
  std::string image;
  std::string category;
  std::string reference;
  std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;          // target bbox
  std::int64_t crop_x0 = 0, crop_y0 = 0, crop_x1 = 0, crop_y1 = 0;
  double scale = 1.0;  // applied to the crop so its long side stays <= 1400
};

/// Rule-based unique-target mining over one image's detection labels:
/// categories with more than 40 instances are dropped; a target is named
/// by the strongest predicate it holds (only instance, axis-extremal by
/// more than 20 px, largest/smallest by more than 20% area, alone in one
/// cell of a 3x3 region grid); targets smaller than 16 px on either side
/// compete but are never emitted. Output order and content are independent
/// of input label order, and no two entries share a reference string.
std::vector<UniqueReference> extract_unique_references(
    const std::vector<DetectionLabel>& labels, std::int64_t img_w,
    std::int64_t img_h);

// -------------------------------------------------------------------- io --

/// JSONL {image, bbox: [x0, y0, x1, y1]} per line.
std::vector<GroundTruthRegion> load_regions_jsonl(const std::string& path);

/// JSONL {image, question, type, answer} per line.
std::vector<QARecord> load_qa_jsonl(const std::string& path);

/// JSONL {image, question, prediction}; joined on (image, question).
/// Records without a prediction stay empty and count as incorrect.
void merge_predictions_jsonl(std::vector<QARecord>& records,
                             const std::string& path);

struct LabeledImage {
  std::string image;
  std::int64_t width = 0, height = 0;
  std::vector<DetectionLabel> labels;
};

/// JSONL {image, image_width, image_height, category, bbox} per label,
/// grouped by image in order of first appearance.
std::vector<LabeledImage> load_labels_jsonl(const std::string& path);

ojson references_json(const std::vector<UniqueReference>& refs);

}  // namespace pyrfocus
