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

#include "pyrfocus/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "pyrfocus/layout.hpp"

namespace pyrfocus {

// ---------------------------------------------------------------- recall --

RectD GroundTruthRegion::rect() const {
  return RectD{double(x0), double(y0), double(x1), double(y1)};
}

void GroundTruthRegion::validate(std::int64_t img_w, std::int64_t img_h) const {
  if (x1 <= x0 || y1 <= y0)
    throw UserError("eval: region for " + image + " has no area");
  if (x0 < 0 || y0 < 0 || x1 > img_w || y1 > img_h)
    throw UserError("eval: region for " + image + " lies outside the image");
}

double covered_fraction(const std::vector<RectD>& rects, const RectD& gt) {
  const double ga = gt.area();
  if (ga <= 0.0) throw UserError("eval: region has no area");

  std::vector<RectD> cl;
  for (const RectD& r : rects) {
    RectD c{std::max(r.x0, gt.x0), std::max(r.y0, gt.y0),
            std::min(r.x1, gt.x1), std::min(r.y1, gt.y1)};
    if (c.x1 > c.x0 && c.y1 > c.y0) cl.push_back(c);
  }
  if (cl.empty()) return 0.0;

  std::vector<double> xs, ys;
  xs.reserve(2 * cl.size());
  ys.reserve(2 * cl.size());
  for (const RectD& c : cl) {
    xs.push_back(c.x0);
    xs.push_back(c.x1);
    ys.push_back(c.y0);
    ys.push_back(c.y1);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  const std::size_t nx = xs.size() - 1;
  const std::size_t ny = ys.size() - 1;
  std::vector<char> cov(nx * ny, 0);
  for (const RectD& c : cl) {
    const std::size_t ix0 =
        std::lower_bound(xs.begin(), xs.end(), c.x0) - xs.begin();
    const std::size_t ix1 =
        std::lower_bound(xs.begin(), xs.end(), c.x1) - xs.begin();
    const std::size_t iy0 =
        std::lower_bound(ys.begin(), ys.end(), c.y0) - ys.begin();
    const std::size_t iy1 =
        std::lower_bound(ys.begin(), ys.end(), c.y1) - ys.begin();
    for (std::size_t iy = iy0; iy < iy1; ++iy)
      for (std::size_t ix = ix0; ix < ix1; ++ix) cov[iy * nx + ix] = 1;
  }

  double area = 0.0;
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix)
      if (cov[iy * nx + ix]) area += (xs[ix + 1] - xs[ix]) * (ys[iy + 1] - ys[iy]);
  return area / ga;
}

bool localization_hit(const std::vector<RectD>& rects, const RectD& gt) {
  return covered_fraction(rects, gt) > 0.5;
}

std::vector<RectD> retained_footprints(const PruneTrace& trace,
                                       const PyramidGeometry& geom) {
  std::vector<RectD> out;
  out.reserve(trace.retained.size());
  for (const RetainedToken& rt : trace.retained) {
    if (rt.newline) continue;
    HrToken t;
    t.newline = false;
    t.tile = rt.tile;
    t.tile.level = rt.level;
    t.in_row = rt.in_row;
    t.in_col = rt.in_col;
    out.push_back(token_footprint(geom, trace.cfg.layout, t));
  }
  return out;
}

// ----------------------------------------------------------- open answers --

std::string normalize_answer(const std::string& s) {
  std::string flat;
  flat.reserve(s.size());
  for (char ch : s) {
    unsigned char u = static_cast<unsigned char>(ch);
    if (std::isalnum(u))
      flat.push_back(static_cast<char>(std::tolower(u)));
    else
      flat.push_back(' ');
  }
  std::istringstream in(flat);
  std::string word, out;
  while (in >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

LexiconSimilarity::LexiconSimilarity(const ojson& lexicon) {
  if (!lexicon.is_object())
    throw UserError("lexicon: expected an object {word: [synonyms]}");
  for (const auto& item : lexicon.items()) {
    if (!item.value().is_array())
      throw UserError("lexicon: synonyms of '" + item.key() +
                      "' must be an array");
    std::vector<std::string> syns;
    for (const auto& v : item.value()) {
      if (!v.is_string())
        throw UserError("lexicon: synonyms of '" + item.key() +
                        "' must be strings");
      syns.push_back(normalize_answer(v.get<std::string>()));
    }
    syn_[normalize_answer(item.key())] = std::move(syns);
  }
}

double LexiconSimilarity::similarity(const std::string& a,
                                     const std::string& b) {
  if (a == b) return 1.0;
  auto lists = [&](const std::string& key, const std::string& other) {
    auto it = syn_.find(key);
    return it != syn_.end() &&
           std::find(it->second.begin(), it->second.end(), other) !=
               it->second.end();
  };
  return (lists(a, b) || lists(b, a)) ? 1.0 : 0.0;
}

TaxonomySimilarity::TaxonomySimilarity(const ojson& parent_map) {
  if (!parent_map.is_object())
    throw UserError("taxonomy: expected an object {child: parent}");
  for (const auto& item : parent_map.items()) {
    if (!item.value().is_string())
      throw UserError("taxonomy: parent of '" + item.key() +
                      "' must be a string");
    parent_[normalize_answer(item.key())] =
        normalize_answer(item.value().get<std::string>());
  }
}

std::vector<std::string> TaxonomySimilarity::path_to_root(
    const std::string& w) const {
  bool known = parent_.count(w) > 0;
  if (!known)
    for (const auto& kv : parent_)
      if (kv.second == w) {
        known = true;
        break;
      }
  if (!known) return {};
  std::vector<std::string> path{w};
  std::set<std::string> seen{w};
  while (true) {
    auto it = parent_.find(path.back());
    if (it == parent_.end()) break;
    if (!seen.insert(it->second).second)
      throw UserError("taxonomy: cycle at '" + it->second + "'");
    path.push_back(it->second);
  }
  return path;
}

double TaxonomySimilarity::similarity(const std::string& a,
                                      const std::string& b) {
  std::vector<std::string> pa = path_to_root(a);
  std::vector<std::string> pb = path_to_root(b);
  if (pa.empty() || pb.empty()) return 0.0;
  std::reverse(pa.begin(), pa.end());
  std::reverse(pb.begin(), pb.end());
  std::size_t common = 0;
  while (common < pa.size() && common < pb.size() && pa[common] == pb[common])
    ++common;
  return 2.0 * common / (pa.size() + pb.size());
}

bool score_open_ended(const std::string& prediction, const std::string& gold,
                      SimilarityProvider& sim, double threshold) {
  const std::string g = normalize_answer(gold);
  if (g.empty()) throw UserError("eval: empty gold answer");
  const std::string p = normalize_answer(prediction);
  if (p.empty()) return false;
  if (p == g) return true;
  return sim.similarity(p, g) >= threshold;
}

const std::vector<std::string>& qa_types() {
  static const std::vector<std::string> kTypes = {
      "count",     "color",       "category",
      "shape",     "status",      "reasoning",
      "rural/urban", "target background", "position"};
  return kTypes;
}

std::vector<TypeAccuracy> score_dataset(const std::vector<QARecord>& records,
                                        SimilarityProvider& sim,
                                        double threshold) {
  std::vector<TypeAccuracy> rows;
  for (const std::string& t : qa_types()) rows.push_back({t, 0, 0});
  for (const QARecord& r : records) {
    std::size_t idx = 0;
    for (; idx < qa_types().size(); ++idx)
      if (qa_types()[idx] == r.type) break;
    if (idx == qa_types().size())
      throw UserError("eval: unknown question type '" + r.type + "'");
    rows[idx].total += 1;
    if (score_open_ended(r.prediction, r.answer, sim, threshold))
      rows[idx].correct += 1;
  }
  return rows;
}

std::string accuracy_csv(const std::vector<TypeAccuracy>& rows) {
  std::string out = "type,total,correct,accuracy\n";
  char buf[128];
  int total = 0, correct = 0;
  for (const TypeAccuracy& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.2f\n", r.type.c_str(), r.total,
                  r.correct, r.accuracy_pct());
    out += buf;
    total += r.total;
    correct += r.correct;
  }
  TypeAccuracy overall{"overall", total, correct};
  std::snprintf(buf, sizeof(buf), "overall,%d,%d,%.2f\n", total, correct,
                overall.accuracy_pct());
  out += buf;
  return out;
}

// ------------------------------------------------------------- references --

void DetectionLabel::validate(std::int64_t img_w, std::int64_t img_h) const {
  if (x1 <= x0 || y1 <= y0)
    throw UserError("labels: box for '" + category + "' has no area");
  if (x0 < 0 || y0 < 0 || x1 > img_w || y1 > img_h)
    throw UserError("labels: box for '" + category +
                    "' lies outside the image");
}

namespace {

const char* kRegionName[3][3] = {
    {"top-left corner", "top edge", "top-right corner"},
    {"left edge", "center", "right edge"},
    {"bottom-left corner", "bottom edge", "bottom-right corner"}};

int region_index(std::int64_t c2, std::int64_t dim) {
  // c2 is twice the center coordinate; cells are thirds of the image.
  std::int64_t i = (3 * c2) / (2 * dim);
  return static_cast<int>(std::min<std::int64_t>(i, 2));
}

struct CropBox {
  std::int64_t x0, y0, x1, y1;
  double scale;
};

// Small targets get a centered context window of at least 400 px per side;
// larger ones are cropped tight and scaled down to a 1400 px long side.
CropBox crop_for(const DetectionLabel& l, std::int64_t img_w,
                 std::int64_t img_h) {
  const std::int64_t w = l.width(), h = l.height();
  const std::int64_t longside = std::max(w, h);
  CropBox c{l.x0, l.y0, l.x1, l.y1, 1.0};
  if (longside < 400) {
    auto expand = [](std::int64_t lo, std::int64_t hi, std::int64_t want,
                     std::int64_t limit, std::int64_t& out_lo,
                     std::int64_t& out_hi) {
      const std::int64_t have = hi - lo;
      if (have >= want) {
        out_lo = lo;
        out_hi = hi;
        return;
      }
      out_lo = lo - (want - have) / 2;
      out_hi = out_lo + want;
      if (out_lo < 0) {
        out_hi -= out_lo;
        out_lo = 0;
      }
      if (out_hi > limit) {
        out_lo -= out_hi - limit;
        out_hi = limit;
      }
      if (out_lo < 0) out_lo = 0;
    };
    expand(l.x0, l.x1, 400, img_w, c.x0, c.x1);
    expand(l.y0, l.y1, 400, img_h, c.y0, c.y1);
  } else if (longside > 1400) {
    c.scale = 1400.0 / static_cast<double>(longside);
  }
  return c;
}

}  // namespace

std::vector<UniqueReference> extract_unique_references(
    const std::vector<DetectionLabel>& labels, std::int64_t img_w,
    std::int64_t img_h) {
  if (img_w < 1 || img_h < 1) throw UserError("labels: bad image size");
  for (const DetectionLabel& l : labels) l.validate(img_w, img_h);

  // Canonical order makes the result independent of input permutation.
  std::vector<DetectionLabel> sorted = labels;
  std::sort(sorted.begin(), sorted.end(),
            [](const DetectionLabel& a, const DetectionLabel& b) {
              return std::tie(a.category, a.y0, a.x0, a.y1, a.x1) <
                     std::tie(b.category, b.y0, b.x0, b.y1, b.x1);
            });

  std::vector<UniqueReference> out;
  std::set<std::string> seen;

  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].category == sorted[i].category) ++j;
    const std::size_t n = j - i;
    const std::string& cat = sorted[i].category;
    if (n > 40) {
      i = j;
      continue;
    }

    // Twice the centers keeps everything in exact integers; the 20 px
    // threshold becomes 40 in doubled units.
    std::vector<std::int64_t> cx2(n), cy2(n), area(n);
    for (std::size_t k = 0; k < n; ++k) {
      const DetectionLabel& l = sorted[i + k];
      cx2[k] = l.x0 + l.x1;
      cy2[k] = l.y0 + l.y1;
      area[k] = l.area();
    }

    // Index of the extreme instance plus whether its margin clears the
    // threshold; ties leave the predicate unassigned via a zero margin.
    auto extremal = [&](const std::vector<std::int64_t>& v, bool want_max,
                        std::size_t& idx) {
      idx = 0;
      for (std::size_t k = 1; k < n; ++k)
        if (want_max ? v[k] > v[idx] : v[k] < v[idx]) idx = k;
      std::int64_t margin = -1;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == idx) continue;
        std::int64_t d = want_max ? v[idx] - v[k] : v[k] - v[idx];
        if (margin < 0 || d < margin) margin = d;
      }
      return n > 1 && margin > 40;
    };

    std::vector<int> region(n);
    std::vector<int> region_count(9, 0);
    for (std::size_t k = 0; k < n; ++k) {
      int ix = region_index(cx2[k], img_w);
      int iy = region_index(cy2[k], img_h);
      region[k] = iy * 3 + ix;
      region_count[region[k]] += 1;
    }

    std::size_t top = 0, bottom = 0, left = 0, right = 0;
    const bool has_top = extremal(cy2, false, top);
    const bool has_bottom = extremal(cy2, true, bottom);
    const bool has_left = extremal(cx2, false, left);
    const bool has_right = extremal(cx2, true, right);

    std::size_t big = 0, small = 0;
    for (std::size_t k = 1; k < n; ++k) {
      if (area[k] > area[big]) big = k;
      if (area[k] < area[small]) small = k;
    }
    std::int64_t second_big = -1, second_small = -1;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != big && area[k] > second_big) second_big = area[k];
      if (k != small && (second_small < 0 || area[k] < second_small))
        second_small = area[k];
    }
    // "More than 20% apart" on exact integers: 5*a > 6*b.
    const bool has_big = n > 1 && 5 * area[big] > 6 * second_big;
    const bool has_small = n > 1 && 5 * second_small > 6 * area[small];

    for (std::size_t k = 0; k < n; ++k) {
      const DetectionLabel& l = sorted[i + k];
      std::string ref;
      if (n == 1)
        ref = "the only " + cat + " in the image";
      else if (has_top && k == top)
        ref = "the top-most " + cat;
      else if (has_bottom && k == bottom)
        ref = "the bottom-most " + cat;
      else if (has_left && k == left)
        ref = "the left-most " + cat;
      else if (has_right && k == right)
        ref = "the right-most " + cat;
      else if (has_big && k == big)
        ref = "the largest " + cat;
      else if (has_small && k == small)
        ref = "the smallest " + cat;
      else if (region_count[region[k]] == 1)
        ref = std::string("the only ") + cat + " in the " +
              kRegionName[region[k] / 3][region[k] % 3] + " of the image";
      if (ref.empty()) continue;
      if (l.width() < 16 || l.height() < 16) continue;
      if (!seen.insert(ref).second) continue;

      UniqueReference u;
      u.image = l.image;
      u.category = cat;
      u.reference = ref;
      u.x0 = l.x0;
      u.y0 = l.y0;
      u.x1 = l.x1;
      u.y1 = l.y1;
      CropBox c = crop_for(l, img_w, img_h);
      u.crop_x0 = c.x0;
      u.crop_y0 = c.y0;
      u.crop_x1 = c.x1;
      u.crop_y1 = c.y1;
      u.scale = c.scale;
      out.push_back(u);
    }
    i = j;
  }
  return out;
}

// -------------------------------------------------------------------- io --

namespace {

ojson parse_jsonl_line(const std::string& line, const std::string& path,
                       int lineno) {
  try {
    return ojson::parse(line);
  } catch (const ojson::exception& e) {
    throw UserError(path + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

std::string str_field(const ojson& j, const char* key, const std::string& ctx) {
  if (!j.contains(key) || !j[key].is_string())
    throw UserError(ctx + ": missing string field '" + key + "'");
  return j[key].get<std::string>();
}

std::int64_t int_field(const ojson& j, const char* key,
                       const std::string& ctx) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw UserError(ctx + ": missing integer field '" + key + "'");
  return j[key].get<std::int64_t>();
}

void bbox_field(const ojson& j, const std::string& ctx, std::int64_t& x0,
                std::int64_t& y0, std::int64_t& x1, std::int64_t& y1) {
  if (!j.contains("bbox") || !j["bbox"].is_array() || j["bbox"].size() != 4)
    throw UserError(ctx + ": field 'bbox' must be [x0, y0, x1, y1]");
  for (const auto& v : j["bbox"])
    if (!v.is_number_integer())
      throw UserError(ctx + ": 'bbox' entries must be integers");
  x0 = j["bbox"][0].get<std::int64_t>();
  y0 = j["bbox"][1].get<std::int64_t>();
  x1 = j["bbox"][2].get<std::int64_t>();
  y1 = j["bbox"][3].get<std::int64_t>();
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    if (blank) continue;
    fn(parse_jsonl_line(line, path, lineno),
       path + ":" + std::to_string(lineno));
  }
}

}  // namespace

std::vector<GroundTruthRegion> load_regions_jsonl(const std::string& path) {
  std::vector<GroundTruthRegion> out;
  for_each_jsonl(path, [&](const ojson& j, const std::string& ctx) {
    GroundTruthRegion g;
    g.image = str_field(j, "image", ctx);
    bbox_field(j, ctx, g.x0, g.y0, g.x1, g.y1);
    out.push_back(g);
  });
  return out;
}

std::vector<QARecord> load_qa_jsonl(const std::string& path) {
  std::vector<QARecord> out;
  for_each_jsonl(path, [&](const ojson& j, const std::string& ctx) {
    QARecord r;
    r.image = str_field(j, "image", ctx);
    r.question = str_field(j, "question", ctx);
    r.type = str_field(j, "type", ctx);
    r.answer = str_field(j, "answer", ctx);
    if (std::find(qa_types().begin(), qa_types().end(), r.type) ==
        qa_types().end())
      throw UserError(ctx + ": unknown question type '" + r.type + "'");
    if (normalize_answer(r.answer).empty())
      throw UserError(ctx + ": empty gold answer");
    out.push_back(r);
  });
  return out;
}

void merge_predictions_jsonl(std::vector<QARecord>& records,
                             const std::string& path) {
  std::map<std::pair<std::string, std::string>, std::string> preds;
  for_each_jsonl(path, [&](const ojson& j, const std::string& ctx) {
    preds[{str_field(j, "image", ctx), str_field(j, "question", ctx)}] =
        str_field(j, "prediction", ctx);
  });
  for (QARecord& r : records) {
    auto it = preds.find({r.image, r.question});
    if (it != preds.end()) r.prediction = it->second;
  }
}

std::vector<LabeledImage> load_labels_jsonl(const std::string& path) {
  std::vector<LabeledImage> out;
  std::map<std::string, std::size_t> index;
  for_each_jsonl(path, [&](const ojson& j, const std::string& ctx) {
    DetectionLabel l;
    l.image = str_field(j, "image", ctx);
    l.category = str_field(j, "category", ctx);
    bbox_field(j, ctx, l.x0, l.y0, l.x1, l.y1);
    const std::int64_t w = int_field(j, "image_width", ctx);
    const std::int64_t h = int_field(j, "image_height", ctx);
    auto it = index.find(l.image);
    if (it == index.end()) {
      index[l.image] = out.size();
      out.push_back({l.image, w, h, {}});
      it = index.find(l.image);
    } else if (out[it->second].width != w || out[it->second].height != h) {
      throw UserError(ctx + ": conflicting size for image '" + l.image + "'");
    }
    out[it->second].labels.push_back(l);
  });
  return out;
}

ojson references_json(const std::vector<UniqueReference>& refs) {
  ojson arr = ojson::array();
  for (const UniqueReference& r : refs) {
    ojson j;
    j["image"] = r.image;
    j["category"] = r.category;
    j["reference"] = r.reference;
    j["bbox"] = {r.x0, r.y0, r.x1, r.y1};
    j["crop"] = {r.crop_x0, r.crop_y0, r.crop_x1, r.crop_y1};
    j["scale"] = sig9(r.scale);
    arr.push_back(j);
  }
  return arr;
}

}  // namespace pyrfocus
