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

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "pyrfocus/cost.hpp"
#include "pyrfocus/distill.hpp"
#include "pyrfocus/eval.hpp"
#include "pyrfocus/prune.hpp"

namespace fs = std::filesystem;
using namespace pyrfocus;

namespace {

unsigned resolve_threads(int flag) {
  if (flag > 0) return static_cast<unsigned>(flag);
  if (const char* env = std::getenv("DIP_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (env[0] == '\0' || end == nullptr || *end != '\0' || v < 1)
      throw UserError("DIP_THREADS must be a positive integer");
    return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UserError("cannot create output directory " + dir);
}

void write_resolved(const std::string& out, const ojson& cfg) {
  save_json(out + "/resolved_config.json", cfg);
}

std::string two_dec(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// ------------------------------------------------------------------ build --

struct BuildArgs {
  std::string image, out;
  int tile_size = 336;
  int min_side = 1008;
  int threads = 0;
};

void cmd_build(const BuildArgs& a) {
  const unsigned threads = resolve_threads(a.threads);
  RasterImage img = load_image(a.image);
  PyramidConfig cfg;
  cfg.tile_size = a.tile_size;
  cfg.min_side = a.min_side;
  ImagePyramid pyr = build_pyramid(img, cfg, threads);

  ensure_dir(a.out);
  ojson manifest = manifest_json(pyr.geom);
  manifest["source_image"] = fs::absolute(a.image).lexically_normal().string();
  save_json(a.out + "/manifest.json", manifest);
  dump_tiles(pyr, a.out + "/tiles", threads);
  const bool gray = pyr.thumbnail.channels == 1;
  save_image(a.out + (gray ? "/thumbnail.pgm" : "/thumbnail.ppm"),
             pyr.thumbnail);

  ojson rc;
  rc["command"] = "build";
  rc["image"] = a.image;
  rc["tile_size"] = a.tile_size;
  rc["min_side"] = a.min_side;
  rc["threads"] = static_cast<int>(threads);
  rc["out"] = a.out;
  write_resolved(a.out, rc);

  std::cout << a.out + "/manifest.json" << "\n";
  std::cout << "levels: " << pyr.geom.P() << ", tiles:";
  for (const LevelGeometry& lv : pyr.geom.levels)
    std::cout << " " << lv.n_h * lv.n_w;
  std::cout << "\n";
}

// ------------------------------------------------------------------ prune --

struct PruneArgs {
  std::string image, manifest, out;
  std::string provider;
  std::string heat, attn_dir, checkpoint;
  double alpha = 0.25;
  int n_max = 40;
  std::string retain = "select";
  std::string depth = "dynamic";
  int tile_size = 336;
  int min_side = 1008;
  int n_sys = 1;
  int n_txt = 2;
  std::uint64_t embed_seed = 7;
  int threads = 0;
};

ImagePyramid pyramid_from_args(const std::string& image,
                               const std::string& manifest, int tile_size,
                               int min_side, unsigned threads) {
  if (image.empty() == manifest.empty())
    throw UserError("pass exactly one of --image or --manifest");
  PyramidConfig cfg;
  std::string src = image;
  if (!manifest.empty()) {
    ojson j = load_json(manifest);
    PyramidGeometry geom = manifest_from_json(j);
    cfg = geom.cfg;
    if (!j.contains("source_image") || !j["source_image"].is_string())
      throw UserError(manifest +
                      ": no source_image recorded; pass --image instead");
    src = j["source_image"].get<std::string>();
    if (!fs::path(src).is_absolute())
      src = (fs::path(manifest).parent_path() / src).string();
    ImagePyramid pyr = build_pyramid(load_image(src), cfg, threads);
    if (pyr.geom.orig_w != geom.orig_w || pyr.geom.orig_h != geom.orig_h ||
        pyr.geom.P() != geom.P())
      throw UserError(manifest + ": source image no longer matches");
    return pyr;
  }
  cfg.tile_size = tile_size;
  cfg.min_side = min_side;
  return build_pyramid(load_image(src), cfg, threads);
}

void parse_depth(const std::string& depth, PruneConfig& cfg) {
  if (depth == "dynamic") {
    cfg.depth_mode = DepthMode::dynamic;
    cfg.fixed_layers = 0;
    return;
  }
  try {
    std::size_t pos = 0;
    int n = std::stoi(depth, &pos);
    if (pos != depth.size()) throw std::invalid_argument(depth);
    cfg.depth_mode = DepthMode::fixed;
    cfg.fixed_layers = n;
  } catch (const std::exception&) {
    throw UserError("--depth must be 'dynamic' or a layer count, got '" +
                    depth + "'");
  }
}

void cmd_prune(const PruneArgs& a) {
  const unsigned threads = resolve_threads(a.threads);
  ImagePyramid pyr =
      pyramid_from_args(a.image, a.manifest, a.tile_size, a.min_side, threads);

  std::unique_ptr<AttentionProvider> prov;
  if (a.provider == "oracle") {
    if (a.heat.empty()) throw UserError("--provider oracle needs --heat");
    prov = std::make_unique<SyntheticProvider>(load_json(a.heat));
  } else if (a.provider == "file") {
    if (a.attn_dir.empty()) throw UserError("--provider file needs --attn-dir");
    prov = std::make_unique<FileProvider>(a.attn_dir);
  } else if (a.provider == "rfm") {
    if (a.checkpoint.empty())
      throw UserError("--provider rfm needs --checkpoint");
    RfmProviderConfig pc;
    pc.n_sys = a.n_sys;
    pc.n_txt = a.n_txt;
    pc.embed_seed = a.embed_seed;
    pc.threads = threads;
    prov = std::make_unique<RfmProvider>(load_checkpoint(a.checkpoint), pc);
  } else {
    throw UserError("--provider must be oracle, file or rfm");
  }

  PruneConfig cfg;
  cfg.alpha = a.alpha;
  cfg.n_max = a.n_max;
  cfg.retain_mode = retain_mode_from_string(a.retain);
  parse_depth(a.depth, cfg);

  PruneTrace trace = run_prune(pyr, *prov, cfg);

  ensure_dir(a.out);
  save_json(a.out + "/trace.json", trace_json(trace));

  // Re-score the terminal level for the heatmap; providers are pure, so
  // this replays exactly what the traversal saw.
  std::vector<TileId> encoded;
  if (trace.iterations.size() >= 2)
    encoded = trace.iterations[trace.iterations.size() - 2].key_tiles;
  else
    for (const Tile& t : pyr.geom.level(trace.terminal_level).tiles)
      encoded.push_back(TileId{trace.terminal_level, t.row, t.col});
  LevelTokens lt =
      make_level_tokens(pyr.geom, trace.terminal_level, encoded, cfg.layout);
  std::vector<double> scores = prov->scores(pyr, lt, cfg.layout);
  RasterImage hm = render_heatmap(pyr.geom, lt, scores, cfg.layout);
  save_image(a.out + "/heatmap.pgm", hm);

  ojson rc;
  rc["command"] = "prune";
  rc["image"] = a.image;
  rc["manifest"] = a.manifest;
  rc["provider"] = a.provider;
  rc["heat"] = a.heat;
  rc["attn_dir"] = a.attn_dir;
  rc["checkpoint"] = a.checkpoint;
  rc["alpha"] = sig9(a.alpha);
  rc["n_max"] = a.n_max;
  rc["retain"] = a.retain;
  rc["depth"] = a.depth;
  rc["n_sys"] = a.n_sys;
  rc["n_txt"] = a.n_txt;
  rc["embed_seed"] = a.embed_seed;
  rc["threads"] = static_cast<int>(threads);
  rc["out"] = a.out;
  write_resolved(a.out, rc);

  std::cout << a.out + "/trace.json" << "\n";
  std::cout << "terminal level " << trace.terminal_level << ", retained "
            << trace.retained_hr_count() << " hr tokens";
  if (trace.depth_clamped) std::cout << " (depth clamped)";
  std::cout << "\n";
}

// ---------------------------------------------------------------- distill --

struct DistillArgs {
  std::string config, out;
};

void cmd_distill(const DistillArgs& a) {
  TrainConfig cfg = train_config_from_json(load_json(a.config));
  DecoderStack teacher = make_stack(cfg.teacher);
  std::vector<PlantedSample> samples = make_planted_samples(
      cfg.task, cfg.teacher, cfg.plan, cfg.train_samples, cfg.seed);
  std::vector<DistillBatch> data;
  data.reserve(samples.size());
  for (PlantedSample& s : samples) data.push_back(std::move(s.batch));
  TrainResult result = train(teacher, data, cfg.plan, cfg.weights, cfg.steps,
                             cfg.lr, cfg.seed);

  ensure_dir(a.out);
  save_checkpoint(a.out + "/teacher.twts", teacher);
  save_checkpoint(a.out + "/student.twts", result.student);
  write_loss_csv(a.out + "/loss.csv", result.curve);
  write_resolved(a.out, train_config_to_json(cfg));

  const double initial = result.curve.front();
  const double final_loss = result.curve.back();
  char buf[96];
  std::snprintf(buf, sizeof(buf), "loss %.9g -> %.9g (ratio %.6f)", initial,
                final_loss, initial > 0 ? final_loss / initial : 0.0);
  std::cout << a.out + "/student.twts" << "\n" << buf << "\n";
}

// ------------------------------------------------------------------- cost --

struct CostArgs {
  std::string trace, out;
  int ff_coeff = 3;
  bool comparison = false;
};

void cmd_cost(const CostArgs& a) {
  PruneTrace trace = trace_from_json(load_json(a.trace));
  CostParams params;
  params.ff_coeff = a.ff_coeff;
  CostReport rep = pipeline_report(trace, params);

  ensure_dir(a.out);
  save_json(a.out + "/report.json", cost_report_json(rep));
  if (a.comparison) {
    std::ofstream csv(a.out + "/comparison.csv", std::ios::binary);
    if (!csv) throw UserError("cannot write " + a.out + "/comparison.csv");
    csv << comparison_csv(comparison_table(params));
  }

  ojson rc;
  rc["command"] = "cost";
  rc["trace"] = a.trace;
  rc["ff_coeff"] = a.ff_coeff;
  rc["comparison"] = a.comparison;
  rc["out"] = a.out;
  write_resolved(a.out, rc);

  std::cout << a.out + "/report.json" << "\n";
  std::cout << "encoder tokens " << rep.encoder_tokens << ", llm tokens "
            << rep.llm_tokens << ", total_tflops " << two_dec(rep.total_tflops())
            << "\n";
}

// ------------------------------------------------------------ eval recall --

struct RecallArgs {
  std::string trace, manifest, regions, out;
};

void cmd_eval_recall(const RecallArgs& a) {
  PyramidGeometry geom = manifest_from_json(load_json(a.manifest));
  PruneTrace trace = trace_from_json(load_json(a.trace));
  if (trace.orig_w != geom.orig_w || trace.orig_h != geom.orig_h)
    throw UserError("trace and manifest describe different images");
  std::vector<RectD> fp = retained_footprints(trace, geom);
  std::vector<GroundTruthRegion> regions = load_regions_jsonl(a.regions);

  RecallStats stats;
  ojson records = ojson::array();
  for (const GroundTruthRegion& g : regions) {
    g.validate(geom.orig_w, geom.orig_h);
    const double covered = covered_fraction(fp, g.rect());
    const bool hit = covered > 0.5;
    stats.total += 1;
    stats.hits += hit ? 1 : 0;
    ojson r;
    r["image"] = g.image;
    r["bbox"] = {g.x0, g.y0, g.x1, g.y1};
    r["covered"] = sig9(covered);
    r["hit"] = hit;
    records.push_back(r);
  }

  ensure_dir(a.out);
  ojson j;
  j["total"] = stats.total;
  j["hits"] = stats.hits;
  j["recall"] = sig9(stats.recall());
  j["records"] = records;
  save_json(a.out + "/recall.json", j);

  ojson rc;
  rc["command"] = "eval recall";
  rc["trace"] = a.trace;
  rc["manifest"] = a.manifest;
  rc["regions"] = a.regions;
  rc["out"] = a.out;
  write_resolved(a.out, rc);

  std::cout << a.out + "/recall.json" << "\n";
  std::cout << "recall " << stats.hits << "/" << stats.total << " = "
            << sig9(stats.recall()) << "\n";
}

// --------------------------------------------------------------- eval vqa --

struct VqaArgs {
  std::string qa, predictions, lexicon, taxonomy, out;
  double threshold = 0.8;
};

// Highest score of the enabled providers decides.
class BestOfSimilarity : public SimilarityProvider {
 public:
  void add(std::unique_ptr<SimilarityProvider> p) {
    providers_.push_back(std::move(p));
  }
  std::string name() const override {
    std::string n;
    for (const auto& p : providers_) n += (n.empty() ? "" : "+") + p->name();
    return n.empty() ? "exact" : n;
  }
  double similarity(const std::string& a, const std::string& b) override {
    double best = 0.0;
    for (const auto& p : providers_)
      best = std::max(best, p->similarity(a, b));
    return best;
  }

 private:
  std::vector<std::unique_ptr<SimilarityProvider>> providers_;
};

void cmd_eval_vqa(const VqaArgs& a) {
  std::vector<QARecord> records = load_qa_jsonl(a.qa);
  merge_predictions_jsonl(records, a.predictions);

  BestOfSimilarity sim;
  if (!a.lexicon.empty())
    sim.add(std::make_unique<LexiconSimilarity>(load_json(a.lexicon)));
  if (!a.taxonomy.empty())
    sim.add(std::make_unique<TaxonomySimilarity>(load_json(a.taxonomy)));

  std::vector<TypeAccuracy> rows = score_dataset(records, sim, a.threshold);

  ensure_dir(a.out);
  std::ofstream csv(a.out + "/accuracy.csv", std::ios::binary);
  if (!csv) throw UserError("cannot write " + a.out + "/accuracy.csv");
  csv << accuracy_csv(rows);
  csv.close();

  int total = 0, correct = 0;
  ojson types = ojson::array();
  for (const TypeAccuracy& r : rows) {
    ojson t;
    t["type"] = r.type;
    t["total"] = r.total;
    t["correct"] = r.correct;
    t["accuracy_pct"] = sig9(r.accuracy_pct());
    types.push_back(t);
    total += r.total;
    correct += r.correct;
  }
  ojson j;
  j["provider"] = sim.name();
  j["threshold"] = sig9(a.threshold);
  j["types"] = types;
  j["total"] = total;
  j["correct"] = correct;
  j["accuracy_pct"] =
      sig9(total > 0 ? 100.0 * correct / total : 0.0);
  save_json(a.out + "/vqa.json", j);

  ojson rc;
  rc["command"] = "eval vqa";
  rc["qa"] = a.qa;
  rc["predictions"] = a.predictions;
  rc["lexicon"] = a.lexicon;
  rc["taxonomy"] = a.taxonomy;
  rc["threshold"] = sig9(a.threshold);
  rc["out"] = a.out;
  write_resolved(a.out, rc);

  std::cout << a.out + "/vqa.json" << "\n";
  std::cout << "overall " << correct << "/" << total << "\n";
}

// ----------------------------------------------------------------- refgen --

struct RefgenArgs {
  std::string labels, out;
};

void cmd_refgen(const RefgenArgs& a) {
  std::vector<LabeledImage> images = load_labels_jsonl(a.labels);
  std::vector<UniqueReference> all;
  for (const LabeledImage& li : images) {
    std::vector<UniqueReference> refs =
        extract_unique_references(li.labels, li.width, li.height);
    all.insert(all.end(), refs.begin(), refs.end());
  }

  ensure_dir(a.out);
  save_json(a.out + "/references.json", references_json(all));

  ojson rc;
  rc["command"] = "refgen";
  rc["labels"] = a.labels;
  rc["out"] = a.out;
  write_resolved(a.out, rc);

  std::cout << a.out + "/references.json" << "\n";
  std::cout << all.size() << " unique references from " << images.size()
            << " images\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "pyrfocus: coarse-to-fine token pruning for very large images"};
  app.require_subcommand(1);

  BuildArgs build_args;
  CLI::App* build = app.add_subcommand(
      "build", "Build an image pyramid: manifest, tiles and thumbnail");
  build->add_option("--image", build_args.image, "Input raster (PPM or PGM)")
      ->required();
  build->add_option("--tile-size", build_args.tile_size, "Tile side in pixels")
      ->capture_default_str();
  build->add_option("--min-side", build_args.min_side,
                    "Coarsest level's shorter-side bound")
      ->capture_default_str();
  build->add_option("--threads", build_args.threads,
                    "Worker threads (0 = DIP_THREADS or hardware)")
      ->capture_default_str();
  build->add_option("--out", build_args.out, "Output directory")->required();

  PruneArgs prune_args;
  CLI::App* prune = app.add_subcommand(
      "prune", "Coarse-to-fine tile selection over a pyramid");
  prune->add_option("--image", prune_args.image,
                    "Input raster (builds the pyramid in memory)");
  prune->add_option("--manifest", prune_args.manifest,
                    "Manifest from a previous build (alternative to --image)");
  prune->add_option("--provider", prune_args.provider,
                    "Attention source: oracle, file or rfm")
      ->required();
  prune->add_option("--heat", prune_args.heat,
                    "Heat-field JSON for the oracle provider");
  prune->add_option("--attn-dir", prune_args.attn_dir,
                    "Directory of level_{p}.attn files for the file provider");
  prune->add_option("--checkpoint", prune_args.checkpoint,
                    "Decoder checkpoint for the rfm provider");
  prune->add_option("--alpha", prune_args.alpha, "Token saving ratio")
      ->capture_default_str();
  prune->add_option("--nmax", prune_args.n_max,
                    "Key-tile budget for dynamic depth")
      ->capture_default_str();
  prune->add_option("--retain", prune_args.retain,
                    "Retained set: select or concat")
      ->capture_default_str();
  prune->add_option("--depth", prune_args.depth,
                    "dynamic, or a fixed total layer count")
      ->capture_default_str();
  prune->add_option("--tile-size", prune_args.tile_size,
                    "Tile side when building from --image")
      ->capture_default_str();
  prune->add_option("--min-side", prune_args.min_side,
                    "Shorter-side bound when building from --image")
      ->capture_default_str();
  prune->add_option("--n-sys", prune_args.n_sys,
                    "System tokens for the rfm provider")
      ->capture_default_str();
  prune->add_option("--n-txt", prune_args.n_txt,
                    "Text tokens for the rfm provider")
      ->capture_default_str();
  prune->add_option("--embed-seed", prune_args.embed_seed,
                    "Embedding seed for the rfm provider")
      ->capture_default_str();
  prune->add_option("--threads", prune_args.threads,
                    "Worker threads (0 = DIP_THREADS or hardware)")
      ->capture_default_str();
  prune->add_option("--out", prune_args.out, "Output directory")->required();

  DistillArgs distill_args;
  CLI::App* distill = app.add_subcommand(
      "distill", "Train a student stack against planted teacher attention");
  distill->add_option("--config", distill_args.config, "Training config JSON")
      ->required();
  distill->add_option("--out", distill_args.out, "Output directory")
      ->required();

  CostArgs cost_args;
  CLI::App* cost = app.add_subcommand(
      "cost", "Token and FLOPs report for a recorded pruning run");
  cost->add_option("--trace", cost_args.trace, "Trace JSON from prune")
      ->required();
  cost->add_option("--ff-coeff", cost_args.ff_coeff,
                   "Feed-forward matmul count (3 gated, 2 plain)")
      ->capture_default_str();
  cost->add_flag("--comparison", cost_args.comparison,
                 "Also write the fixed comparison table CSV");
  cost->add_option("--out", cost_args.out, "Output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluation metrics");
  eval->require_subcommand(1);

  RecallArgs recall_args;
  CLI::App* recall = eval->add_subcommand(
      "recall", "Localization recall of retained tokens over regions");
  recall->add_option("--trace", recall_args.trace, "Trace JSON from prune")
      ->required();
  recall->add_option("--manifest", recall_args.manifest,
                     "Manifest of the same image")
      ->required();
  recall->add_option("--regions", recall_args.regions,
                     "Ground-truth regions JSONL")
      ->required();
  recall->add_option("--out", recall_args.out, "Output directory")->required();

  VqaArgs vqa_args;
  CLI::App* vqa =
      eval->add_subcommand("vqa", "Open-ended answer accuracy by type");
  vqa->add_option("--qa", vqa_args.qa, "Gold QA JSONL")->required();
  vqa->add_option("--predictions", vqa_args.predictions, "Predictions JSONL")
      ->required();
  vqa->add_option("--lexicon", vqa_args.lexicon, "Synonym lexicon JSON");
  vqa->add_option("--taxonomy", vqa_args.taxonomy, "Category taxonomy JSON");
  vqa->add_option("--threshold", vqa_args.threshold, "Similarity threshold")
      ->capture_default_str();
  vqa->add_option("--out", vqa_args.out, "Output directory")->required();

  RefgenArgs refgen_args;
  CLI::App* refgen = app.add_subcommand(
      "refgen", "Rule-based unique references from detection labels");
  refgen->add_option("--labels", refgen_args.labels, "Detection labels JSONL")
      ->required();
  refgen->add_option("--out", refgen_args.out, "Output directory")->required();

  build->callback([&] { cmd_build(build_args); });
  prune->callback([&] { cmd_prune(prune_args); });
  distill->callback([&] { cmd_distill(distill_args); });
  cost->callback([&] { cmd_cost(cost_args); });
  recall->callback([&] { cmd_eval_recall(recall_args); });
  vqa->callback([&] { cmd_eval_vqa(vqa_args); });
  refgen->callback([&] { cmd_refgen(refgen_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
