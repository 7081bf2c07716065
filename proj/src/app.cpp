#include "jelly/app.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "jelly/checkpoint.hpp"
#include "jelly/errors.hpp"
#include "jelly/explain.hpp"
#include "jelly/image_io.hpp"
#include "jelly/synth.hpp"

namespace jelly::app {

using nlohmann::json;

json to_json(const SynthOptions& o) {
  return {{"n", o.n},
          {"positive_ratio", o.positive_ratio},
          {"out", o.out.string()},
          {"seed", o.seed},
          {"frame_width", o.frame_width},
          {"frame_height", o.frame_height},
          {"roi_width", o.roi_width}};
}

json to_json(const PreprocessOptions& o) {
  return {{"input", o.input.string()},
          {"out", o.out.string()},
          {"width", o.width},
          {"height", o.height},
          {"search_radius", o.search_radius}};
}

json to_json(const TrainOptions& o) {
  const TrainConfig& c = o.config;
  return {{"manifest", o.manifest.string()},
          {"out", o.out.string()},
          {"width", o.width},
          {"height", o.height},
          {"search_radius", o.search_radius},
          {"batch", c.batch_size},
          {"lr", c.learning_rate},
          {"epochs", c.max_epochs},
          {"window", c.window},
          {"flip", c.flip_probability},
          {"seeds", c.seeds},
          {"variant", to_string(c.variant)},
          {"input_mode", to_string(c.input_mode)},
          {"backbone", to_string(c.backbone)},
          {"hidden", c.hidden_size},
          {"tiny_width", c.tiny_width},
          {"folds", c.folds},
          {"val_fraction", c.val_fraction},
          {"split_seed", c.split_seed},
          {"threshold", c.threshold},
          {"ablation", c.ablation},
          {"jobs", c.jobs}};
}

json to_json(const EvalOptions& o) {
  return {{"checkpoint", o.checkpoint.string()},
          {"manifest", o.manifest.string()},
          {"out", o.out.string()},
          {"window", o.window},
          {"threshold", o.threshold},
          {"search_radius", o.search_radius}};
}

json to_json(const ExplainOptions& o) {
  return {{"checkpoint", o.checkpoint.string()},
          {"case", o.case_dir.string()},
          {"out", o.out.string()},
          {"frame", o.frame},
          {"layer", o.layer},
          {"search_radius", o.search_radius}};
}

namespace {

template <typename V>
void read_field(const json& j, const char* key, V& value) {
  if (!j.contains(key)) return;
  try {
    value = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run.json: bad value for '") + key + "': " + e.what());
  }
}

void read_path(const json& j, const char* key, fs::path& value) {
  std::string s = value.string();
  read_field(j, key, s);
  value = s;
}

}  // namespace

void from_json(const json& j, SynthOptions& o) {
  read_field(j, "n", o.n);
  read_field(j, "positive_ratio", o.positive_ratio);
  read_path(j, "out", o.out);
  read_field(j, "seed", o.seed);
  read_field(j, "frame_width", o.frame_width);
  read_field(j, "frame_height", o.frame_height);
  read_field(j, "roi_width", o.roi_width);
}

void from_json(const json& j, PreprocessOptions& o) {
  read_path(j, "input", o.input);
  read_path(j, "out", o.out);
  read_field(j, "width", o.width);
  read_field(j, "height", o.height);
  read_field(j, "search_radius", o.search_radius);
}

void from_json(const json& j, TrainOptions& o) {
  TrainConfig& c = o.config;
  read_path(j, "manifest", o.manifest);
  read_path(j, "out", o.out);
  read_field(j, "width", o.width);
  read_field(j, "height", o.height);
  read_field(j, "search_radius", o.search_radius);
  read_field(j, "batch", c.batch_size);
  read_field(j, "lr", c.learning_rate);
  read_field(j, "epochs", c.max_epochs);
  read_field(j, "window", c.window);
  read_field(j, "flip", c.flip_probability);
  read_field(j, "seeds", c.seeds);
  std::string variant = to_string(c.variant), mode = to_string(c.input_mode), backbone = to_string(c.backbone);
  read_field(j, "variant", variant);
  read_field(j, "input_mode", mode);
  read_field(j, "backbone", backbone);
  c.variant = parse_variant(variant);
  c.input_mode = parse_input_mode(mode);
  c.backbone = parse_backbone(backbone);
  read_field(j, "hidden", c.hidden_size);
  read_field(j, "tiny_width", c.tiny_width);
  read_field(j, "folds", c.folds);
  read_field(j, "val_fraction", c.val_fraction);
  read_field(j, "split_seed", c.split_seed);
  read_field(j, "threshold", c.threshold);
  read_field(j, "ablation", c.ablation);
  read_field(j, "jobs", c.jobs);
}

void from_json(const json& j, EvalOptions& o) {
  read_path(j, "checkpoint", o.checkpoint);
  read_path(j, "manifest", o.manifest);
  read_path(j, "out", o.out);
  read_field(j, "window", o.window);
  read_field(j, "threshold", o.threshold);
  read_field(j, "search_radius", o.search_radius);
}

void from_json(const json& j, ExplainOptions& o) {
  read_path(j, "checkpoint", o.checkpoint);
  read_path(j, "case", o.case_dir);
  read_path(j, "out", o.out);
  read_field(j, "frame", o.frame);
  read_field(j, "layer", o.layer);
  read_field(j, "search_radius", o.search_radius);
}

void write_run_json(const fs::path& dir, const std::string& command, const json& options) {
  fs::create_directories(dir);
  std::ofstream out(dir / "run.json");
  out << json{{"command", command}, {"options", options}}.dump(2) << "\n";
  if (!out) throw Error((dir / "run.json").string() + ": write failed");
}

json read_run_json(const fs::path& file, const std::string& command) {
  std::ifstream in(file);
  if (!in) throw InputError(file.string() + ": cannot open");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DecodeError(file.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("options") || j.value("command", "") != command) {
    throw ConfigError(file.string() + ": not a '" + command + "' run.json");
  }
  return j.at("options");
}

PreparedCase load_or_prepare(const fs::path& case_dir, const StabilizeOptions& options) {
  if (is_prepared_dir(case_dir)) return load_prepared(case_dir);
  return prepare_case(load_case(case_dir), options);
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, const StabilizeOptions& options) {
  std::vector<Sample> samples(manifest.size());
  std::vector<std::string> errors(manifest.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    try {
      StabilizeOptions inner = options;
      inner.exec = kernels::Exec::serial;
      const auto& e = manifest.entries[i];
      PreparedCase p = load_or_prepare(e.path, inner);
      if (p.label != e.label) {
        throw InputError(e.case_id + ": manifest label " + std::to_string(e.label) + " differs from annotation");
      }
      samples[i] = {e.case_id, e.label, p.input()};
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw InputError(e);
  }
  for (const auto& s : samples) {
    const auto& first = samples.front().input;
    if (s.input.width() != first.width() || s.input.height() != first.height()) {
      throw InputError(s.case_id + ": input is " + std::to_string(s.input.width()) + "x" +
                       std::to_string(s.input.height()) + ", " + samples.front().case_id + " is " +
                       std::to_string(first.width()) + "x" + std::to_string(first.height()));
    }
  }
  return samples;
}

void run_synth(const SynthOptions& o) {
  synth::SpecRanges ranges;
  ranges.frame_width = o.frame_width;
  ranges.frame_height = o.frame_height;
  ranges.roi_width = o.roi_width;
  synth::generate_dataset(o.out, o.n, o.positive_ratio, ranges, o.seed);
  write_run_json(o.out, "synth", to_json(o));
}

void run_preprocess(const PreprocessOptions& o) {
  DatasetManifest in = fs::is_directory(o.input) ? build_manifest(o.input) : read_manifest_csv(o.input);
  if (fs::is_directory(o.input)) {
    for (auto& e : in.entries) e.path = o.input / e.path;
  }
  StabilizeOptions so;
  so.width = o.width;
  so.height = o.height;
  so.search_radius = o.search_radius;
  DatasetManifest out;
  for (const auto& e : in.entries) {
    const PreparedCase p = prepare_case(load_case(e.path), so);
    const fs::path dir = o.out / e.case_id;
    save_prepared(dir, p);
    for (const char* extra : {"truth.json", "mask.png"}) {
      if (fs::exists(e.path / extra)) fs::copy_file(e.path / extra, dir / extra, fs::copy_options::overwrite_existing);
    }
    out.entries.push_back({e.case_id, e.case_id, e.label});
  }
  write_manifest_csv(o.out / "manifest.csv", out);
  write_run_json(o.out, "preprocess", to_json(o));
}

namespace {

std::string cell_stem(const StudyReport& study, const CellResult& cell) {
  std::string name = study.name;
  for (char& ch : name) {
    if (ch == '/') ch = '_';
  }
  return name + "_seed" + std::to_string(cell.seed) + "_fold" + std::to_string(cell.fold + 1);
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  out << text;
  if (!out) throw Error(file.string() + ": write failed");
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

ExperimentReport run_train(const TrainOptions& o) {
  validate(o.config);
  const DatasetManifest manifest = read_manifest_csv(o.manifest);
  if (manifest.size() == 0) throw EmptyDatasetError(o.manifest.string() + ": no cases");
  StabilizeOptions so;
  so.width = o.width;
  so.height = o.height;
  so.search_radius = o.search_radius;
  const std::vector<Sample> samples = load_samples(manifest, so);

  DatasetManifest ids;
  for (const auto& e : manifest.entries) ids.entries.push_back({e.case_id, e.case_id, e.label});
  const SplitPlan plan = stratified_kfold(ids, o.config.folds, o.config.val_fraction, o.config.split_seed);

  fs::create_directories(o.out / "curves");
  fs::create_directories(o.out / "checkpoints");
  write_run_json(o.out, "train", to_json(o));

  json splits = json::array();
  for (const auto& f : plan.folds) splits.push_back({{"train", f.train}, {"val", f.val}, {"test", f.test}});
  write_text(o.out / "splits.json", json{{"seed", plan.seed}, {"folds", splits}}.dump(2) + "\n");

  const auto hook = [&](const StudyReport& study, const CellResult& cell, const FoldResult& fold) {
    const std::string stem = cell_stem(study, cell);
    std::ostringstream csv;
    csv << "epoch,train_loss,val_loss\n";
    for (const auto& e : fold.curve) {
      csv << e.epoch << "," << format_double(e.train_loss) << "," << format_double(e.val_loss) << "\n";
    }
    write_text(o.out / "curves" / (stem + ".csv"), csv.str());
    save_checkpoint(o.out / "checkpoints" / (stem + ".ckpt"), fold.best);
    std::cerr << "[train] " << stem << " best_epoch=" << cell.best_epoch << " val_loss=" << cell.best_val_loss
              << " acc=" << cell.metrics.accuracy << "\n";
  };
  const ExperimentReport report = run_experiment(samples, plan, o.config, hook);
  write_text(o.out / "report.json", report_to_json(report) + "\n");
  return report;
}

Metrics run_eval(const EvalOptions& o) {
  if (o.window < 1) throw ConfigError("window must be at least 1");
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  Classifier<float> model = instantiate(cp);
  const DatasetManifest manifest = read_manifest_csv(o.manifest);
  if (manifest.size() == 0) throw EmptyDatasetError(o.manifest.string() + ": no cases");
  StabilizeOptions so;
  so.width = cp.config.input_width;
  so.height = cp.config.input_height;
  so.search_radius = o.search_radius;
  const std::vector<Sample> samples = load_samples(manifest, so);

  TrainConfig tc;
  tc.window = o.window;
  tc.threshold = o.threshold;
  tc.input_mode = cp.config.input_channels == 2 ? InputMode::two_channel : InputMode::video_only;
  std::vector<const Sample*> ptrs;
  std::vector<int> labels;
  for (const auto& s : samples) {
    ptrs.push_back(&s);
    labels.push_back(s.label);
  }
  const std::vector<double> probs = predict_probabilities(model, ptrs, tc);
  const Metrics m = compute_metrics(probs, labels, o.threshold);

  fs::create_directories(o.out);
  write_run_json(o.out, "eval", to_json(o));
  std::ostringstream csv;
  csv << "case_id,label,probability,predicted\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    csv << samples[i].case_id << "," << samples[i].label << "," << format_double(probs[i]) << ","
        << (probs[i] >= o.threshold ? 1 : 0) << "\n";
  }
  write_text(o.out / "predictions.csv", csv.str());
  const json metrics = {{"accuracy", m.accuracy},
                        {"precision", m.precision},
                        {"recall", m.recall},
                        {"tp", m.tp},
                        {"fp", m.fp},
                        {"tn", m.tn},
                        {"fn", m.fn},
                        {"precision_degenerate", m.precision_degenerate},
                        {"recall_degenerate", m.recall_degenerate}};
  write_text(o.out / "metrics.json", metrics.dump(2) + "\n");
  return m;
}

std::vector<double> run_explain(const ExplainOptions& o) {
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  Classifier<float> model = instantiate(cp);
  StabilizeOptions so;
  so.width = cp.config.input_width;
  so.height = cp.config.input_height;
  so.search_radius = o.search_radius;
  const PreparedCase prepared = load_or_prepare(o.case_dir, so);
  const InputTensor full = prepared.input();
  const InputTensor input = cp.config.input_channels == 2 ? full : video_only(full);
  if (o.frame < 0 || o.frame > input.frames()) {
    throw RangeError("frame " + std::to_string(o.frame) + " outside 1.." + std::to_string(input.frames()));
  }
  const int chosen = (o.frame == 0 ? input.frames() : o.frame) - 1;
  const std::vector<ActivationMap> maps = gradcam_pp_all(model, input, o.layer);

  std::optional<Mask> lesion;
  if (fs::exists(o.case_dir / "truth.json")) {
    const synth::SynthTruth truth = synth::load_truth(o.case_dir);
    lesion = synth::lesion_mask_in_patch(truth.lesion_mask, prepared.roi, input.width(), input.height());
  }

  const fs::path dir = o.out / prepared.case_id;
  fs::create_directories(dir);
  write_run_json(dir, "explain", to_json(o));
  const Image& frame = prepared.plaque.frames[static_cast<std::size_t>(chosen)];
  io::write_png_rgb(dir / ("frame_" + std::to_string(chosen + 1) + ".png"),
                    render_overlay(maps[static_cast<std::size_t>(chosen)], frame, lesion));

  std::vector<double> scores;
  std::ostringstream csv;
  csv << "frame,localization_score\n";
  for (const auto& m : maps) {
    const double s = lesion ? localization_score(m, *lesion) : 0.0;
    if (lesion) scores.push_back(s);
    csv << m.frame_index + 1 << ",";
    if (lesion) csv << format_double(s);
    csv << "\n";
  }
  write_text(dir / "scores.csv", csv.str());
  return scores;
}

}  // namespace jelly::app
