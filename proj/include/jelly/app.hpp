#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "jelly/preprocess.hpp"
#include "jelly/training.hpp"

namespace jelly::app {

namespace fs = std::filesystem;

struct SynthOptions {
  int n = 200;
  double positive_ratio = 0.5;
  fs::path out = "data";
  std::uint64_t seed = 0;
  int frame_width = 400;
  int frame_height = 300;
  int roi_width = 200;
};

struct PreprocessOptions {
  fs::path input;  // dataset root or manifest.csv
  fs::path out = "preprocessed";
  int width = kDefaultInputWidth;
  int height = kDefaultInputHeight;
  int search_radius = -1;
};

struct TrainOptions {
  fs::path manifest;
  fs::path out = "runs/train";
  TrainConfig config;
  int width = kDefaultInputWidth;   // used for cases that still need preprocessing
  int height = kDefaultInputHeight;
  int search_radius = -1;
};

struct EvalOptions {
  fs::path checkpoint;
  fs::path manifest;
  fs::path out = "runs/eval";
  int window = 45;
  double threshold = 0.5;
  int search_radius = -1;
};

struct ExplainOptions {
  fs::path checkpoint;
  fs::path case_dir;
  fs::path out = "explain";
  int frame = 0;  // 1-based; 0 = last frame
  std::string layer;
  int search_radius = -1;
};

nlohmann::json to_json(const SynthOptions& o);
nlohmann::json to_json(const PreprocessOptions& o);
nlohmann::json to_json(const TrainOptions& o);
nlohmann::json to_json(const EvalOptions& o);
nlohmann::json to_json(const ExplainOptions& o);

void from_json(const nlohmann::json& j, SynthOptions& o);
void from_json(const nlohmann::json& j, PreprocessOptions& o);
void from_json(const nlohmann::json& j, TrainOptions& o);
void from_json(const nlohmann::json& j, EvalOptions& o);
void from_json(const nlohmann::json& j, ExplainOptions& o);

/// {"command": ..., "options": {...}} as written next to every run's artifacts.
void write_run_json(const fs::path& dir, const std::string& command, const nlohmann::json& options);
/// Options object of a run.json; throws ConfigError if it belongs to another command.
nlohmann::json read_run_json(const fs::path& file, const std::string& command);

/// Loads a manifest entry, preprocessing raw cases on the fly. Preprocessed
/// cases keep the size they were written at.
PreparedCase load_or_prepare(const fs::path& case_dir, const StabilizeOptions& options);
std::vector<Sample> load_samples(const DatasetManifest& manifest, const StabilizeOptions& options);

void run_synth(const SynthOptions& o);
void run_preprocess(const PreprocessOptions& o);
ExperimentReport run_train(const TrainOptions& o);
Metrics run_eval(const EvalOptions& o);
/// Returns the localization score of every frame (empty without truth.json).
std::vector<double> run_explain(const ExplainOptions& o);

}  // namespace jelly::app
