#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "jelly/checkpoint.hpp"
#include "jelly/data_model.hpp"
#include "jelly/model.hpp"
#include "jelly/preprocess.hpp"
#include "jelly/random.hpp"

namespace jelly {

enum class InputMode { two_channel, video_only };

std::string to_string(InputMode m);
InputMode parse_input_mode(const std::string& s);  // throws ConfigError

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 0.01;
  int max_epochs = 150;
  int window = 45;
  double flip_probability = 0.5;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  Variant variant = Variant::bilstm;
  InputMode input_mode = InputMode::two_channel;
  Backbone backbone = Backbone::resnet18;
  int hidden_size = 128;
  int tiny_width = 8;
  int folds = 5;
  double val_fraction = 0.1;
  std::uint64_t split_seed = 0;
  double threshold = 0.5;
  /// Also run the video-only input and the LSTM / FC heads.
  bool ablation = false;
  /// Concurrent (seed, fold) jobs.
  int jobs = 1;
};

void validate(const TrainConfig& config);
ModelConfig model_config(const TrainConfig& config, int input_width, int input_height);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int tp = 0, fp = 0, tn = 0, fn = 0;
  /// Set when the ratio's denominator was zero and the value defaulted to 0.
  bool precision_degenerate = false;
  bool recall_degenerate = false;
};

/// Positive iff probability >= threshold.
Metrics compute_metrics(const std::vector<double>& probabilities, const std::vector<int>& labels,
                        double threshold = 0.5);

struct FlipDraw {
  bool horizontal = false;
  bool vertical = false;
};

FlipDraw draw_flips(double flip_probability, Rng& rng);
/// Mirrors every frame and channel alike.
InputTensor apply_flips(const InputTensor& input, FlipDraw flips);
InputTensor augment_spatial(const InputTensor& input, double flip_probability, Rng& rng);

/// Frame indices of a `window`-long crop starting at `start`; clips shorter
/// than the window are reflect-padded (0 1 .. n-1 n-2 .. 1 0 1 ..).
std::vector<int> crop_indices(int length, int start, int window);
InputTensor select_frames(const InputTensor& input, const std::vector<int>& indices);
InputTensor augment_temporal_crop(const InputTensor& input, int window, Rng& rng);
/// Evaluation crop: centered window when long enough, else the full clip.
InputTensor center_crop(const InputTensor& input, int window);

struct Sample {
  std::string case_id;
  int label = 0;
  InputTensor input;  // full length, two channels
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct FoldResult {
  Checkpoint best;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochLog> curve;
};

/// Index of the minimal loss; ties resolve to the earliest entry.
std::size_t select_best_epoch(const std::vector<EpochLog>& curve);

/// Epoch loop with min-validation-loss model selection. `model` ends holding
/// its last-epoch weights; the selected weights are in the result.
FoldResult train_fold(const std::vector<const Sample*>& train, const std::vector<const Sample*>& val,
                      const TrainConfig& config, Classifier<float>& model, std::uint64_t seed);

double evaluate_loss(Classifier<float>& model, const std::vector<const Sample*>& samples, const TrainConfig& config);
std::vector<double> predict_probabilities(Classifier<float>& model, const std::vector<const Sample*>& samples,
                                          const TrainConfig& config);

struct CellResult {
  std::uint64_t seed = 0;
  int fold = 0;
  Metrics metrics;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population std over per-seed means
};

struct Aggregate {
  MetricSummary accuracy, precision, recall;
};

struct StudyReport {
  std::string name;
  Variant variant = Variant::bilstm;
  InputMode input_mode = InputMode::two_channel;
  std::vector<CellResult> cells;
  Aggregate aggregate;
};

struct ExperimentReport {
  std::vector<StudyReport> studies;
  const StudyReport& study(const std::string& name) const;
};

Aggregate aggregate(const std::vector<CellResult>& cells);

/// Called once per finished (study, seed, fold) job, in job order.
using CellHook = std::function<void(const StudyReport& study, const CellResult& cell, const FoldResult& fold)>;

/// Every seed x fold: build, train, evaluate on the test fold. With
/// `config.ablation` the video-only input and the LSTM and FC heads run too.
ExperimentReport run_experiment(const std::vector<Sample>& dataset, const SplitPlan& plan, const TrainConfig& config,
                                const CellHook& hook = {});

std::string report_to_json(const ExperimentReport& report);

}  // namespace jelly
