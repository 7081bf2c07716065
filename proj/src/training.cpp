#include "jelly/training.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include <json.hpp>

#include "jelly/errors.hpp"

namespace jelly {

std::string to_string(InputMode m) { return m == InputMode::two_channel ? "two-channel" : "video-only"; }

InputMode parse_input_mode(const std::string& s) {
  if (s == "two-channel") return InputMode::two_channel;
  if (s == "video-only") return InputMode::video_only;
  throw ConfigError("unknown input mode '" + s + "' (expected two-channel or video-only)");
}

void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (c.max_epochs < 1) throw ConfigError("epochs must be positive");
  if (c.window < 1) throw ConfigError("crop window must be at least 1");
  if (!(c.flip_probability >= 0.0 && c.flip_probability <= 1.0)) throw ConfigError("flip probability must be in [0,1]");
  if (c.seeds.empty()) throw ConfigError("need at least one seed");
  if (c.folds < 2) throw ConfigError("need at least 2 folds");
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) throw ConfigError("validation fraction must be in (0,1)");
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) throw ConfigError("threshold must be in (0,1)");
  if (c.jobs < 1) throw ConfigError("jobs must be positive");
}

ModelConfig model_config(const TrainConfig& c, int input_width, int input_height) {
  ModelConfig m;
  m.variant = c.variant;
  m.backbone = c.backbone;
  m.hidden_size = c.hidden_size;
  m.tiny_width = c.tiny_width;
  m.input_channels = c.input_mode == InputMode::two_channel ? 2 : 1;
  m.input_width = input_width;
  m.input_height = input_height;
  return m;
}

Metrics compute_metrics(const std::vector<double>& probabilities, const std::vector<int>& labels, double threshold) {
  if (probabilities.empty() || probabilities.size() != labels.size()) {
    throw InputError("metrics need equally many nonempty predictions and labels");
  }
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = probabilities[i] >= threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++m.tp;
    else if (predicted) ++m.fp;
    else if (actual) ++m.fn;
    else ++m.tn;
  }
  const double total = static_cast<double>(labels.size());
  m.accuracy = (m.tp + m.tn) / total;
  m.precision_degenerate = m.tp + m.fp == 0;
  m.recall_degenerate = m.tp + m.fn == 0;
  m.precision = m.precision_degenerate ? 0.0 : static_cast<double>(m.tp) / (m.tp + m.fp);
  m.recall = m.recall_degenerate ? 0.0 : static_cast<double>(m.tp) / (m.tp + m.fn);
  return m;
}

FlipDraw draw_flips(double flip_probability, Rng& rng) {
  FlipDraw d;
  d.horizontal = rng.bernoulli(flip_probability);
  d.vertical = rng.bernoulli(flip_probability);
  return d;
}

InputTensor apply_flips(const InputTensor& input, FlipDraw flips) {
  if (!flips.horizontal && !flips.vertical) return input;
  InputTensor out(input.frames(), input.width(), input.height(), input.channels());
  const int w = input.width(), h = input.height();
  for (int t = 0; t < input.frames(); ++t)
    for (int c = 0; c < input.channels(); ++c)
      for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col) {
          const int sr = flips.vertical ? h - 1 - r : r;
          const int sc = flips.horizontal ? w - 1 - col : col;
          out.at(t, c, r, col) = input.at(t, c, sr, sc);
        }
  return out;
}

InputTensor augment_spatial(const InputTensor& input, double flip_probability, Rng& rng) {
  return apply_flips(input, draw_flips(flip_probability, rng));
}

std::vector<int> crop_indices(int length, int start, int window) {
  if (length < 1 || window < 1) throw InputError("crop of an empty clip or window");
  std::vector<int> idx(window);
  if (length >= window) {
    if (start < 0 || start + window > length) throw RangeError("crop start out of range");
    for (int k = 0; k < window; ++k) idx[k] = start + k;
    return idx;
  }
  const int period = length == 1 ? 1 : 2 * (length - 1);
  for (int k = 0; k < window; ++k) {
    const int m = k % period;
    idx[k] = m < length ? m : period - m;
  }
  return idx;
}

InputTensor select_frames(const InputTensor& input, const std::vector<int>& indices) {
  InputTensor out(static_cast<int>(indices.size()), input.width(), input.height(), input.channels());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    for (int c = 0; c < input.channels(); ++c) {
      std::copy_n(input.plane(indices[k], c), input.plane_size(), out.plane(static_cast<int>(k), c));
    }
  }
  return out;
}

InputTensor augment_temporal_crop(const InputTensor& input, int window, Rng& rng) {
  const int length = input.frames();
  const int start = length > window ? static_cast<int>(rng.index(static_cast<std::uint64_t>(length - window + 1))) : 0;
  if (length == window) return input;
  return select_frames(input, crop_indices(length, start, window));
}

InputTensor center_crop(const InputTensor& input, int window) {
  if (input.frames() <= window) return input;
  return select_frames(input, crop_indices(input.frames(), (input.frames() - window) / 2, window));
}

std::size_t select_best_epoch(const std::vector<EpochLog>& curve) {
  if (curve.empty()) throw InputError("empty loss curve");
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].val_loss < curve[best].val_loss) best = i;
  }
  return best;
}

namespace {

const InputTensor& mode_view(const InputTensor& input, InputMode mode, std::optional<InputTensor>& storage) {
  if (mode == InputMode::two_channel) return input;
  storage = video_only(input);
  return *storage;
}

}  // namespace

std::vector<double> predict_probabilities(Classifier<float>& model, const std::vector<const Sample*>& samples,
                                          const TrainConfig& config) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const Sample* s : samples) {
    std::optional<InputTensor> storage;
    const InputTensor clip = center_crop(mode_view(s->input, config.input_mode, storage), config.window);
    out.push_back(model.predict(clip).probability);
  }
  return out;
}

double evaluate_loss(Classifier<float>& model, const std::vector<const Sample*>& samples, const TrainConfig& config) {
  std::vector<Prediction> preds;
  std::vector<int> labels;
  for (const Sample* s : samples) {
    std::optional<InputTensor> storage;
    preds.push_back(model.predict(center_crop(mode_view(s->input, config.input_mode, storage), config.window)));
    labels.push_back(s->label);
  }
  return cross_entropy_loss(preds, labels);
}

FoldResult train_fold(const std::vector<const Sample*>& train, const std::vector<const Sample*>& val,
                      const TrainConfig& config, Classifier<float>& model, std::uint64_t seed) {
  validate(config);
  if (train.empty()) throw InputError("empty training set");
  if (val.empty()) throw InputError("empty validation set");

  std::vector<InputTensor> inputs;
  inputs.reserve(train.size());
  for (const Sample* s : train) {
    inputs.push_back(config.input_mode == InputMode::two_channel ? s->input : video_only(s->input));
  }

  Rng rng(seed);
  FoldResult result;
  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<InputTensor> clips;
      std::vector<int> labels;
      for (std::size_t k = begin; k < end; ++k) {
        const InputTensor cropped = augment_temporal_crop(inputs[order[k]], config.window, rng);
        clips.push_back(augment_spatial(cropped, config.flip_probability, rng));
        labels.push_back(train[order[k]]->label);
      }
      std::vector<const InputTensor*> ptrs;
      for (const auto& c : clips) ptrs.push_back(&c);

      ad::Tape<float> tape;
      const auto frames = ad::constant(model.batch_tensor(ptrs));
      const auto logits = model.forward(tape, frames, static_cast<int>(ptrs.size()), config.window, true);
      const auto loss = ad::binary_cross_entropy(tape, ad::sigmoid(tape, logits), labels);
      tape.backward(loss);
      ad::sgd_step(model.params(), config.learning_rate);
      loss_sum += static_cast<double>(loss->value[0]) * static_cast<double>(end - begin);
    }
    EpochLog log{epoch, loss_sum / static_cast<double>(order.size()), evaluate_loss(model, val, config)};
    if (!std::isfinite(log.train_loss) || !std::isfinite(log.val_loss)) {
      throw TrainingError(epoch, "non-finite loss");
    }
    for (const auto& [name, p] : model.params().items()) {
      for (float v : p->value.values()) {
        if (!std::isfinite(v)) throw TrainingError(epoch, "non-finite value in parameter " + name);
      }
    }
    result.curve.push_back(log);
    if (result.curve.size() == 1 || log.val_loss < result.best_val_loss) {
      result.best_val_loss = log.val_loss;
      result.best_epoch = epoch;
      result.best = snapshot(model);
    }
  }
  return result;
}

const StudyReport& ExperimentReport::study(const std::string& name) const {
  for (const auto& s : studies) {
    if (s.name == name) return s;
  }
  throw InputError("no study named " + name);
}

Aggregate aggregate(const std::vector<CellResult>& cells) {
  std::map<std::uint64_t, std::array<double, 4>> per_seed;  // sums of acc, prec, rec, count
  std::vector<std::uint64_t> seed_order;
  for (const auto& c : cells) {
    if (!per_seed.count(c.seed)) seed_order.push_back(c.seed);
    auto& acc = per_seed[c.seed];
    acc[0] += c.metrics.accuracy;
    acc[1] += c.metrics.precision;
    acc[2] += c.metrics.recall;
    acc[3] += 1.0;
  }
  Aggregate out;
  if (seed_order.empty()) return out;
  const auto summarize = [&](int k) {
    std::vector<double> means;
    for (auto seed : seed_order) means.push_back(per_seed[seed][k] / per_seed[seed][3]);
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= static_cast<double>(means.size());
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    return MetricSummary{mean, std::sqrt(var / static_cast<double>(means.size()))};
  };
  out.accuracy = summarize(0);
  out.precision = summarize(1);
  out.recall = summarize(2);
  return out;
}

ExperimentReport run_experiment(const std::vector<Sample>& dataset, const SplitPlan& plan, const TrainConfig& config,
                                const CellHook& hook) {
  validate(config);
  if (dataset.empty()) throw EmptyDatasetError("empty dataset");
  DatasetManifest manifest;
  std::map<std::string, const Sample*> by_id;
  for (const auto& s : dataset) {
    manifest.entries.push_back({s.case_id, s.case_id, s.label});
    by_id[s.case_id] = &s;
  }
  check_split(plan, manifest);
  const int width = dataset.front().input.width(), height = dataset.front().input.height();

  std::vector<std::pair<Variant, InputMode>> studies{{config.variant, config.input_mode}};
  if (config.ablation) {
    const InputMode other_mode =
        config.input_mode == InputMode::two_channel ? InputMode::video_only : InputMode::two_channel;
    studies.push_back({config.variant, other_mode});
    for (Variant v : {Variant::bilstm, Variant::lstm, Variant::fc}) {
      if (v != config.variant) studies.push_back({v, config.input_mode});
    }
  }

  ExperimentReport report;
  struct Job {
    std::size_t study;
    std::uint64_t seed;
    int fold;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < studies.size(); ++s) {
    StudyReport sr;
    sr.variant = studies[s].first;
    sr.input_mode = studies[s].second;
    sr.name = to_string(sr.variant) + "/" + to_string(sr.input_mode);
    report.studies.push_back(sr);
    for (auto seed : config.seeds)
      for (int f = 0; f < static_cast<int>(plan.folds.size()); ++f) jobs.push_back({s, seed, f});
  }

  const auto ids_to_samples = [&](const std::vector<std::string>& ids) {
    std::vector<const Sample*> out;
    for (const auto& id : ids) out.push_back(by_id.at(id));
    return out;
  };
  const auto run_job = [&](const Job& job, CellResult& cell, FoldResult& fold_result) {
    TrainConfig cfg = config;
    cfg.variant = studies[job.study].first;
    cfg.input_mode = studies[job.study].second;
    const Fold& fold = plan.folds[static_cast<std::size_t>(job.fold)];
    Classifier<float> model(model_config(cfg, width, height), job.seed);
    fold_result = train_fold(ids_to_samples(fold.train), ids_to_samples(fold.val), cfg, model,
                             mix_seed(job.seed, static_cast<std::uint64_t>(job.fold) + 1));
    restore(model, fold_result.best);
    const auto test = ids_to_samples(fold.test);
    std::vector<int> labels;
    for (const Sample* s : test) labels.push_back(s->label);
    cell.seed = job.seed;
    cell.fold = job.fold;
    cell.metrics = compute_metrics(predict_probabilities(model, test, cfg), labels, cfg.threshold);
    cell.best_epoch = fold_result.best_epoch;
    cell.best_val_loss = fold_result.best_val_loss;
  };

  std::vector<CellResult> cells(jobs.size());
  if (config.jobs == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      FoldResult fr;
      run_job(jobs[j], cells[j], fr);
      if (hook) hook(report.studies[jobs[j].study], cells[j], fr);
    }
  } else {
    std::vector<FoldResult> folds(jobs.size());
    std::vector<std::string> errors(jobs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(config.jobs)
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      try {
        run_job(jobs[j], cells[j], folds[j]);
      } catch (const std::exception& e) {
        errors[j] = e.what();
      }
    }
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (!errors[j].empty()) throw Error("job " + std::to_string(j) + ": " + errors[j]);
      if (hook) hook(report.studies[jobs[j].study], cells[j], folds[j]);
    }
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) report.studies[jobs[j].study].cells.push_back(cells[j]);
  for (auto& s : report.studies) s.aggregate = aggregate(s.cells);
  return report;
}

std::string report_to_json(const ExperimentReport& report) {
  using nlohmann::json;
  json studies = json::array();
  const auto summary = [](const MetricSummary& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  for (const auto& s : report.studies) {
    json cells = json::array();
    for (const auto& c : s.cells) {
      cells.push_back({{"seed", c.seed},
                       {"fold", c.fold},
                       {"accuracy", c.metrics.accuracy},
                       {"precision", c.metrics.precision},
                       {"recall", c.metrics.recall},
                       {"tp", c.metrics.tp},
                       {"fp", c.metrics.fp},
                       {"tn", c.metrics.tn},
                       {"fn", c.metrics.fn},
                       {"precision_degenerate", c.metrics.precision_degenerate},
                       {"recall_degenerate", c.metrics.recall_degenerate},
                       {"best_epoch", c.best_epoch},
                       {"best_val_loss", c.best_val_loss}});
    }
    studies.push_back({{"name", s.name},
                       {"variant", to_string(s.variant)},
                       {"input_mode", to_string(s.input_mode)},
                       {"cells", cells},
                       {"aggregate",
                        {{"accuracy", summary(s.aggregate.accuracy)},
                         {"precision", summary(s.aggregate.precision)},
                         {"recall", summary(s.aggregate.recall)}}}});
  }
  return json{{"studies", studies}}.dump(2);
}

}  // namespace jelly
