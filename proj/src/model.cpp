#include "jelly/model.hpp"

#include <algorithm>
#include <cmath>

#include "jelly/errors.hpp"
#include "jelly/random.hpp"

namespace jelly {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::bilstm: return "bilstm";
    case Variant::lstm: return "lstm";
    case Variant::fc: return "fc";
  }
  return "?";
}

std::string to_string(Backbone b) { return b == Backbone::resnet18 ? "resnet18" : "tiny"; }

Variant parse_variant(const std::string& s) {
  if (s == "bilstm") return Variant::bilstm;
  if (s == "lstm") return Variant::lstm;
  if (s == "fc") return Variant::fc;
  throw ConfigError("unknown variant '" + s + "' (expected bilstm, lstm or fc)");
}

Backbone parse_backbone(const std::string& s) {
  if (s == "resnet18") return Backbone::resnet18;
  if (s == "tiny" || s == "resnet_tiny") return Backbone::resnet_tiny;
  throw ConfigError("unknown backbone '" + s + "' (expected resnet18 or tiny)");
}

void validate(const ModelConfig& c) {
  if (c.hidden_size < 1) throw ConfigError("hidden_size must be positive");
  if (c.input_channels != 1 && c.input_channels != 2) throw ConfigError("input_channels must be 1 or 2");
  if (c.input_width < 8 || c.input_height < 8) throw ConfigError("input size must be at least 8x8");
  if (c.tiny_width < 1) throw ConfigError("tiny_width must be positive");
}

double cross_entropy_loss(const std::vector<Prediction>& predictions, const std::vector<int>& labels) {
  if (predictions.empty()) throw InputError("loss of an empty batch");
  if (predictions.size() != labels.size()) throw ShapeError("loss: label count differs from predictions");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double p = std::clamp(predictions[i].probability, ad::kProbabilityClamp, 1.0 - ad::kProbabilityClamp);
    acc += labels[i] ? std::log(p) : std::log1p(-p);
  }
  return -acc / static_cast<double>(predictions.size());
}

template <typename T>
void Classifier<T>::add_conv(const std::string& name, int out, int in, int k, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / (in * k * k));
  Tensor<T> w({out, in, k, k});
  for (auto& v : w.values()) v = static_cast<T>(rng.normal(0.0, std_dev));
  params_.add(name + ".weight", std::move(w));
  params_.add(name + "_bn.gamma", Tensor<T>({out}, T(1)));
  params_.add(name + "_bn.beta", Tensor<T>({out}, T(0)));
  norms_[name + "_bn"] = {Tensor<T>({out}, T(0)), Tensor<T>({out}, T(1))};
}

template <typename T>
void Classifier<T>::add_linear(const std::string& name, int out, int in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / in);
  Tensor<T> w({out, in});
  for (auto& v : w.values()) v = static_cast<T>(rng.normal(0.0, std_dev));
  params_.add(name + ".weight", std::move(w));
  params_.add(name + ".bias", Tensor<T>({out}, T(0)));
}

template <typename T>
void Classifier<T>::add_lstm(const std::string& name, int input, int hidden, Rng& rng) {
  const auto uniform = [&](std::vector<int> shape, double bound) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
  };
  params_.add(name + ".w_ih", uniform({4 * hidden, input}, 1.0 / std::sqrt(input)));
  params_.add(name + ".w_hh", uniform({4 * hidden, hidden}, 1.0 / std::sqrt(hidden)));
  Tensor<T> bias = uniform({4 * hidden}, 1.0 / std::sqrt(hidden));
  for (int j = hidden; j < 2 * hidden; ++j) bias[j] = T(1);  // forget gate
  params_.add(name + ".bias", std::move(bias));
}

template <typename T>
ad::LstmWeights<T> Classifier<T>::lstm_weights(const std::string& name) const {
  return {params_.get(name + ".w_ih"), params_.get(name + ".w_hh"), params_.get(name + ".bias")};
}

template <typename T>
Classifier<T>::Classifier(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  validate(config_);
  Rng rng(seed);
  std::vector<int> widths;
  if (config_.backbone == Backbone::resnet18) {
    add_conv("backbone.stem.conv", 64, config_.input_channels, 7, rng);
    conv_meta_["backbone.stem.conv"] = {2, 3};
    widths = {64, 128, 256, 512};
    stage_names_ = {"stem", "layer1", "layer2", "layer3", "layer4"};
  } else {
    add_conv("backbone.stem.conv", config_.tiny_width, config_.input_channels, 3, rng);
    conv_meta_["backbone.stem.conv"] = {2, 1};
    widths = {config_.tiny_width, 2 * config_.tiny_width};
    stage_names_ = {"stem", "stage1", "stage2"};
  }
  const int blocks_per_stage = config_.backbone == Backbone::resnet18 ? 2 : 1;
  int in = widths.front();
  for (std::size_t s = 0; s < widths.size(); ++s) {
    std::vector<Block> stage;
    for (int b = 0; b < blocks_per_stage; ++b) {
      Block block;
      block.name = "backbone." + stage_names_[s + 1] + "." + std::to_string(b);
      block.stride = (b == 0 && s > 0) ? 2 : 1;
      block.downsample = block.stride != 1 || in != widths[s];
      add_conv(block.name + ".conv1", widths[s], in, 3, rng);
      conv_meta_[block.name + ".conv1"] = {block.stride, 1};
      add_conv(block.name + ".conv2", widths[s], widths[s], 3, rng);
      conv_meta_[block.name + ".conv2"] = {1, 1};
      if (block.downsample) {
        add_conv(block.name + ".down", widths[s], in, 1, rng);
        conv_meta_[block.name + ".down"] = {block.stride, 0};
      }
      in = widths[s];
      stage.push_back(block);
    }
    stages_.push_back(std::move(stage));
  }
  feature_dim_ = widths.back();

  const int h = config_.hidden_size;
  switch (config_.variant) {
    case Variant::bilstm:
      add_lstm("temporal.fwd", feature_dim_, h, rng);
      add_lstm("temporal.bwd", feature_dim_, h, rng);
      add_linear("head.fc1", h, 2 * h, rng);
      break;
    case Variant::lstm:
      add_lstm("temporal.fwd", feature_dim_, h, rng);
      add_linear("head.fc1", h, h, rng);
      break;
    case Variant::fc:
      add_linear("head.fc1", h, feature_dim_, rng);
      break;
  }
  add_linear("head.fc2", 1, h, rng);
}

template <typename T>
ad::Var<T> Classifier<T>::conv_bn(ad::Tape<T>& tape, const ad::Var<T>& x, const std::string& name, int stride,
                                  int pad, bool training) {
  auto y = ad::conv2d(tape, x, params_.get(name + ".weight"), stride, pad);
  return ad::batch_norm(tape, y, params_.get(name + "_bn.gamma"), params_.get(name + "_bn.beta"),
                        norms_.at(name + "_bn"), training);
}

template <typename T>
ad::Var<T> Classifier<T>::basic_block(ad::Tape<T>& tape, const ad::Var<T>& x, const Block& block, bool training) {
  auto y = ad::relu(tape, conv_bn(tape, x, block.name + ".conv1", block.stride, 1, training));
  y = conv_bn(tape, y, block.name + ".conv2", 1, 1, training);
  const auto shortcut = block.downsample ? conv_bn(tape, x, block.name + ".down", block.stride, 0, training) : x;
  return ad::relu(tape, ad::add(tape, y, shortcut));
}

template <typename T>
ad::Var<T> Classifier<T>::forward(ad::Tape<T>& tape, const ad::Var<T>& frames, int batch, int steps, bool training,
                                  Capture* capture) {
  const auto& shape = frames->value.shape();
  if (shape.size() != 4 || shape[0] != batch * steps || shape[1] != config_.input_channels ||
      shape[2] != config_.input_height || shape[3] != config_.input_width) {
    throw ShapeError("model expects [" + std::to_string(batch * steps) + "x" + std::to_string(config_.input_channels) +
                     "x" + std::to_string(config_.input_height) + "x" + std::to_string(config_.input_width) +
                     "] frames, got " + shape_str(shape));
  }
  if (batch < 1 || steps < 1) throw ShapeError("empty batch");
  if (capture && std::find(stage_names_.begin(), stage_names_.end(), capture->layer) == stage_names_.end()) {
    throw ConfigError("unknown layer '" + capture->layer + "'");
  }
  const auto maybe_capture = [&](const std::string& stage, const ad::Var<T>& x) {
    if (capture && capture->layer == stage) capture->activation = x;
  };

  const auto [stem_stride, stem_pad] = conv_meta_.at("backbone.stem.conv");
  auto x = ad::relu(tape, conv_bn(tape, frames, "backbone.stem.conv", stem_stride, stem_pad, training));
  if (config_.backbone == Backbone::resnet18) x = ad::max_pool2d(tape, x, 3, 2, 1);
  maybe_capture(stage_names_[0], x);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (const auto& block : stages_[s]) x = basic_block(tape, x, block, training);
    maybe_capture(stage_names_[s + 1], x);
  }
  const auto features = ad::global_avg_pool(tape, x);

  ad::Var<T> summary;
  switch (config_.variant) {
    case Variant::bilstm: {
      std::vector<ad::Var<T>> seq;
      for (int t = 0; t < steps; ++t) seq.push_back(ad::time_step(tape, features, batch, steps, t));
      const auto [h_fwd, h_bwd] = ad::bilstm(tape, seq, lstm_weights("temporal.fwd"), lstm_weights("temporal.bwd"));
      summary = ad::concat(tape, h_fwd, h_bwd);
      break;
    }
    case Variant::lstm: {
      std::vector<ad::Var<T>> seq;
      for (int t = 0; t < steps; ++t) seq.push_back(ad::time_step(tape, features, batch, steps, t));
      summary = ad::lstm_sequence(tape, seq, lstm_weights("temporal.fwd")).h;
      break;
    }
    case Variant::fc:
      summary = ad::time_mean(tape, features, batch, steps);
      break;
  }
  auto hidden = ad::relu(tape, ad::linear(tape, summary, params_.get("head.fc1.weight"), params_.get("head.fc1.bias")));
  return ad::linear(tape, hidden, params_.get("head.fc2.weight"), params_.get("head.fc2.bias"));
}

template <typename T>
Tensor<T> Classifier<T>::batch_tensor(const std::vector<const InputTensor*>& clips) const {
  if (clips.empty()) throw InputError("empty batch");
  const int steps = clips.front()->frames();
  const int c = config_.input_channels, h = config_.input_height, w = config_.input_width;
  Tensor<T> out({static_cast<int>(clips.size()) * steps, c, h, w});
  const std::size_t frame_size = static_cast<std::size_t>(c) * h * w;
  for (std::size_t b = 0; b < clips.size(); ++b) {
    const InputTensor& clip = *clips[b];
    if (clip.channels() != c || clip.width() != w || clip.height() != h) {
      throw ShapeError("clip is " + std::to_string(clip.width()) + "x" + std::to_string(clip.height()) + "x" +
                       std::to_string(clip.channels()) + ", model expects " + std::to_string(w) + "x" +
                       std::to_string(h) + "x" + std::to_string(c));
    }
    if (clip.frames() != steps) throw ShapeError("clips in a batch must have equal length");
    T* dst = out.data() + b * steps * frame_size;
    std::copy(clip.values().begin(), clip.values().end(), dst);
  }
  return out;
}

template <typename T>
Prediction Classifier<T>::predict(const InputTensor& input) {
  ad::Tape<T> tape(/*grad_enabled=*/false);
  const auto frames = ad::constant(batch_tensor({&input}));
  const auto logit = forward(tape, frames, 1, input.frames(), /*training=*/false);
  const double z = static_cast<double>(logit->value[0]);
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return {p, z};
}

template class Classifier<float>;
template class Classifier<double>;

}  // namespace jelly
