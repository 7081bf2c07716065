#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jelly/autodiff.hpp"
#include "jelly/preprocess.hpp"
#include "jelly/random.hpp"

namespace jelly {

enum class Variant { bilstm, lstm, fc };
enum class Backbone { resnet18, resnet_tiny };

std::string to_string(Variant v);
std::string to_string(Backbone b);
Variant parse_variant(const std::string& s);    // throws ConfigError
Backbone parse_backbone(const std::string& s);  // throws ConfigError

struct ModelConfig {
  Variant variant = Variant::bilstm;
  Backbone backbone = Backbone::resnet18;
  int hidden_size = 128;
  int input_channels = 2;
  int input_width = kDefaultInputWidth;
  int input_height = kDefaultInputHeight;
  /// Channel width of the first resnet_tiny stage (the second doubles it).
  int tiny_width = 8;

  bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& config);

struct Prediction {
  double probability = 0.5;
  double logit = 0.0;
};

/// Backbone (ResNet) -> temporal head (BiLSTM / LSTM / time mean) ->
/// FC + ReLU -> FC -> sigmoid, predicting at the final time step.
template <typename T>
class Classifier {
 public:
  Classifier(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  ad::ParamSet<T>& params() noexcept { return params_; }
  const ad::ParamSet<T>& params() const noexcept { return params_; }
  std::map<std::string, ad::BatchNormState<T>>& norm_states() noexcept { return norms_; }
  const std::map<std::string, ad::BatchNormState<T>>& norm_states() const noexcept { return norms_; }

  /// Per-frame feature size after global average pooling.
  int feature_dim() const noexcept { return feature_dim_; }
  /// Backbone stage outputs that can be captured, shallow to deep.
  const std::vector<std::string>& layer_names() const noexcept { return stage_names_; }
  /// Output of the last residual stage (the Grad-CAM++ target).
  const std::string& last_conv_layer() const { return stage_names_.back(); }

  struct Capture {
    std::string layer;
    ad::Var<T> activation;  // [B*T, K, h, w], filled by forward
  };

  /// frames: [B*T, C, H, W], clip-major. Returns logits [B, 1].
  ad::Var<T> forward(ad::Tape<T>& tape, const ad::Var<T>& frames, int batch, int steps, bool training,
                     Capture* capture = nullptr);

  /// Stacks equally long clips into a [B*T, C, H, W] batch tensor.
  Tensor<T> batch_tensor(const std::vector<const InputTensor*>& clips) const;

  /// Eval-mode prediction for one clip.
  Prediction predict(const InputTensor& input);

 private:
  struct Block {
    std::string name;
    int stride = 1;
    bool downsample = false;
  };

  ad::Var<T> conv_bn(ad::Tape<T>& tape, const ad::Var<T>& x, const std::string& name, int stride, int pad,
                     bool training);
  ad::Var<T> basic_block(ad::Tape<T>& tape, const ad::Var<T>& x, const Block& block, bool training);
  void add_conv(const std::string& name, int out, int in, int k, Rng& rng);
  void add_linear(const std::string& name, int out, int in, Rng& rng);
  void add_lstm(const std::string& name, int input, int hidden, Rng& rng);
  ad::LstmWeights<T> lstm_weights(const std::string& name) const;

  ModelConfig config_;
  ad::ParamSet<T> params_;
  std::map<std::string, ad::BatchNormState<T>> norms_;
  std::map<std::string, std::pair<int, int>> conv_meta_;  // stride, pad
  std::vector<std::vector<Block>> stages_;
  std::vector<std::string> stage_names_;
  int feature_dim_ = 0;
};

/// Prediction for one assembled clip.
template <typename T>
Prediction forward_classify(Classifier<T>& model, const InputTensor& input) {
  return model.predict(input);
}

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7].
double cross_entropy_loss(const std::vector<Prediction>& predictions, const std::vector<int>& labels);

}  // namespace jelly
