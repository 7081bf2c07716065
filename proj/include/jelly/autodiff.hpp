#pragma once

// Reverse-mode differentiation over dense tensors. Ops record a closure on
// a Tape; Tape::backward replays them in reverse order. Parameters are
// leaves that live outside any tape, so their gradients accumulate across
// ops and are cleared by sgd_step.

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "jelly/tensor.hpp"

namespace jelly::ad {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::function<void()> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
Var<T> parameter(Tensor<T> value) {
  auto n = constant(std::move(value));
  n->requires_grad = true;
  return n;
}

template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  bool needs_grad(std::initializer_list<const Var<T>*> inputs) const {
    if (!grad_enabled_) return false;
    for (const auto* v : inputs) {
      if (*v && (*v)->requires_grad) return true;
    }
    return false;
  }

  /// Marks `out` as differentiable and appends its backward step.
  void record(const Var<T>& out, std::function<void()> backward) {
    out->requires_grad = true;
    out->backward = std::move(backward);
    nodes_.push_back(out);
  }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded step once, newest
  /// first. Throws ContractError when loss is not a single value.
  void backward(const Var<T>& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t last_visits() const noexcept { return visits_; }

 private:
  bool grad_enabled_;
  std::vector<Var<T>> nodes_;
  std::size_t visits_ = 0;
};

// Elementwise
template <typename T> Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(Tape<T>& tape, const Var<T>& a, T factor);
template <typename T> Var<T> relu(Tape<T>& tape, const Var<T>& x);
template <typename T> Var<T> sigmoid(Tape<T>& tape, const Var<T>& x);
template <typename T> Var<T> tanh(Tape<T>& tape, const Var<T>& x);

/// x [N,in], w [out,in], b [out] or null -> [N,out]
template <typename T> Var<T> linear(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// Cross-correlation with zero padding: x [N,C,H,W], w [F,C,kh,kw].
template <typename T> Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, int stride, int pad);
template <typename T> Var<T> max_pool2d(Tape<T>& tape, const Var<T>& x, int kernel, int stride, int pad);
/// [N,C,H,W] -> [N,C]
template <typename T> Var<T> global_avg_pool(Tape<T>& tape, const Var<T>& x);

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEpsilon = 1e-5;

/// Per-channel normalization of [N,C] or [N,C,H,W]. Training mode uses batch
/// statistics and updates `state`; eval mode uses the running statistics.
template <typename T>
Var<T> batch_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>& state, bool training, double momentum = kBatchNormMomentum,
                  double eps = kBatchNormEpsilon);

/// Concatenation along axis 1 (features or channels).
template <typename T> Var<T> concat(Tape<T>& tape, const Var<T>& a, const Var<T>& b);
/// Columns [start, start+len) of a [N,K] tensor.
template <typename T> Var<T> narrow(Tape<T>& tape, const Var<T>& x, int start, int len);

/// Frame features laid out [B*T, D] (clip-major) -> rows of step t, [B, D].
template <typename T> Var<T> time_step(Tape<T>& tape, const Var<T>& features, int batch, int steps, int t);
/// Mean over the T steps of each clip, [B*T, D] -> [B, D].
template <typename T> Var<T> time_mean(Tape<T>& tape, const Var<T>& features, int batch, int steps);

template <typename T> Var<T> sum(Tape<T>& tape, const Var<T>& x);

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy of probabilities [N] or [N,1] against labels.
/// Probabilities are clamped to [1e-7, 1-1e-7] before the logs; the gradient
/// passes through the clamp unchanged.
template <typename T> Var<T> binary_cross_entropy(Tape<T>& tape, const Var<T>& prob, const std::vector<int>& labels);

template <typename T>
struct LstmWeights {
  Var<T> w_ih;  // [4H, D], gate order i, f, g, o
  Var<T> w_hh;  // [4H, H]
  Var<T> bias;  // [4H]

  int hidden() const { return w_hh->value.dim(1); }
};

template <typename T>
struct LstmState {
  Var<T> h;
  Var<T> c;
};

template <typename T>
LstmState<T> lstm_cell(Tape<T>& tape, const Var<T>& x, const LstmState<T>& prev, const LstmWeights<T>& weights);

/// Runs over the sequence from zero state and returns the state after the
/// last element.
template <typename T>
LstmState<T> lstm_sequence(Tape<T>& tape, const std::vector<Var<T>>& sequence, const LstmWeights<T>& weights,
                           bool reverse = false);

/// (forward hidden after step T, backward hidden after returning to step 1).
template <typename T>
std::pair<Var<T>, Var<T>> bilstm(Tape<T>& tape, const std::vector<Var<T>>& sequence, const LstmWeights<T>& forward,
                                 const LstmWeights<T>& backward);

/// Named parameters in insertion order.
template <typename T>
class ParamSet {
 public:
  Var<T> add(const std::string& name, Tensor<T> init);
  const Var<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, Var<T>>>& items() const noexcept { return items_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var<T>>> items_;
  std::map<std::string, std::size_t> index_;
};

/// p <- p - lr * grad for every parameter, then clears the gradients.
template <typename T>
void sgd_step(ParamSet<T>& params, double learning_rate);

}  // namespace jelly::ad
