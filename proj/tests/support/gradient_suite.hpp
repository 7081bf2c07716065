#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "jelly/autodiff.hpp"
#include "jelly/model.hpp"
#include "oracles.hpp"

namespace oracle {

namespace ad = jelly::ad;
using TensorD = jelly::Tensor<double>;
using VarD = ad::Var<double>;
using TapeD = ad::Tape<double>;
using Params = std::vector<std::pair<std::string, VarD>>;

struct GradCase {
  std::string name;
  GradReport report;
};

// Values in +-[lo, hi] so relu inputs and pooling maxima sit away from kinks.
inline TensorD signed_tensor(std::vector<int> shape, std::mt19937_64& gen, double lo = 0.1, double hi = 1.0) {
  TensorD t(std::move(shape));
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.values()) v = sign(gen) ? mag(gen) : -mag(gen);
  return t;
}

// Scalar reduction with fixed random weights so every output element matters.
inline VarD weighted_sum(TapeD& tape, const VarD& out, const TensorD& r) {
  return ad::sum(tape, ad::mul(tape, out, ad::constant(r)));
}

inline GradCase check_unary(const std::string& name, std::vector<int> shape, std::uint64_t seed,
                            VarD (*op)(TapeD&, const VarD&)) {
  std::mt19937_64 gen(seed);
  auto x = ad::parameter(signed_tensor(shape, gen));
  TapeD probe(false);
  const auto r = random_tensor(op(probe, x)->value.shape(), gen);
  return {name, gradcheck({{"x", x}}, [&](TapeD& t) { return weighted_sum(t, op(t, x), r); })};
}

inline ad::LstmWeights<double> lstm_weights(int input, int hidden, std::mt19937_64& gen) {
  return {ad::parameter(random_tensor({4 * hidden, input}, gen, -0.5, 0.5)),
          ad::parameter(random_tensor({4 * hidden, hidden}, gen, -0.5, 0.5)),
          ad::parameter(random_tensor({4 * hidden}, gen, -0.5, 0.5))};
}

inline Params lstm_params(const std::string& prefix, const ad::LstmWeights<double>& w) {
  return {{prefix + ".w_ih", w.w_ih}, {prefix + ".w_hh", w.w_hh}, {prefix + ".bias", w.bias}};
}

inline GradCase check_model(jelly::Variant variant, std::uint64_t seed) {
  jelly::ModelConfig cfg;
  cfg.variant = variant;
  cfg.backbone = jelly::Backbone::resnet_tiny;
  cfg.tiny_width = 2;
  cfg.hidden_size = 3;
  cfg.input_width = 12;
  cfg.input_height = 10;
  jelly::Classifier<double> model(cfg, seed);
  const int batch = 2, steps = 3;
  std::mt19937_64 gen(seed + 7);
  // A tiny head at its default init is often dead (all fc1 units off), which
  // would make the check vacuous. Move the recurrent and head weights to a
  // generic point instead.
  for (auto& [name, p] : model.params().items()) {
    if (name.rfind("temporal.", 0) == 0 || name.rfind("head.", 0) == 0) p->value = random_tensor(p->value.shape(), gen, -0.8, 0.8);
  }
  auto frames = ad::constant(random_tensor({batch * steps, 2, cfg.input_height, cfg.input_width}, gen, 0.0, 1.0));
  const std::vector<int> labels{1, 0};
  const auto build = [&](TapeD& t) {
    auto logits = model.forward(t, frames, batch, steps, true);
    return ad::binary_cross_entropy(t, ad::sigmoid(t, logits), labels);
  };
  return {"classifier." + jelly::to_string(variant), gradcheck(model.params().items(), build)};
}

// Every differentiable op, then the tiny CNN-BiLSTM end to end.
inline std::vector<GradCase> gradient_suite() {
  std::vector<GradCase> out;
  out.push_back(check_unary("relu", {3, 7}, 1, &ad::relu<double>));
  out.push_back(check_unary("sigmoid", {3, 7}, 2, &ad::sigmoid<double>));
  out.push_back(check_unary("tanh", {3, 7}, 3, &ad::tanh<double>));
  out.push_back(check_unary("global_avg_pool", {2, 3, 4, 5}, 4, &ad::global_avg_pool<double>));
  out.push_back(check_unary("sum", {4, 3}, 5, [](TapeD& t, const VarD& x) { return ad::sum(t, x); }));

  {
    std::mt19937_64 gen(11);
    auto a = ad::parameter(random_tensor({4, 5}, gen));
    auto b = ad::parameter(random_tensor({4, 5}, gen));
    const auto r = random_tensor({4, 5}, gen);
    out.push_back({"add", gradcheck({{"a", a}, {"b", b}},
                                    [&](TapeD& t) { return weighted_sum(t, ad::add(t, a, b), r); })});
    out.push_back({"mul", gradcheck({{"a", a}, {"b", b}},
                                    [&](TapeD& t) { return weighted_sum(t, ad::mul(t, a, b), r); })});
    out.push_back({"scale", gradcheck({{"a", a}},
                                      [&](TapeD& t) { return weighted_sum(t, ad::scale(t, a, -1.7), r); })});
    // shared input used twice
    out.push_back({"mul.shared", gradcheck({{"a", a}},
                                           [&](TapeD& t) { return weighted_sum(t, ad::mul(t, a, a), r); })});
  }
  {
    std::mt19937_64 gen(12);
    auto x = ad::parameter(random_tensor({3, 5}, gen));
    auto w = ad::parameter(random_tensor({4, 5}, gen));
    auto b = ad::parameter(random_tensor({4}, gen));
    const auto r = random_tensor({3, 4}, gen);
    out.push_back({"linear", gradcheck({{"x", x}, {"w", w}, {"b", b}},
                                       [&](TapeD& t) { return weighted_sum(t, ad::linear(t, x, w, b), r); })});
    out.push_back({"linear.nobias", gradcheck({{"x", x}, {"w", w}}, [&](TapeD& t) {
                     return weighted_sum(t, ad::linear(t, x, w, VarD{}), r);
                   })});
  }
  const struct {
    int stride, pad, k;
  } convs[] = {{1, 1, 3}, {2, 1, 3}, {2, 0, 3}, {1, 0, 1}, {2, 3, 7}};
  for (const auto& c : convs) {
    std::mt19937_64 gen(13 + c.stride * 10 + c.pad + c.k);
    auto x = ad::parameter(random_tensor({2, 2, 9, 8}, gen));
    auto w = ad::parameter(random_tensor({3, 2, c.k, c.k}, gen));
    TapeD probe(false);
    const auto shape = ad::conv2d(probe, x, w, c.stride, c.pad)->value.shape();
    const auto r = random_tensor(shape, gen);
    out.push_back({"conv2d.s" + std::to_string(c.stride) + "p" + std::to_string(c.pad) + "k" + std::to_string(c.k),
                   gradcheck({{"x", x}, {"w", w}}, [&](TapeD& t) {
                     return weighted_sum(t, ad::conv2d(t, x, w, c.stride, c.pad), r);
                   })});
  }
  {
    std::mt19937_64 gen(14);
    // distinct values so each window has a clear maximum
    std::vector<double> vals(2 * 2 * 7 * 6);
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
    std::shuffle(vals.begin(), vals.end(), gen);
    auto x = ad::parameter(TensorD({2, 2, 7, 6}, vals));
    TapeD probe(false);
    const auto r = random_tensor(ad::max_pool2d(probe, x, 3, 2, 1)->value.shape(), gen);
    out.push_back({"max_pool2d", gradcheck({{"x", x}}, [&](TapeD& t) {
                     return weighted_sum(t, ad::max_pool2d(t, x, 3, 2, 1), r);
                   })});
  }
  for (const bool training : {true, false}) {
    for (const int rank : {2, 4}) {
      std::mt19937_64 gen(15 + rank + (training ? 100 : 0));
      const std::vector<int> shape = rank == 2 ? std::vector<int>{5, 3} : std::vector<int>{3, 3, 4, 2};
      auto x = ad::parameter(random_tensor(shape, gen));
      auto gamma = ad::parameter(random_tensor({3}, gen, 0.5, 1.5));
      auto beta = ad::parameter(random_tensor({3}, gen));
      ad::BatchNormState<double> state{random_tensor({3}, gen, -0.2, 0.2), random_tensor({3}, gen, 0.5, 1.5)};
      const auto r = random_tensor(shape, gen);
      const auto build = [&](TapeD& t) {
        auto s = state;  // running statistics must not drift between evaluations
        return weighted_sum(t, ad::batch_norm(t, x, gamma, beta, s, training), r);
      };
      out.push_back({std::string("batch_norm.") + (training ? "train" : "eval") + ".rank" + std::to_string(rank),
                     gradcheck({{"x", x}, {"gamma", gamma}, {"beta", beta}}, build)});
    }
  }
  {
    std::mt19937_64 gen(16);
    auto a = ad::parameter(random_tensor({2, 3, 2, 2}, gen));
    auto b = ad::parameter(random_tensor({2, 2, 2, 2}, gen));
    const auto r = random_tensor({2, 5, 2, 2}, gen);
    out.push_back({"concat", gradcheck({{"a", a}, {"b", b}},
                                       [&](TapeD& t) { return weighted_sum(t, ad::concat(t, a, b), r); })});
    auto x = ad::parameter(random_tensor({3, 6}, gen));
    const auto rn = random_tensor({3, 2}, gen);
    out.push_back({"narrow", gradcheck({{"x", x}},
                                       [&](TapeD& t) { return weighted_sum(t, ad::narrow(t, x, 3, 2), rn); })});
    auto f = ad::parameter(random_tensor({2 * 4, 3}, gen));
    const auto rs = random_tensor({2, 3}, gen);
    out.push_back({"time_step", gradcheck({{"features", f}}, [&](TapeD& t) {
                     return weighted_sum(t, ad::time_step(t, f, 2, 4, 2), rs);
                   })});
    out.push_back({"time_mean", gradcheck({{"features", f}}, [&](TapeD& t) {
                     return weighted_sum(t, ad::time_mean(t, f, 2, 4), rs);
                   })});
  }
  {
    std::mt19937_64 gen(17);
    auto p = ad::parameter(random_tensor({5, 1}, gen, 0.05, 0.95));
    const std::vector<int> labels{1, 0, 0, 1, 1};
    out.push_back({"binary_cross_entropy", gradcheck({{"p", p}}, [&](TapeD& t) {
                     return ad::binary_cross_entropy(t, p, labels);
                   })});
  }
  {
    std::mt19937_64 gen(18);
    const int n = 2, d = 3, h = 4;
    auto w = lstm_weights(d, h, gen);
    auto x = ad::parameter(random_tensor({n, d}, gen));
    auto h0 = ad::parameter(random_tensor({n, h}, gen));
    auto c0 = ad::parameter(random_tensor({n, h}, gen));
    const auto rh = random_tensor({n, h}, gen);
    const auto rc = random_tensor({n, h}, gen);
    auto params = lstm_params("w", w);
    params.insert(params.end(), {{"x", x}, {"h0", h0}, {"c0", c0}});
    out.push_back({"lstm_cell", gradcheck(params, [&](TapeD& t) {
                     auto s = ad::lstm_cell(t, x, {h0, c0}, w);
                     return ad::add(t, weighted_sum(t, s.h, rh), weighted_sum(t, s.c, rc));
                   })});

    std::vector<VarD> seq;
    for (int k = 0; k < 4; ++k) seq.push_back(ad::parameter(random_tensor({n, d}, gen)));
    auto seq_params = lstm_params("w", w);
    for (int k = 0; k < 4; ++k) seq_params.push_back({"x" + std::to_string(k), seq[k]});
    for (const bool reverse : {false, true}) {
      out.push_back({std::string("lstm_sequence") + (reverse ? ".reverse" : ""), gradcheck(seq_params, [&](TapeD& t) {
                       return weighted_sum(t, ad::lstm_sequence(t, seq, w, reverse).h, rh);
                     })});
    }
    auto wb = lstm_weights(d, h, gen);
    auto bi_params = seq_params;
    for (auto& p : lstm_params("wb", wb)) bi_params.push_back(p);
    out.push_back({"bilstm", gradcheck(bi_params, [&](TapeD& t) {
                     auto [f, b] = ad::bilstm(t, seq, w, wb);
                     return ad::add(t, weighted_sum(t, f, rh), weighted_sum(t, b, rc));
                   })});
  }
  out.push_back(check_model(jelly::Variant::bilstm, 27));
  out.push_back(check_model(jelly::Variant::lstm, 27));
  out.push_back(check_model(jelly::Variant::fc, 27));
  return out;
}

}  // namespace oracle
