#include <doctest.h>

#include <cmath>
#include <random>

#include "jelly/explain.hpp"

using namespace jelly;

namespace {

// Grad-CAM++ weights written out per channel and position.
std::vector<double> reference_map(const std::vector<double>& a, const std::vector<double>& g, int k, int n) {
  std::vector<double> out(n, 0.0);
  for (int c = 0; c < k; ++c) {
    double sum_a = 0.0;
    for (int i = 0; i < n; ++i) sum_a += a[c * n + i];
    double w = 0.0;
    for (int i = 0; i < n; ++i) {
      const double gi = g[c * n + i];
      const double num = gi * gi;
      const double den = 2.0 * gi * gi + sum_a * gi * gi * gi;
      if (den != 0.0 && gi > 0.0) w += num / den * gi;
    }
    for (int i = 0; i < n; ++i) out[i] += w * a[c * n + i];
  }
  for (auto& v : out) v = std::max(v, 0.0);
  return out;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.backbone = Backbone::resnet_tiny;
  c.tiny_width = 3;
  c.hidden_size = 4;
  c.input_width = 24;
  c.input_height = 16;
  return c;
}

InputTensor ramp_input(int frames) {
  InputTensor in(frames, 24, 16);
  for (int t = 0; t < frames; ++t)
    for (int r = 0; r < 16; ++r)
      for (int x = 0; x < 24; ++x) {
        in.at(t, 0, r, x) = static_cast<float>((t * 5 + r * 3 + x * 7) % 23) / 23.0f;
        in.at(t, 1, r, x) = r == 8 ? 1.0f : 0.0f;
      }
  return in;
}

}  // namespace

TEST_CASE("raw map matches the per-position formula") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> ua(0.0, 1.0), ug(-0.5, 0.5);
  const int k = 3, h = 4, w = 5, n = h * w;
  std::vector<double> a(k * n), g(k * n);
  for (auto& v : a) v = ua(gen);
  for (auto& v : g) v = ug(gen);
  const auto ref = reference_map(a, g, k, n);
  const Image map = gradcam_pp_map(a.data(), g.data(), k, h, w);
  for (int i = 0; i < n; ++i) CHECK(map.values()[i] == doctest::Approx(ref[i]).epsilon(1e-6));
}

TEST_CASE("zero gradients give a zero map") {
  const std::vector<double> a(2 * 9, 0.5), g(2 * 9, 0.0);
  const Image raw = gradcam_pp_map(a.data(), g.data(), 2, 3, 3);
  for (float v : raw.values()) CHECK(v == 0.0f);
  const Image norm = normalize_map(raw, 12, 12);
  for (float v : norm.values()) CHECK(v == 0.0f);
}

TEST_CASE("normalized maps lie in [0, 1] with a unit peak") {
  Image raw(4, 3);
  for (std::size_t i = 0; i < raw.size(); ++i) raw.values()[i] = 0.3f * static_cast<float>(i);
  const Image m = normalize_map(raw, 20, 15);
  CHECK(m.width() == 20);
  CHECK(m.height() == 15);
  float peak = 0.0f;
  for (float v : m.values()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    peak = std::max(peak, v);
  }
  CHECK(peak == 1.0f);
}

TEST_CASE("maps for a whole clip from a trained-shape model") {
  for (const Variant v : {Variant::bilstm, Variant::fc}) {
    auto cfg = tiny_config();
    cfg.variant = v;
    Classifier<double> model(cfg, 5);
    const auto in = ramp_input(5);
    const auto maps = gradcam_pp_all(model, in);
    REQUIRE(maps.size() == 5);
    for (int t = 0; t < 5; ++t) {
      CHECK(maps[t].frame_index == t);
      CHECK(maps[t].source_layer == model.last_conv_layer());
      CHECK(maps[t].values.width() == 24);
      CHECK(maps[t].values.height() == 16);
      for (float x : maps[t].values.values()) {
        CHECK(x >= 0.0f);
        CHECK(x <= 1.0f);
      }
    }
    for (const auto& [name, p] : model.params().items())
      for (double g : p->grad.values()) CHECK(g == 0.0);
    const auto one = gradcam_pp(model, in, 2);
    CHECK(one.values == maps[2].values);
    CHECK_THROWS_AS(gradcam_pp(model, in, 5), RangeError);
    CHECK(gradcam_pp(model, in, 0, "stage1").source_layer == "stage1");
  }
}

TEST_CASE("localization score") {
  ActivationMap m{Image(4, 4, 0.0f), "x", 0};
  Mask mask(4, 4, 0);
  mask.at(0, 0) = mask.at(0, 1) = 1;
  CHECK(localization_score(m, mask) == 0.0);
  m.values.at(0, 0) = 1.0f;
  m.values.at(3, 3) = 1.0f;
  CHECK(localization_score(m, mask) == doctest::Approx(0.5));
  CHECK_THROWS_AS(localization_score(m, Mask(3, 4, 0)), InputError);
}

TEST_CASE("overlay rendering") {
  Image frame(6, 5);
  for (std::size_t i = 0; i < frame.size(); ++i) frame.values()[i] = static_cast<float>(i) / 29.0f;
  const ActivationMap zero{Image(6, 5, 0.0f), "x", 0};
  const auto plain = render_overlay(zero, frame);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) {
      const auto px = plain.at(r, c);
      CHECK(px.r == px.g);
      CHECK(px.g == px.b);
      CHECK(std::abs(int(px.r) - int(std::lround(frame.at(r, c) * 255.0f))) <= 1);
    }

  ActivationMap hot{Image(6, 5, 1.0f), "x", 0};
  const auto red = render_overlay(hot, Image(6, 5, 0.0f));
  CHECK(red.at(2, 2).r > red.at(2, 2).g);

  Mask mask(6, 5, 0);
  for (int r = 1; r <= 3; ++r)
    for (int c = 1; c <= 4; ++c) mask.at(r, c) = 1;
  const auto outlined = render_overlay(zero, frame, mask);
  CHECK(outlined.at(1, 1) == Rgb{0, 255, 0});
  CHECK(outlined.at(3, 4) == Rgb{0, 255, 0});
  CHECK(outlined.at(0, 0) == plain.at(0, 0));
  CHECK_THROWS_AS(render_overlay(zero, Image(5, 5)), InputError);
}
