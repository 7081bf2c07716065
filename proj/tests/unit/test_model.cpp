#include <doctest.h>

#include <cmath>
#include <random>

#include "jelly/model.hpp"
#include "oracles.hpp"

using namespace jelly;

namespace {

ModelConfig tiny(Variant v, int width = 24, int height = 16) {
  ModelConfig c;
  c.variant = v;
  c.backbone = Backbone::resnet_tiny;
  c.tiny_width = 4;
  c.hidden_size = 6;
  c.input_width = width;
  c.input_height = height;
  return c;
}

InputTensor random_input(int frames, int w, int h, std::uint64_t seed, int channels = 2) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  InputTensor in(frames, w, h, channels);
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < channels; ++c)
      for (int r = 0; r < h; ++r)
        for (int x = 0; x < w; ++x) in.at(t, c, r, x) = u(gen);
  return in;
}

}  // namespace

TEST_CASE("resnet18 two-channel stem") {
  ModelConfig c;
  c.variant = Variant::bilstm;
  c.backbone = Backbone::resnet18;
  const Classifier<float> m(c, 1);
  CHECK(m.params().get("backbone.stem.conv.weight")->value.shape() == std::vector<int>{64, 2, 7, 7});
  CHECK(m.feature_dim() == 512);
  CHECK(m.last_conv_layer() == "layer4");
}

TEST_CASE("same config and seed give identical parameters") {
  const Classifier<float> a(tiny(Variant::bilstm), 9), b(tiny(Variant::bilstm), 9), c(tiny(Variant::bilstm), 10);
  REQUIRE(a.params().items().size() == b.params().items().size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params().items().size(); ++i) {
    CHECK(a.params().items()[i].first == b.params().items()[i].first);
    CHECK(a.params().items()[i].second->value == b.params().items()[i].second->value);
    any_diff |= !(a.params().items()[i].second->value == c.params().items()[i].second->value);
  }
  CHECK(any_diff);
}

TEST_CASE("variant parameter sets") {
  const Classifier<float> fc(tiny(Variant::fc), 1), lstm(tiny(Variant::lstm), 1), bi(tiny(Variant::bilstm), 1);
  const auto has_temporal = [](const Classifier<float>& m) {
    for (const auto& [name, p] : m.params().items())
      if (name.rfind("temporal.", 0) == 0) return true;
    return false;
  };
  CHECK_FALSE(has_temporal(fc));
  CHECK(has_temporal(lstm));
  CHECK(has_temporal(bi));
  CHECK(bi.params().scalar_count() > lstm.params().scalar_count());
}

TEST_CASE("config validation and parsing") {
  CHECK(parse_variant("bilstm") == Variant::bilstm);
  CHECK(parse_variant("fc") == Variant::fc);
  CHECK_THROWS_AS(parse_variant("flying"), ConfigError);
  CHECK(parse_backbone("resnet18") == Backbone::resnet18);
  CHECK(parse_backbone("tiny") == Backbone::resnet_tiny);
  auto bad = tiny(Variant::bilstm);
  bad.hidden_size = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("forward produces one probability per clip") {
  for (const Variant v : {Variant::bilstm, Variant::lstm, Variant::fc}) {
    Classifier<float> m(tiny(v), 3);
    const auto in = random_input(7, 24, 16, 4);
    const auto p = m.predict(in);
    CHECK(p.probability > 0.0);
    CHECK(p.probability < 1.0);
    CHECK(p.probability == doctest::Approx(1.0 / (1.0 + std::exp(-p.logit))).epsilon(1e-6));

    const auto in2 = random_input(7, 24, 16, 5);
    ad::Tape<float> tape(false);
    const auto batch = ad::constant(m.batch_tensor({&in, &in2}));
    const auto logits = m.forward(tape, batch, 2, 7, false);
    REQUIRE(logits->value.shape() == std::vector<int>{2, 1});
    CHECK(logits->value[0] == doctest::Approx(p.logit).epsilon(1e-5));
  }
}

TEST_CASE("resnet18 at full input size gives a single probability") {
  ModelConfig c;
  c.hidden_size = 8;
  Classifier<float> m(c, 1);
  const auto in = random_input(45, 224, 134, 2);
  const auto p = m.predict(in);
  CHECK(p.probability > 0.0);
  CHECK(p.probability < 1.0);
}

TEST_CASE("fc head is blind to frame order") {
  Classifier<float> m(tiny(Variant::fc), 3);
  const auto in = random_input(6, 24, 16, 8);
  InputTensor shuffled(6, 24, 16);
  const int order[] = {3, 0, 5, 1, 4, 2};
  for (int t = 0; t < 6; ++t)
    for (int c = 0; c < 2; ++c)
      for (int r = 0; r < 16; ++r)
        for (int x = 0; x < 24; ++x) shuffled.at(t, c, r, x) = in.at(order[t], c, r, x);
  CHECK(m.predict(in).probability == doctest::Approx(m.predict(shuffled).probability).epsilon(1e-6));

  Classifier<float> bi(tiny(Variant::bilstm), 3);
  CHECK(bi.predict(in).probability != bi.predict(shuffled).probability);
}

TEST_CASE("cross-entropy worked examples") {
  CHECK(cross_entropy_loss({{0.5, 0.0}}, {1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cross_entropy_loss({{1.0, 40.0}}, {1}) < 1e-6);
  CHECK(cross_entropy_loss({{0.9, 0.0}, {0.2, 0.0}}, {1, 0}) == doctest::Approx(0.16425).epsilon(1e-4));
  CHECK(cross_entropy_loss({{0.9, 0.0}, {0.2, 0.0}}, {1, 0}) ==
        doctest::Approx(oracle::bce({0.9, 0.2}, {1, 0})).epsilon(1e-12));
  CHECK(std::isfinite(cross_entropy_loss({{0.0, 0.0}}, {1})));
  CHECK_THROWS(cross_entropy_loss({{0.5, 0.0}}, {1, 0}));
}
