#include <doctest.h>

#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "jelly/checkpoint.hpp"

using namespace jelly;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.variant = Variant::bilstm;
  c.backbone = Backbone::resnet_tiny;
  c.tiny_width = 3;
  c.hidden_size = 5;
  c.input_width = 20;
  c.input_height = 12;
  return c;
}

InputTensor ramp_input() {
  InputTensor in(4, 20, 12);
  for (int t = 0; t < 4; ++t)
    for (int r = 0; r < 12; ++r)
      for (int x = 0; x < 20; ++x) {
        in.at(t, 0, r, x) = static_cast<float>((t * 7 + r * 3 + x) % 17) / 17.0f;
        in.at(t, 1, r, x) = r == 6 ? 1.0f : 0.0f;
      }
  return in;
}

}  // namespace

TEST_CASE("config json round trip") {
  const auto c = small_config();
  CHECK(config_from_json(config_to_json(c)) == c);
  CHECK_THROWS_AS(config_from_json("{\"variant\": \"flying\"}"), ConfigError);
}

TEST_CASE("checkpoint file round trip preserves predictions") {
  fixture::TempDir tmp;
  Classifier<float> model(small_config(), 4);
  // perturb running statistics so they are not at their defaults
  for (auto& [name, st] : model.norm_states()) {
    for (auto& v : st.running_mean.values()) v = 0.1f;
    for (auto& v : st.running_var.values()) v = 1.7f;
  }
  const auto cp = snapshot(model);
  save_checkpoint(tmp / "m.ckpt", cp);
  const auto back = load_checkpoint(tmp / "m.ckpt");
  CHECK(back.config == cp.config);
  CHECK(back.names == cp.names);
  CHECK(back.tensors == cp.tensors);

  auto restored = instantiate(back);
  const auto in = ramp_input();
  CHECK(restored.predict(in).probability == model.predict(in).probability);
}

TEST_CASE("restore rejects mismatched models") {
  Classifier<float> model(small_config(), 4);
  auto cp = snapshot(model);
  auto other_cfg = small_config();
  other_cfg.hidden_size = 6;
  Classifier<float> other(other_cfg, 4);
  CHECK_THROWS_AS(restore(other, cp), ConfigError);

  auto truncated = cp;
  truncated.names.pop_back();
  truncated.tensors.pop_back();
  CHECK_THROWS(restore(model, truncated));
}

TEST_CASE("double model snapshots to float") {
  Classifier<double> model(small_config(), 4);
  const auto cp = snapshot(model);
  auto f = instantiate(cp);
  const auto in = ramp_input();
  CHECK(f.predict(in).probability == doctest::Approx(model.predict(in).probability).epsilon(1e-5));
}

TEST_CASE("corrupt checkpoint files") {
  fixture::TempDir tmp;
  CHECK_THROWS_AS(load_checkpoint(tmp / "missing.ckpt"), DecodeError);
  std::ofstream(tmp / "bad.ckpt") << "not json\n";
  CHECK_THROWS_AS(load_checkpoint(tmp / "bad.ckpt"), DecodeError);

  Classifier<float> model(small_config(), 4);
  save_checkpoint(tmp / "m.ckpt", snapshot(model));
  const auto size = std::filesystem::file_size(tmp / "m.ckpt");
  std::filesystem::resize_file(tmp / "m.ckpt", size - 8);
  CHECK_THROWS_AS(load_checkpoint(tmp / "m.ckpt"), DecodeError);
}
