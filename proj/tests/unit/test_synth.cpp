#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "jelly/errors.hpp"
#include "jelly/synth.hpp"

using namespace jelly;
using namespace jelly::synth;

namespace {

SynthSpec small_spec(int label) {
  SynthSpec s;
  s.label = label;
  s.frames = 12;
  s.pulse_period = 6;
  s.frame_width = 120;
  s.frame_height = 90;
  s.roi_width = 60;
  s.undulation_depth = label ? 4.0 : 0.0;
  s.seed = 5;
  return s;
}

}  // namespace

TEST_CASE("negative clip shifts follow the sinusoid") {
  SynthSpec s;
  s.label = 0;
  s.jitter_amplitude = 3;
  s.pulse_period = 42;
  s.frames = 84;
  s.frame_width = 160;
  s.frame_height = 120;
  s.roi_width = 100;
  const auto [rec, truth] = generate_clip(s, "neg");
  REQUIRE(truth.shifts.size() == 84);
  CHECK(rec.clip.length() == 84);
  for (int t = 0; t < 84; ++t) {
    const double phase = std::sin(2.0 * std::numbers::pi * t / 42.0);
    CHECK(truth.shifts[t].row == std::lround(3 * phase));
    CHECK(truth.shifts[t].col == std::lround(1.5 * phase));
  }
  CHECK(truth.shifts[0] == Offset{0, 0});
  for (auto v : truth.lesion_mask.values()) CHECK(v == 0);
  CHECK_NOTHROW(validate_annotation(rec.annotation, 160, 120));
}

TEST_CASE("positive clip has a lesion mask inside the roi") {
  const auto [rec, truth] = generate_clip(small_spec(1), "pos");
  int count = 0;
  for (int r = 0; r < 90; ++r)
    for (int c = 0; c < 120; ++c) {
      if (!truth.lesion_mask.at(r, c)) continue;
      ++count;
      CHECK(rec.annotation.roi.contains(c, r));
    }
  CHECK(count > 0);
  const auto patch = lesion_mask_in_patch(truth.lesion_mask, rec.annotation.roi, 32, 20);
  CHECK(patch.width() == 32);
  CHECK(patch.height() == 20);
}

TEST_CASE("static noiseless clip has identical frames") {
  auto s = small_spec(0);
  s.noise_sigma = 0.0;
  s.jitter_amplitude = 0;
  const auto [rec, truth] = generate_clip(s, "static");
  for (int t = 1; t < rec.clip.length(); ++t) CHECK(rec.clip.frames[t] == rec.clip.frames[0]);
}

TEST_CASE("positive surface moves while the negative surface does not") {
  auto pos = small_spec(1);
  pos.noise_sigma = 0.0;
  pos.jitter_amplitude = 0;
  auto neg = pos;
  neg.label = 0;
  neg.undulation_depth = 0.0;
  neg.surface_irregularity = 2.0;
  const auto [p, pt] = generate_clip(pos, "p");
  const auto [n, nt] = generate_clip(neg, "n");
  bool moved = false;
  for (int t = 1; t < p.clip.length(); ++t) moved |= !(p.clip.frames[t] == p.clip.frames[0]);
  CHECK(moved);
  for (int t = 1; t < n.clip.length(); ++t) CHECK(n.clip.frames[t] == n.clip.frames[0]);
}

TEST_CASE("spec validation") {
  auto s = small_spec(0);
  s.undulation_depth = 1.0;
  CHECK_THROWS_AS(validate(s), ConfigError);
  auto t = small_spec(1);
  t.undulation_depth = 0.0;
  CHECK_THROWS_AS(validate(t), ConfigError);
  auto u = small_spec(0);
  u.roi_width = 119;
  CHECK_THROWS_AS(validate(u), ConfigError);
}

TEST_CASE("dataset label balance and determinism") {
  SpecRanges ranges;
  const auto specs = dataset_specs(200, 0.5, ranges, 1);
  int positives = 0;
  for (const auto& c : specs) {
    positives += c.spec.label;
    CHECK(c.spec.frames >= ranges.min_frames);
    CHECK(c.spec.frames <= ranges.max_frames);
    CHECK(c.spec.pulse_period == doctest::Approx(c.spec.frames / 2.0));
    CHECK_NOTHROW(validate(c.spec));
  }
  CHECK(positives == 100);
  const auto two = dataset_specs(2, 0.5, ranges, 3);
  CHECK(two[0].spec.label + two[1].spec.label == 1);
  CHECK_THROWS_AS(dataset_specs(1, 0.5, ranges, 3), ConfigError);
}

TEST_CASE("generated datasets are bit-identical for the same seed") {
  fixture::TempDir tmp;
  SpecRanges r;
  r.min_frames = r.max_frames = 6;
  r.frame_width = 80;
  r.frame_height = 60;
  r.roi_width = 40;
  r.min_depth = 3;
  r.max_depth = 4;
  const auto m1 = generate_dataset(tmp / "a", 4, 0.5, r, 9);
  const auto m2 = generate_dataset(tmp / "b", 4, 0.5, r, 9);
  CHECK(m1.entries == m2.entries);
  REQUIRE(m1.size() == 4);
  for (const auto& e : m1.entries) {
    const auto a = load_case(tmp / "a" / e.case_id);
    const auto b = load_case(tmp / "b" / e.case_id);
    CHECK(a.annotation == b.annotation);
    for (int t = 0; t < a.clip.length(); ++t) CHECK(a.clip.frames[t] == b.clip.frames[t]);
    const auto ta = load_truth(tmp / "a" / e.case_id);
    CHECK(ta.label == e.label);
    CHECK(ta.shifts.size() == 6);
    CHECK(ta.lesion_mask == load_truth(tmp / "b" / e.case_id).lesion_mask);
  }
  const auto read = read_manifest_csv(tmp / "a" / "manifest.csv");
  CHECK(read.size() == 4);
}
