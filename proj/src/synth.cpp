#include "jelly/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "jelly/errors.hpp"
#include "jelly/image_io.hpp"
#include "jelly/random.hpp"

namespace fs = std::filesystem;

namespace jelly::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Geometry {
  Roi roi;
  double lumen_top = 0, wall_top = 0, wall_thickness = 0;
  double plaque_center = 0, plaque_half_width = 0, plaque_height = 0;
  double dent_center = 0, dent_width = 0;
  double plaque_gain = 0.55;
};

// Static speckle-like texture on a canvas padded by `pad` on every side.
struct Texture {
  int pad = 0;
  Image field;
  float at(int row, int col) const {
    const int r = std::clamp(row + pad, 0, field.height() - 1);
    const int c = std::clamp(col + pad, 0, field.width() - 1);
    return field.at(r, c);
  }
};

Texture make_texture(int width, int height, int pad, Rng& rng) {
  Texture tex;
  tex.pad = pad;
  Image noise(width + 2 * pad, height + 2 * pad);
  for (auto& v : noise.values()) v = static_cast<float>(rng.uniform());
  // two 3x3 box passes give a correlated speckle grain
  for (int pass = 0; pass < 2; ++pass) {
    Image smooth(noise.width(), noise.height());
    for (int r = 0; r < noise.height(); ++r)
      for (int c = 0; c < noise.width(); ++c) {
        float acc = 0;
        int cnt = 0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= noise.height() || cc >= noise.width()) continue;
            acc += noise.at(rr, cc);
            ++cnt;
          }
        smooth.at(r, c) = acc / static_cast<float>(cnt);
      }
    noise = std::move(smooth);
  }
  // stretch to roughly [0,1]
  for (auto& v : noise.values()) v = std::clamp((v - 0.5f) * 3.5f + 0.5f, 0.0f, 1.0f);
  tex.field = std::move(noise);
  return tex;
}

double bump(double u) { return std::abs(u) < 1.0 ? 0.5 * (1.0 + std::cos(std::numbers::pi * u)) : 0.0; }

double dent_profile(const Geometry& g, double x) {
  const double u = (x - g.dent_center) / g.dent_width;
  return std::exp(-u * u);
}

// Surface row (sub-pixel) in scene coordinates for a given dent depth.
double surface_row(const Geometry& g, double x, double dent) {
  return g.wall_top - g.plaque_height * bump((x - g.plaque_center) / g.plaque_half_width) + dent * dent_profile(g, x);
}

double dent_at(const SynthSpec& spec, int t) {
  double d = spec.surface_irregularity;
  if (spec.label == 1) {
    d += spec.undulation_depth * 0.5 * (1.0 - std::cos(kTwoPi * t / spec.pulse_period + spec.undulation_phase));
  }
  return d;
}

float scene_value(const Geometry& g, const Texture& tex, int row, int col, double dent) {
  const double t = tex.at(row, col);
  const double y = row + 0.5;
  double v = 0.25 + 0.2 * t;  // surrounding tissue
  const double lumen_bottom = g.wall_top;
  const double top_wall_top = g.lumen_top - g.wall_thickness;
  if (y >= top_wall_top && y < g.lumen_top) v = 0.7 + 0.25 * t;
  if (y >= g.lumen_top && y < lumen_bottom) {
    v = 0.04 + 0.06 * t;
    const double s = surface_row(g, col + 0.5, dent);
    // coverage of the plaque below the surface, antialiased over one pixel
    const double cover = std::clamp(y + 0.5 - s, 0.0, 1.0);
    const double plaque = g.plaque_gain * (0.75 + 0.5 * t);
    v = (1.0 - cover) * v + cover * plaque;
  }
  if (y >= lumen_bottom && y < lumen_bottom + g.wall_thickness) v = 0.7 + 0.25 * t;
  return static_cast<float>(v);
}

}  // namespace

void validate(const SynthSpec& s) {
  if (s.label != 0 && s.label != 1) throw ConfigError("synth: label must be 0 or 1");
  if (s.frames < 1) throw ConfigError("synth: frames must be positive");
  if (!(s.fps > 0)) throw ConfigError("synth: fps must be positive");
  if (!(s.pulse_period >= 2.0)) throw ConfigError("synth: pulse period must be at least 2 frames");
  if ((s.undulation_depth > 0.0) != (s.label == 1)) {
    throw ConfigError("synth: undulation depth must be positive exactly for positive cases");
  }
  if (s.jitter_amplitude < 0 || s.noise_sigma < 0 || s.surface_irregularity < 0) {
    throw ConfigError("synth: jitter, noise and irregularity must be nonnegative");
  }
  const int roi_h = roi_height_for_width(s.roi_width);
  if (s.roi_width < 10 || s.frame_width < s.roi_width + 2 * s.jitter_amplitude + 2 ||
      s.frame_height < roi_h + 2 * s.jitter_amplitude + 2) {
    throw ConfigError("synth: frame too small for the ROI plus jitter");
  }
}

std::pair<CaseRecord, SynthTruth> generate_clip(const SynthSpec& spec, const std::string& case_id) {
  validate(spec);
  Rng rng(spec.seed);
  Geometry g;
  g.roi.width = spec.roi_width;
  g.roi.height = roi_height_for_width(spec.roi_width);
  g.roi.x = (spec.frame_width - g.roi.width) / 2;
  g.roi.y = (spec.frame_height - g.roi.height) / 2;
  const double w = g.roi.width, h = g.roi.height;
  g.lumen_top = g.roi.y + 0.2 * h;
  g.wall_top = g.roi.y + 0.8 * h;
  g.wall_thickness = 0.1 * h;
  g.plaque_center = g.roi.x + w * rng.uniform(0.42, 0.58);
  g.plaque_half_width = w * rng.uniform(0.3, 0.42);
  g.plaque_height = h * rng.uniform(0.3, 0.4);
  g.dent_center = g.plaque_center + g.plaque_half_width * rng.uniform(-0.3, 0.3);
  g.dent_width = w * rng.uniform(0.15, 0.2);
  g.plaque_gain = rng.uniform(0.45, 0.6);

  const int pad = spec.jitter_amplitude + 2;
  const Texture tex = make_texture(spec.frame_width, spec.frame_height, pad, rng);
  Rng noise_rng = rng.fork(0x6e6f697365ULL);

  CaseRecord rec;
  rec.case_id = case_id;
  rec.clip.fps = spec.fps;
  SynthTruth truth;
  truth.label = spec.label;
  for (int t = 0; t < spec.frames; ++t) {
    const double phase = std::sin(kTwoPi * t / spec.pulse_period);
    const Offset shift{static_cast<int>(std::lround(spec.jitter_amplitude * phase)),
                       static_cast<int>(std::lround(0.5 * spec.jitter_amplitude * phase))};
    truth.shifts.push_back(shift);
    const double dent = dent_at(spec, t);
    Frame frame(spec.frame_width, spec.frame_height);
    for (int r = 0; r < spec.frame_height; ++r)
      for (int c = 0; c < spec.frame_width; ++c) {
        float v = scene_value(g, tex, r - shift.row, c - shift.col, dent);
        if (spec.noise_sigma > 0) v += static_cast<float>(noise_rng.normal(0.0, spec.noise_sigma));
        frame.at(r, c) = io::quantize8(v);
      }
    rec.clip.frames.push_back(std::move(frame));
  }

  Annotation& a = rec.annotation;
  a.case_id = case_id;
  a.fps = spec.fps;
  a.roi = g.roi;
  a.label = spec.label;
  a.operator_name = "synth";
  a.created_at = "1970-01-01T00:00:00Z";
  const double dent0 = dent_at(spec, 0);
  constexpr int kTracePoints = 16;
  for (int k = 0; k < kTracePoints; ++k) {
    const double x = g.roi.x + 1 + (w - 3) * k / (kTracePoints - 1.0);
    const int px = static_cast<int>(std::lround(x));
    const int py = std::clamp(static_cast<int>(std::floor(surface_row(g, px + 0.5, dent0))), g.roi.y,
                              g.roi.y + g.roi.height - 1);
    a.surface.points.push_back({px, py});
  }

  truth.lesion_mask = Mask(spec.frame_width, spec.frame_height, 0);
  if (spec.label == 1) {
    // band swept by the moving surface, widened by a margin
    const double margin = std::max(2.0, 0.08 * h);
    const double lo_dent = spec.surface_irregularity;
    const double hi_dent = spec.surface_irregularity + spec.undulation_depth;
    for (int c = g.roi.x; c < g.roi.x + g.roi.width; ++c) {
      const double x = c + 0.5;
      if (dent_profile(g, x) < 0.1) continue;
      const double top = surface_row(g, x, lo_dent) - margin;
      const double bottom = surface_row(g, x, hi_dent) + margin;
      for (int r = g.roi.y; r < g.roi.y + g.roi.height; ++r) {
        if (r + 0.5 >= top && r + 0.5 <= bottom) truth.lesion_mask.at(r, c) = 1;
      }
    }
  }
  return {std::move(rec), std::move(truth)};
}

std::vector<DatasetCase> dataset_specs(int n, double positive_ratio, const SpecRanges& ranges, std::uint64_t seed) {
  if (n < 2) throw ConfigError("synth: need at least 2 cases");
  if (!(positive_ratio >= 0.0 && positive_ratio <= 1.0)) throw ConfigError("synth: ratio must be in [0,1]");
  const int positives = static_cast<int>(std::lround(n * positive_ratio));
  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + positives, 1);
  Rng rng(seed);
  rng.shuffle(std::span<int>(labels));

  std::vector<DatasetCase> out;
  const int digits = n >= 1000 ? 4 : 3;
  for (int i = 0; i < n; ++i) {
    SynthSpec s;
    s.label = labels[i];
    s.frames = rng.uniform_int(ranges.min_frames, ranges.max_frames);
    s.fps = ranges.fps;
    s.pulse_period = s.frames / 2.0;  // two heartbeats per clip
    s.jitter_amplitude = rng.uniform_int(ranges.min_jitter, ranges.max_jitter);
    const double depth = rng.uniform(ranges.min_depth, ranges.max_depth);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (s.label == 1) {
      s.undulation_depth = depth;
      s.undulation_phase = phase;
    } else {
      s.surface_irregularity = depth * 0.5 * (1.0 - std::cos(phase));
    }
    s.noise_sigma = rng.uniform(ranges.min_noise, ranges.max_noise);
    s.frame_width = ranges.frame_width;
    s.frame_height = ranges.frame_height;
    s.roi_width = ranges.roi_width;
    s.seed = rng.next();
    char id[32];
    std::snprintf(id, sizeof id, "case_%0*d", digits, i + 1);
    out.push_back({id, s});
  }
  return out;
}

void save_truth(const fs::path& case_dir, const SynthTruth& truth) {
  nlohmann::json shifts = nlohmann::json::array();
  for (const auto& s : truth.shifts) shifts.push_back({s.row, s.col});
  const nlohmann::json j = {{"label", truth.label}, {"shifts", shifts}, {"lesion_mask", "mask.png"}};
  std::ofstream(case_dir / "truth.json") << j.dump(2) << "\n";
  io::write_png_mask(case_dir / "mask.png", truth.lesion_mask, /*black_on_white=*/false);
}

SynthTruth load_truth(const fs::path& case_dir) {
  std::ifstream in(case_dir / "truth.json");
  if (!in) throw DecodeError((case_dir / "truth.json").string() + ": cannot open");
  nlohmann::json j;
  in >> j;
  SynthTruth t;
  t.label = j.at("label").get<int>();
  for (const auto& s : j.at("shifts")) t.shifts.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  t.lesion_mask = io::read_png_mask(case_dir / j.at("lesion_mask").get<std::string>(), /*black_on_white=*/false);
  return t;
}

DatasetManifest generate_dataset(const fs::path& out, int n, double positive_ratio, const SpecRanges& ranges,
                                 std::uint64_t seed) {
  fs::create_directories(out);
  DatasetManifest manifest;
  for (const auto& c : dataset_specs(n, positive_ratio, ranges, seed)) {
    const auto [record, truth] = generate_clip(c.spec, c.case_id);
    save_case(out / c.case_id, record);
    save_truth(out / c.case_id, truth);
    manifest.entries.push_back({c.case_id, c.case_id, c.spec.label});
  }
  write_manifest_csv(out / "manifest.csv", manifest);
  return manifest;
}

Mask lesion_mask_in_patch(const Mask& full, const Roi& roi, int width, int height) {
  Mask cropped(roi.width, roi.height);
  for (int r = 0; r < roi.height; ++r)
    for (int c = 0; c < roi.width; ++c) cropped.at(r, c) = full.at(roi.y + r, roi.x + c);
  return resize_nearest(cropped, width, height);
}

}  // namespace jelly::synth
