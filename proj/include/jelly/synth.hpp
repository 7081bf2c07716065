#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "jelly/data_model.hpp"
#include "jelly/preprocess.hpp"

namespace jelly::synth {

/// One synthetic B-mode-like clip: bright wall bands around a dark lumen and
/// a plaque bump on the lower wall. The whole scene translates sinusoidally
/// (pulsation); positives additionally dip a local stretch of the plaque
/// surface with the same period.
struct SynthSpec {
  int label = 0;
  int frames = 84;
  double fps = 30.0;
  int jitter_amplitude = 3;        // px, peak global translation
  double pulse_period = 42.0;      // frames
  double undulation_depth = 0.0;   // px, > 0 iff label == 1
  double undulation_phase = 0.0;   // radians at frame 1
  double surface_irregularity = 0.0;  // px, frozen dent depth (any label)
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;
  int frame_width = 400;
  int frame_height = 300;
  int roi_width = 200;             // height follows 5:3
};

struct SynthTruth {
  int label = 0;
  std::vector<Offset> shifts;  // per frame (d_row, d_col) relative to frame 1
  Mask lesion_mask;            // full-frame, frame-1 coordinates; empty set for negatives
};

/// Throws ConfigError for inconsistent specs.
void validate(const SynthSpec& spec);

std::pair<CaseRecord, SynthTruth> generate_clip(const SynthSpec& spec, const std::string& case_id = "synth");

struct SpecRanges {
  int min_frames = 66, max_frames = 102;
  int min_jitter = 1, max_jitter = 5;
  double min_depth = 6.0, max_depth = 10.0;
  double min_noise = 0.005, max_noise = 0.02;
  int frame_width = 400, frame_height = 300;
  int roi_width = 200;
  double fps = 30.0;
};

struct DatasetCase {
  std::string case_id;
  SynthSpec spec;
};

/// Case ids and specs of a dataset with exactly round(n * ratio) positives.
/// Every clip spans two pulse periods. Negatives receive a frozen dent drawn
/// from the same distribution as the positives' frame-1 dent.
std::vector<DatasetCase> dataset_specs(int n, double positive_ratio, const SpecRanges& ranges, std::uint64_t seed);

/// Writes <out>/<caseId>/{frames/,annotation.json,truth.json,mask.png} and
/// <out>/manifest.csv.
DatasetManifest generate_dataset(const std::filesystem::path& out, int n, double positive_ratio,
                                 const SpecRanges& ranges, std::uint64_t seed);

void save_truth(const std::filesystem::path& case_dir, const SynthTruth& truth);
SynthTruth load_truth(const std::filesystem::path& case_dir);

/// Lesion mask mapped into the W x H stabilized patch of `roi`.
Mask lesion_mask_in_patch(const Mask& full_frame_mask, const Roi& roi, int width, int height);

}  // namespace jelly::synth
