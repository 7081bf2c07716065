#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "jelly/image.hpp"

namespace jelly {

using Frame = Image;

struct VideoClip {
  std::vector<Frame> frames;
  double fps = 30.0;

  int length() const noexcept { return static_cast<int>(frames.size()); }
  int width() const noexcept { return frames.empty() ? 0 : frames.front().width(); }
  int height() const noexcept { return frames.empty() ? 0 : frames.front().height(); }
};

struct Roi {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool contains(int px, int py) const noexcept {
    return px >= x && px < x + width && py >= y && py < y + height;
  }
  bool operator==(const Roi&) const = default;
};

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

struct SurfaceTrace {
  std::vector<Point> points;
  bool operator==(const SurfaceTrace&) const = default;
};

struct Annotation {
  std::string case_id;
  double fps = 30.0;
  Roi roi;
  SurfaceTrace surface;
  int label = 0;
  std::string operator_name;
  std::string created_at;
  bool operator==(const Annotation&) const = default;
};

struct CaseRecord {
  std::string case_id;
  VideoClip clip;
  Annotation annotation;
};

struct ManifestEntry {
  std::string case_id;
  std::filesystem::path path;
  int label = 0;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  const ManifestEntry& find(const std::string& case_id) const;
};

struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  bool operator==(const Fold&) const = default;
};

struct SplitPlan {
  std::vector<Fold> folds;
  std::uint64_t seed = 0;
  bool operator==(const SplitPlan&) const = default;
};

/// Height implied by the 5:3 aspect for a given width.
int roi_height_for_width(int width);

/// Throws ValidationError naming the offending field.
void validate_frame(const Frame& frame, const std::string& field = "frame");
void validate_clip(const VideoClip& clip);
void validate_roi(const Roi& roi, int frame_width, int frame_height);
void validate_annotation(const Annotation& annotation, int frame_width, int frame_height);

std::string annotation_to_json(const Annotation& annotation);
Annotation annotation_from_json(const std::string& text);

CaseRecord load_case(const std::filesystem::path& case_dir);
/// Writes `<case_dir>/frames/00001.png ...` and `<case_dir>/annotation.json`.
void save_case(const std::filesystem::path& case_dir, const CaseRecord& record);

/// Sorted list of frame files; enforces equal-width zero-padded numbering 1..N.
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& frames_dir);

DatasetManifest build_manifest(const std::filesystem::path& root);
void write_manifest_csv(const std::filesystem::path& file, const DatasetManifest& manifest);
/// Relative paths resolve against the manifest's directory.
DatasetManifest read_manifest_csv(const std::filesystem::path& file);

SplitPlan stratified_kfold(const DatasetManifest& manifest, int k, double val_fraction,
                           std::uint64_t seed);

/// Throws SplitError if the plan breaks disjointness or coverage.
void check_split(const SplitPlan& plan, const DatasetManifest& manifest);

}  // namespace jelly
