#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include "jelly/data_model.hpp"
#include "jelly/image.hpp"
#include "jelly/kernels.hpp"

namespace jelly {

inline constexpr int kDefaultInputWidth = 224;
inline constexpr int kDefaultInputHeight = 134;

using Template = Image;
using SurfaceImage = Mask;  // edge = 1 in memory

struct Offset {
  int row = 0;
  int col = 0;
  bool operator==(const Offset&) const = default;
};

struct PlaqueClip {
  std::vector<Image> frames;  // each width x height
  std::vector<Offset> offsets;
  int width = 0;
  int height = 0;

  int length() const noexcept { return static_cast<int>(frames.size()); }
};

/// Network input clip stored [t][channel][row][col]. The assembled form has
/// two channels: 0 = intensity, 1 = surface edge image repeated for every t.
/// The video-only ablation drops channel 1.
class InputTensor {
 public:
  InputTensor() = default;
  InputTensor(int frames, int width, int height, int channels = 2);

  int frames() const noexcept { return frames_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  /// Shape as T x W x H x C.
  std::array<int, 4> shape() const noexcept { return {frames_, width_, height_, channels_}; }

  float& at(int t, int c, int row, int col) { return data_[index(t, c, row, col)]; }
  float at(int t, int c, int row, int col) const { return data_[index(t, c, row, col)]; }
  /// Contiguous plane of one channel at one time step.
  const float* plane(int t, int c) const { return data_.data() + index(t, c, 0, 0); }
  float* plane(int t, int c) { return data_.data() + index(t, c, 0, 0); }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(width_) * height_; }
  /// All channels of one time step.
  const float* frame(int t) const { return data_.data() + index(t, 0, 0, 0); }
  std::size_t frame_size() const noexcept { return plane_size() * channels_; }

  const std::vector<float>& values() const noexcept { return data_; }
  bool operator==(const InputTensor&) const = default;

 private:
  std::size_t index(int t, int c, int row, int col) const {
    return ((static_cast<std::size_t>(t) * channels_ + c) * height_ + row) * width_ + col;
  }

  int frames_ = 0;
  int width_ = 0;
  int height_ = 0;
  int channels_ = 2;
  std::vector<float> data_;
};

/// Intensity channel only.
InputTensor video_only(const InputTensor& input);

Image crop(const Image& image, const Roi& roi);
/// Pixel-center aligned bilinear resize; identity when the size is unchanged.
Image resize_bilinear(const Image& image, int width, int height);
Mask resize_nearest(const Mask& mask, int width, int height);

/// Integer (Bresenham) rasterization, endpoints included.
std::vector<Point> rasterize_line(Point a, Point b);

/// Edge image of the traced polyline at targetW x targetH. Vertices are mapped
/// from ROI-local pixel centers onto the target grid, then each segment is
/// drawn with rasterize_line, so the edge stays 8-connected at any scale.
SurfaceImage rasterize_surface(const SurfaceTrace& trace, const Roi& roi, int target_width,
                               int target_height);

/// Uncentered NCC of the template at (row i, col j). Throws RangeError when the
/// window leaves the frame.
double ncc(const Template& templ, const Frame& frame, int i, int j);

struct MatchOptions {
  /// Restrict the search to +-radius around `center`; negative = full frame.
  int search_radius = -1;
  Offset center{};
  kernels::Exec exec = kernels::Exec::parallel;
};

/// Argmax of NCC over all valid offsets; ties go to the smallest row, then
/// the smallest column.
Offset match_template(const Template& templ, const Frame& frame, const MatchOptions& options = {});

struct StabilizeOptions {
  int width = kDefaultInputWidth;
  int height = kDefaultInputHeight;
  /// Negative searches the full frame every frame. Otherwise each frame is
  /// searched +-radius around the previous match.
  int search_radius = -1;
  kernels::Exec exec = kernels::Exec::parallel;
};

PlaqueClip stabilize_clip(const VideoClip& clip, const Roi& roi, const StabilizeOptions& options = {});

InputTensor assemble_input(const PlaqueClip& plaque, const SurfaceImage& surface);

/// A case after preprocessing, as stored under preprocessed/<caseId>/.
struct PreparedCase {
  std::string case_id;
  int label = 0;
  Roi roi;
  PlaqueClip plaque;
  SurfaceImage surface;

  InputTensor input() const { return assemble_input(plaque, surface); }
};

PreparedCase prepare_case(const CaseRecord& record, const StabilizeOptions& options = {});

/// Writes plaque/00001.png..., surface.png (black on white), offsets.csv
/// (frame,i,j) and case.json.
void save_prepared(const std::filesystem::path& dir, const PreparedCase& prepared);
PreparedCase load_prepared(const std::filesystem::path& dir);
bool is_prepared_dir(const std::filesystem::path& dir);

}  // namespace jelly
