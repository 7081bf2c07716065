#include "jelly/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "jelly/errors.hpp"
#include "jelly/image_io.hpp"

namespace fs = std::filesystem;

namespace jelly {

InputTensor::InputTensor(int frames, int width, int height, int channels)
    : frames_(frames), width_(width), height_(height), channels_(channels),
      data_(static_cast<std::size_t>(frames) * channels * width * height, 0.0f) {}

InputTensor video_only(const InputTensor& input) {
  InputTensor out(input.frames(), input.width(), input.height(), 1);
  for (int t = 0; t < input.frames(); ++t) {
    std::copy_n(input.plane(t, 0), input.plane_size(), out.plane(t, 0));
  }
  return out;
}

Image crop(const Image& image, const Roi& roi) {
  if (roi.x < 0 || roi.y < 0 || roi.x + roi.width > image.width() || roi.y + roi.height > image.height()) {
    throw RangeError("crop window outside image");
  }
  Image out(roi.width, roi.height);
  for (int r = 0; r < roi.height; ++r) {
    const float* src = image.data() + static_cast<std::size_t>(roi.y + r) * image.width() + roi.x;
    std::copy(src, src + roi.width, out.data() + static_cast<std::size_t>(r) * roi.width);
  }
  return out;
}

Image resize_bilinear(const Image& image, int width, int height) {
  if (width < 1 || height < 1) throw InputError("resize target must be positive");
  if (width == image.width() && height == image.height()) return image;
  Image out(width, height);
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  for (int r = 0; r < height; ++r) {
    double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height() - 1);
    fy -= y0;
    for (int c = 0; c < width; ++c) {
      double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width() - 1);
      fx -= x0;
      const double top = image.at(y0, x0) + fx * (image.at(y0, x1) - image.at(y0, x0));
      const double bottom = image.at(y1, x0) + fx * (image.at(y1, x1) - image.at(y1, x0));
      out.at(r, c) = static_cast<float>(top + fy * (bottom - top));
    }
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int width, int height) {
  if (width < 1 || height < 1) throw InputError("resize target must be positive");
  Mask out(width, height);
  for (int r = 0; r < height; ++r) {
    const int sr = std::min(static_cast<int>((r + 0.5) * mask.height() / height), mask.height() - 1);
    for (int c = 0; c < width; ++c) {
      const int sc = std::min(static_cast<int>((c + 0.5) * mask.width() / width), mask.width() - 1);
      out.at(r, c) = mask.at(sr, sc);
    }
  }
  return out;
}

std::vector<Point> rasterize_line(Point a, Point b) {
  std::vector<Point> out;
  const int dx = std::abs(b.x - a.x), dy = -std::abs(b.y - a.y);
  const int sx = a.x < b.x ? 1 : -1, sy = a.y < b.y ? 1 : -1;
  int err = dx + dy;
  Point p = a;
  while (true) {
    out.push_back(p);
    if (p == b) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      p.x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      p.y += sy;
    }
  }
  return out;
}

SurfaceImage rasterize_surface(const SurfaceTrace& trace, const Roi& roi, int target_width,
                               int target_height) {
  if (trace.points.size() < 2) throw InputError("surface trace needs at least 2 points");
  if (target_width < 1 || target_height < 1) throw InputError("target size must be positive");
  const auto map = [&](Point p) {
    if (!roi.contains(p.x, p.y)) throw InputError("surface point outside ROI");
    const int col = static_cast<int>((p.x - roi.x + 0.5) * target_width / roi.width);
    const int row = static_cast<int>((p.y - roi.y + 0.5) * target_height / roi.height);
    return Point{std::min(col, target_width - 1), std::min(row, target_height - 1)};
  };
  SurfaceImage out(target_width, target_height, 0);
  Point prev = map(trace.points.front());
  for (std::size_t i = 1; i < trace.points.size(); ++i) {
    const Point next = map(trace.points[i]);
    for (const Point& p : rasterize_line(prev, next)) out.at(p.y, p.x) = 1;
    prev = next;
  }
  return out;
}

double ncc(const Template& templ, const Frame& frame, int i, int j) {
  if (templ.width() < 1 || templ.height() < 1) throw InputError("empty template");
  if (i < 0 || j < 0 || i + templ.height() > frame.height() || j + templ.width() > frame.width()) {
    throw RangeError("template window at (" + std::to_string(i) + "," + std::to_string(j) +
                     ") leaves the frame");
  }
  return kernels::ncc_at(templ, frame, i, j);
}

Offset match_template(const Template& templ, const Frame& frame, const MatchOptions& options) {
  if (templ.width() < 1 || templ.height() < 1) throw InputError("empty template");
  if (frame.width() < templ.width() || frame.height() < templ.height()) {
    throw InputError("frame smaller than template");
  }
  const int max_row = frame.height() - templ.height();
  const int max_col = frame.width() - templ.width();
  kernels::SearchWindow win{0, max_row + 1, 0, max_col + 1};
  if (options.search_radius >= 0) {
    const int r = options.search_radius;
    win.row_begin = std::clamp(options.center.row - r, 0, max_row);
    win.row_end = std::clamp(options.center.row + r, 0, max_row) + 1;
    win.col_begin = std::clamp(options.center.col - r, 0, max_col);
    win.col_end = std::clamp(options.center.col + r, 0, max_col) + 1;
  }
  const auto scores = kernels::ncc_scores(templ, frame, win, options.exec);
  const int cols = win.col_end - win.col_begin;
  // first strict maximum in row-major order = smallest row, then column
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return {win.row_begin + static_cast<int>(best) / cols, win.col_begin + static_cast<int>(best) % cols};
}

PlaqueClip stabilize_clip(const VideoClip& clip, const Roi& roi, const StabilizeOptions& options) {
  if (clip.frames.empty()) throw InputError("empty clip");
  validate_roi(roi, clip.width(), clip.height());
  const Template templ = crop(clip.frames.front(), roi);
  if (std::all_of(templ.values().begin(), templ.values().end(), [](float v) { return v == 0.0f; })) {
    throw InputError("template is all zero");
  }
  PlaqueClip out;
  out.width = options.width;
  out.height = options.height;
  MatchOptions match{options.search_radius, {roi.y, roi.x}, options.exec};
  for (const Frame& frame : clip.frames) {
    const Offset at = match_template(templ, frame, match);
    match.center = at;
    out.offsets.push_back(at);
    out.frames.push_back(
        resize_bilinear(crop(frame, {at.col, at.row, roi.width, roi.height}), options.width, options.height));
  }
  return out;
}

InputTensor assemble_input(const PlaqueClip& plaque, const SurfaceImage& surface) {
  if (plaque.frames.empty()) throw InputError("empty plaque clip");
  if (surface.width() != plaque.width || surface.height() != plaque.height) {
    throw InputError("surface image is " + std::to_string(surface.width()) + "x" +
                     std::to_string(surface.height()) + ", plaque clip is " + std::to_string(plaque.width) +
                     "x" + std::to_string(plaque.height));
  }
  InputTensor out(plaque.length(), plaque.width, plaque.height);
  for (int t = 0; t < plaque.length(); ++t) {
    const Image& f = plaque.frames[t];
    if (f.width() != plaque.width || f.height() != plaque.height) throw InputError("plaque frame size mismatch");
    std::copy(f.values().begin(), f.values().end(), out.plane(t, 0));
    float* edge = out.plane(t, 1);
    for (std::size_t k = 0; k < surface.size(); ++k) edge[k] = surface.values()[k] ? 1.0f : 0.0f;
  }
  return out;
}

PreparedCase prepare_case(const CaseRecord& record, const StabilizeOptions& options) {
  PreparedCase out;
  out.case_id = record.case_id;
  out.label = record.annotation.label;
  out.roi = record.annotation.roi;
  out.plaque = stabilize_clip(record.clip, record.annotation.roi, options);
  out.surface = rasterize_surface(record.annotation.surface, record.annotation.roi, options.width,
                                  options.height);
  return out;
}

void save_prepared(const fs::path& dir, const PreparedCase& prepared) {
  fs::create_directories(dir / "plaque");
  char name[32];
  for (int t = 0; t < prepared.plaque.length(); ++t) {
    std::snprintf(name, sizeof name, "%05d.png", t + 1);
    io::write_png_gray(dir / "plaque" / name, prepared.plaque.frames[t]);
  }
  io::write_png_mask(dir / "surface.png", prepared.surface, /*black_on_white=*/true);
  std::ofstream offsets(dir / "offsets.csv");
  offsets << "frame,i,j\n";
  for (int t = 0; t < prepared.plaque.length(); ++t) {
    offsets << (t + 1) << "," << prepared.plaque.offsets[t].row << "," << prepared.plaque.offsets[t].col << "\n";
  }
  nlohmann::json meta = {
      {"case_id", prepared.case_id},
      {"label", prepared.label},
      {"roi", {{"x", prepared.roi.x}, {"y", prepared.roi.y}, {"width", prepared.roi.width}, {"height", prepared.roi.height}}},
      {"width", prepared.plaque.width},
      {"height", prepared.plaque.height},
  };
  std::ofstream(dir / "case.json") << meta.dump(2) << "\n";
}

bool is_prepared_dir(const fs::path& dir) {
  return fs::exists(dir / "case.json") && fs::exists(dir / "surface.png") && fs::is_directory(dir / "plaque");
}

PreparedCase load_prepared(const fs::path& dir) {
  std::ifstream in(dir / "case.json");
  if (!in) throw DecodeError((dir / "case.json").string() + ": cannot open");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError((dir / "case.json").string() + ": " + e.what());
  }
  PreparedCase out;
  out.case_id = meta.at("case_id").get<std::string>();
  out.label = meta.at("label").get<int>();
  const auto& r = meta.at("roi");
  out.roi = {r.at("x").get<int>(), r.at("y").get<int>(), r.at("width").get<int>(), r.at("height").get<int>()};
  out.plaque.width = meta.at("width").get<int>();
  out.plaque.height = meta.at("height").get<int>();
  for (const auto& file : list_frame_files(dir / "plaque")) {
    Image f = io::read_png_gray(file);
    if (f.width() != out.plaque.width || f.height() != out.plaque.height) {
      throw DecodeError(file.string() + ": unexpected size");
    }
    out.plaque.frames.push_back(std::move(f));
  }
  out.surface = io::read_png_mask(dir / "surface.png", /*black_on_white=*/true);
  std::ifstream offsets(dir / "offsets.csv");
  std::string line;
  std::getline(offsets, line);
  while (std::getline(offsets, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string t, i, j;
    std::getline(ss, t, ',');
    std::getline(ss, i, ',');
    std::getline(ss, j);
    out.plaque.offsets.push_back({std::stoi(i), std::stoi(j)});
  }
  return out;
}

}  // namespace jelly
