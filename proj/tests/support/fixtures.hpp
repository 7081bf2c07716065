#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "jelly/data_model.hpp"

namespace fixture {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "jelly") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            (tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Noise frames with a valid 5:3 ROI and a two-point trace.
inline jelly::CaseRecord small_case(const std::string& id, int label, int frames = 4, int width = 40,
                                    int height = 30, std::uint64_t seed = 1) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> level(0, 255);
  jelly::CaseRecord rec;
  rec.case_id = id;
  for (int t = 0; t < frames; ++t) {
    jelly::Frame f(width, height);
    // values on the 8-bit grid so PNG round trips are exact
    for (auto& v : f.values()) v = static_cast<float>(level(gen)) / 255.0f;
    rec.clip.frames.push_back(std::move(f));
  }
  rec.annotation.case_id = id;
  rec.annotation.fps = 30.0;
  rec.annotation.roi = {5, 5, 20, 12};
  rec.annotation.surface.points = {{6, 10}, {15, 12}, {23, 11}};
  rec.annotation.label = label;
  rec.annotation.operator_name = "tester";
  rec.annotation.created_at = "2024-01-01T00:00:00Z";
  return rec;
}

inline jelly::DatasetManifest balanced_manifest(int n) {
  jelly::DatasetManifest m;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "case_%03d", i + 1);
    m.entries.push_back({id, id, i < n / 2 ? 1 : 0});
  }
  return m;
}

}  // namespace fixture
