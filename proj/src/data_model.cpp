#include "jelly/data_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "jelly/errors.hpp"
#include "jelly/image_io.hpp"
#include "jelly/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace jelly {

const ManifestEntry& DatasetManifest::find(const std::string& case_id) const {
  for (const auto& e : entries) {
    if (e.case_id == case_id) return e;
  }
  throw InputError("case not in manifest: " + case_id);
}

int roi_height_for_width(int width) { return (6 * width + 5) / 10; }

void validate_frame(const Frame& frame, const std::string& field) {
  if (frame.width() < 1 || frame.height() < 1) throw ValidationError(field, "empty frame");
  for (float v : frame.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError(field, "intensity outside [0,1]");
  }
}

void validate_clip(const VideoClip& clip) {
  if (clip.frames.empty()) throw ValidationError("frames", "clip has no frames");
  if (!(clip.fps > 0.0)) throw ValidationError("fps", "must be positive");
  const int w = clip.width(), h = clip.height();
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    const auto& f = clip.frames[t];
    if (f.width() != w || f.height() != h) {
      throw ValidationError("frames[" + std::to_string(t) + "]", "frame size differs from frame 1");
    }
    validate_frame(f, "frames[" + std::to_string(t) + "]");
  }
}

void validate_roi(const Roi& roi, int frame_width, int frame_height) {
  if (roi.width < 1) throw ValidationError("roi.width", "must be positive");
  if (roi.height < 1) throw ValidationError("roi.height", "must be positive");
  // |height - 3/5 width| <= 1 on the integer grid
  if (std::abs(5 * roi.height - 3 * roi.width) > 5) {
    throw ValidationError("roi.height", "aspect " + std::to_string(roi.width) + "x" +
                                            std::to_string(roi.height) +
                                            " deviates from 5:3 by more than 1 px");
  }
  if (roi.x < 0 || roi.x + roi.width > frame_width) {
    throw ValidationError("roi.x", "ROI exceeds frame width");
  }
  if (roi.y < 0 || roi.y + roi.height > frame_height) {
    throw ValidationError("roi.y", "ROI exceeds frame height");
  }
}

void validate_annotation(const Annotation& a, int frame_width, int frame_height) {
  if (a.case_id.empty()) throw ValidationError("case_id", "empty");
  if (!(a.fps > 0.0)) throw ValidationError("fps", "must be positive");
  if (a.label != 0 && a.label != 1) throw ValidationError("label", "must be 0 or 1");
  validate_roi(a.roi, frame_width, frame_height);
  if (a.surface.points.size() < 2) throw ValidationError("surface", "needs at least 2 points");
  for (std::size_t i = 0; i < a.surface.points.size(); ++i) {
    const auto& p = a.surface.points[i];
    if (!a.roi.contains(p.x, p.y)) {
      throw ValidationError("surface[" + std::to_string(i) + "]", "point outside ROI");
    }
  }
}

std::string annotation_to_json(const Annotation& a) {
  json surface = json::array();
  for (const auto& p : a.surface.points) surface.push_back({{"x", p.x}, {"y", p.y}});
  json j = {
      {"case_id", a.case_id},
      {"fps", a.fps},
      {"roi", {{"x", a.roi.x}, {"y", a.roi.y}, {"width", a.roi.width}, {"height", a.roi.height}}},
      {"surface", surface},
      {"label", a.label},
      {"operator", a.operator_name},
      {"created_at", a.created_at},
  };
  return j.dump(2);
}

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ValidationError(path, "missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(path, "wrong type");
  }
}

int int_field(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ValidationError(path, "missing");
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ValidationError(path, "must be an integer");
  return v.get<int>();
}

}  // namespace

Annotation annotation_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("annotation", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("annotation", "not an object");
  Annotation a;
  a.case_id = field<std::string>(j, "case_id", "case_id");
  if (!j.contains("fps") || !j["fps"].is_number()) throw ValidationError("fps", "missing or not a number");
  a.fps = j["fps"].get<double>();
  if (!j.contains("roi") || !j["roi"].is_object()) throw ValidationError("roi", "missing");
  const auto& r = j["roi"];
  a.roi = {int_field(r, "x", "roi.x"), int_field(r, "y", "roi.y"), int_field(r, "width", "roi.width"),
           int_field(r, "height", "roi.height")};
  if (!j.contains("surface") || !j["surface"].is_array()) throw ValidationError("surface", "missing");
  for (std::size_t i = 0; i < j["surface"].size(); ++i) {
    const auto& p = j["surface"][i];
    const std::string path = "surface[" + std::to_string(i) + "]";
    a.surface.points.push_back({int_field(p, "x", path + ".x"), int_field(p, "y", path + ".y")});
  }
  a.label = int_field(j, "label", "label");
  a.operator_name = field<std::string>(j, "operator", "operator");
  a.created_at = field<std::string>(j, "created_at", "created_at");
  return a;
}

std::vector<fs::path> list_frame_files(const fs::path& frames_dir) {
  if (!fs::is_directory(frames_dir)) throw DecodeError(frames_dir.string() + ": no frames directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(frames_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  if (files.empty()) throw DecodeError(frames_dir.string() + ": no frame images");
  std::sort(files.begin(), files.end());
  const std::size_t digits = files.front().stem().string().size();
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string stem = files[i].stem().string();
    const bool numeric = !stem.empty() && std::all_of(stem.begin(), stem.end(), ::isdigit);
    if (!numeric || stem.size() != digits) {
      throw DecodeError(files[i].string() + ": frame names must be equal-width zero-padded numbers");
    }
    if (std::stoul(stem) != i + 1) {
      std::ostringstream expected;
      expected.width(static_cast<std::streamsize>(digits));
      expected.fill('0');
      expected << (i + 1);
      throw DecodeError((frames_dir / (expected.str() + ".png")).string() + ": missing frame");
    }
  }
  return files;
}

CaseRecord load_case(const fs::path& case_dir) {
  const fs::path ann_path = case_dir / "annotation.json";
  std::ifstream in(ann_path);
  if (!in) throw DecodeError(ann_path.string() + ": cannot open");
  std::stringstream buf;
  buf << in.rdbuf();

  CaseRecord rec;
  rec.annotation = annotation_from_json(buf.str());
  for (const auto& file : list_frame_files(case_dir / "frames")) {
    rec.clip.frames.push_back(io::read_png_gray(file));
  }
  rec.clip.fps = rec.annotation.fps;
  rec.case_id = rec.annotation.case_id;
  validate_clip(rec.clip);
  validate_annotation(rec.annotation, rec.clip.width(), rec.clip.height());
  return rec;
}

void save_case(const fs::path& case_dir, const CaseRecord& record) {
  if (record.annotation.case_id != record.case_id) {
    throw ValidationError("case_id", "annotation case id differs from record");
  }
  fs::create_directories(case_dir / "frames");
  char name[32];
  for (std::size_t t = 0; t < record.clip.frames.size(); ++t) {
    std::snprintf(name, sizeof name, "%05zu.png", t + 1);
    io::write_png_gray(case_dir / "frames" / name, record.clip.frames[t]);
  }
  std::ofstream out(case_dir / "annotation.json");
  out << annotation_to_json(record.annotation) << "\n";
  if (!out) throw Error("cannot write " + (case_dir / "annotation.json").string());
}

DatasetManifest build_manifest(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError(root.string() + ": not a directory");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().front() != '.') {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());

  DatasetManifest manifest;
  std::vector<std::string> bad;
  std::set<std::string> seen;
  for (const auto& dir : dirs) {
    try {
      const CaseRecord rec = load_case(dir);
      if (!seen.insert(rec.case_id).second) throw ValidationError("case_id", "duplicate " + rec.case_id);
      manifest.entries.push_back({rec.case_id, fs::relative(dir, root), rec.annotation.label});
    } catch (const Error& e) {
      bad.push_back(dir.filename().string() + " (" + e.what() + ")");
    }
  }
  if (!bad.empty()) {
    std::string msg = "unreadable cases:";
    for (const auto& b : bad) msg += " " + b;
    throw InputError(msg);
  }
  if (manifest.entries.empty()) throw EmptyDatasetError(root.string() + ": no loadable cases");
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const auto& a, const auto& b) { return a.case_id < b.case_id; });
  return manifest;
}

void write_manifest_csv(const fs::path& file, const DatasetManifest& manifest) {
  std::ofstream out(file);
  out << "case_id,path,label\n";
  for (const auto& e : manifest.entries) {
    out << e.case_id << "," << e.path.generic_string() << "," << e.label << "\n";
  }
  if (!out) throw Error("cannot write " + file.string());
}

DatasetManifest read_manifest_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError(file.string() + ": cannot open manifest");
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "case_id,path,label") throw InputError(file.string() + ": bad manifest header");
  DatasetManifest manifest;
  std::set<std::string> seen;
  const fs::path base = file.parent_path();
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, path, label;
    if (!std::getline(ss, id, ',') || !std::getline(ss, path, ',') || !std::getline(ss, label)) {
      throw InputError(file.string() + ": malformed row " + std::to_string(row));
    }
    if (label != "0" && label != "1") throw InputError(file.string() + ": bad label on row " + std::to_string(row));
    if (!seen.insert(id).second) throw InputError(file.string() + ": duplicate case " + id);
    fs::path p(path);
    if (p.is_relative()) p = base / p;
    manifest.entries.push_back({id, p, label == "1" ? 1 : 0});
  }
  if (manifest.entries.empty()) throw EmptyDatasetError(file.string() + ": manifest has no rows");
  return manifest;
}

SplitPlan stratified_kfold(const DatasetManifest& manifest, int k, double val_fraction,
                           std::uint64_t seed) {
  if (k < 2) throw SplitError("k must be at least 2");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw SplitError("val fraction must be in [0,1)");

  std::array<std::vector<std::string>, 2> by_label;
  std::vector<const ManifestEntry*> sorted;
  for (const auto& e : manifest.entries) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](auto a, auto b) { return a->case_id < b->case_id; });
  std::map<std::string, int> label_of;
  for (const auto* e : sorted) {
    by_label[e->label].push_back(e->case_id);
    label_of[e->case_id] = e->label;
  }
  for (int c = 0; c < 2; ++c) {
    if (static_cast<int>(by_label[c].size()) < k) {
      throw SplitError("label " + std::to_string(c) + " has " + std::to_string(by_label[c].size()) +
                       " cases, fewer than k=" + std::to_string(k));
    }
  }

  Rng rng(seed);
  std::vector<std::vector<std::string>> test(k);
  std::size_t pos = 0;
  for (int c = 0; c < 2; ++c) {
    auto ids = by_label[c];
    rng.shuffle(std::span<std::string>(ids));
    for (const auto& id : ids) test[pos++ % k].push_back(id);
  }

  SplitPlan plan;
  plan.seed = seed;
  for (int f = 0; f < k; ++f) {
    std::set<std::string> in_test(test[f].begin(), test[f].end());
    std::array<std::vector<std::string>, 2> rest;
    for (int c = 0; c < 2; ++c) {
      for (const auto& id : by_label[c]) {
        if (!in_test.count(id)) rest[c].push_back(id);
      }
    }
    const std::size_t n_rest = rest[0].size() + rest[1].size();
    auto total_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n_rest)));
    if (val_fraction > 0.0 && total_val == 0 && n_rest >= 2) total_val = 1;
    // largest-remainder allocation of the validation quota across labels
    std::array<std::size_t, 2> quota{};
    std::array<double, 2> frac{};
    std::size_t assigned = 0;
    for (int c = 0; c < 2; ++c) {
      const double exact = val_fraction * static_cast<double>(rest[c].size());
      quota[c] = static_cast<std::size_t>(std::floor(exact));
      frac[c] = exact - std::floor(exact);
      assigned += quota[c];
    }
    while (assigned < total_val) {
      const int c = frac[1] > frac[0] ? 1 : 0;
      ++quota[c];
      frac[c] = -1.0;
      ++assigned;
    }

    Fold fold;
    Rng fold_rng = rng.fork(static_cast<std::uint64_t>(f));
    for (int c = 0; c < 2; ++c) {
      auto ids = rest[c];
      fold_rng.shuffle(std::span<std::string>(ids));
      for (std::size_t i = 0; i < ids.size(); ++i) (i < quota[c] ? fold.val : fold.train).push_back(ids[i]);
    }
    fold.test = test[f];
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.val.begin(), fold.val.end());
    std::sort(fold.test.begin(), fold.test.end());
    plan.folds.push_back(std::move(fold));
  }
  check_split(plan, manifest);
  return plan;
}

void check_split(const SplitPlan& plan, const DatasetManifest& manifest) {
  std::set<std::string> all;
  for (const auto& e : manifest.entries) all.insert(e.case_id);
  std::set<std::string> tested;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto& fold = plan.folds[f];
    std::set<std::string> seen;
    for (const auto* part : {&fold.train, &fold.val, &fold.test}) {
      for (const auto& id : *part) {
        if (!all.count(id)) throw SplitError("fold " + std::to_string(f) + ": unknown case " + id);
        if (!seen.insert(id).second) throw SplitError("fold " + std::to_string(f) + ": case " + id + " in two sets");
      }
    }
    if (seen.size() != all.size()) throw SplitError("fold " + std::to_string(f) + ": sets do not cover the dataset");
    for (const auto& id : fold.test) {
      if (!tested.insert(id).second) throw SplitError("case " + id + " appears in two test folds");
    }
  }
  if (tested.size() != all.size()) throw SplitError("test folds do not partition the dataset");
}

}  // namespace jelly
