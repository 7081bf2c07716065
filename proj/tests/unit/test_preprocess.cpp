#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "jelly/preprocess.hpp"
#include "oracles.hpp"

using namespace jelly;

namespace {

Image random_image(int w, int h, std::mt19937_64& gen) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(w, h);
  for (auto& v : img.values()) v = u(gen);
  return img;
}

Image grid(int w, int h, std::initializer_list<float> values) { return Image(w, h, std::vector<float>(values)); }

}  // namespace

TEST_CASE("ncc worked examples") {
  CHECK(ncc(grid(2, 2, {1, 0, 0, 1}), grid(2, 2, {1, 0, 0, 1}), 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ncc(grid(2, 2, {1, 0, 0, 1}), grid(2, 2, {0, 1, 1, 0}), 0, 0) == 0.0);
  CHECK(ncc(grid(2, 2, {1, 1, 0, 0}), grid(2, 2, {1, 0, 0, 0}), 0, 0) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(ncc(grid(2, 2, {1, 1, 0, 0}), grid(2, 2, {0, 0, 0, 0}), 0, 0) == 0.0);
  CHECK_THROWS_AS(ncc(grid(2, 2, {1, 1, 0, 0}), grid(2, 2, {1, 0, 0, 0}), 1, 0), RangeError);
}

TEST_CASE("template matching") {
  std::mt19937_64 gen(3);
  SUBCASE("exact copy is found") {
    Image frame = random_image(30, 25, gen);
    for (auto& v : frame.values()) v *= 0.5f;
    const Image templ = random_image(6, 5, gen);
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 6; ++b) frame.at(7 + a, 3 + b) = templ.at(a, b);
    CHECK(match_template(templ, frame) == Offset{7, 3});
    CHECK(match_template(templ, frame, {.search_radius = 2, .center = {6, 4}}) == Offset{7, 3});
    CHECK(match_template(templ, frame, {.exec = kernels::Exec::serial}) == Offset{7, 3});
  }
  SUBCASE("frame equal to the template") {
    const Image templ = random_image(6, 5, gen);
    CHECK(match_template(templ, templ) == Offset{0, 0});
  }
  SUBCASE("ties go to the smallest row then column") {
    const Image templ = grid(2, 2, {1, 0.5f, 0.25f, 1});
    Image frame(8, 8, 0.0f);
    for (const auto [r, c] : {std::pair{5, 5}, std::pair{0, 0}, std::pair{0, 5}})
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) frame.at(r + a, c + b) = templ.at(a, b);
    CHECK(match_template(templ, frame) == Offset{0, 0});
    frame.at(0, 0) = 0.0f;
    CHECK(match_template(templ, frame) == Offset{0, 5});
  }
  SUBCASE("template larger than the frame") {
    CHECK_THROWS(match_template(random_image(9, 9, gen), random_image(5, 5, gen)));
  }
}

TEST_CASE("bilinear resize") {
  std::mt19937_64 gen(4);
  const Image img = random_image(13, 7, gen);
  CHECK(resize_bilinear(img, 13, 7) == img);
  const Image up = resize_bilinear(grid(2, 1, {0, 1}), 4, 1);
  CHECK(up.at(0, 0) == doctest::Approx(0.0));
  CHECK(up.at(0, 1) == doctest::Approx(0.25));
  CHECK(up.at(0, 2) == doctest::Approx(0.75));
  CHECK(up.at(0, 3) == doctest::Approx(1.0));
  const Image flat = resize_bilinear(Image(10, 6, 0.4f), 23, 17);
  for (float v : flat.values()) CHECK(v == doctest::Approx(0.4f));
}

TEST_CASE("line rasterization") {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> coord(-20, 20);
  for (int trial = 0; trial < 200; ++trial) {
    const Point a{coord(gen), coord(gen)}, b{coord(gen), coord(gen)};
    const auto pts = rasterize_line(a, b);
    const int dx = b.x - a.x, dy = b.y - a.y;
    REQUIRE(pts.size() == static_cast<std::size_t>(std::max(std::abs(dx), std::abs(dy)) + 1));
    CHECK(pts.front() == a);
    CHECK(pts.back() == b);
    for (std::size_t k = 1; k < pts.size(); ++k) {
      CHECK(std::abs(pts[k].x - pts[k - 1].x) <= 1);
      CHECK(std::abs(pts[k].y - pts[k - 1].y) <= 1);
    }
    // every pixel lies within half a pixel of the ideal line along the minor axis
    for (const auto& p : pts) {
      if (std::abs(dx) >= std::abs(dy)) {
        const double y = dx == 0 ? a.y : a.y + double(dy) * (p.x - a.x) / dx;
        CHECK(std::abs(p.y - y) <= 0.5 + 1e-12);
      } else {
        const double x = a.x + double(dx) * (p.y - a.y) / dy;
        CHECK(std::abs(p.x - x) <= 0.5 + 1e-12);
      }
    }
  }
}

TEST_CASE("surface rasterization") {
  const Roi roi{10, 20, 100, 60};
  SUBCASE("horizontal trace at mid height") {
    const auto s = rasterize_surface({{{10, 50}, {109, 50}}}, roi, 224, 134);
    const int row = static_cast<int>((30 + 0.5) * 134 / 60);
    for (int r = 0; r < 134; ++r)
      for (int c = 0; c < 224; ++c) CHECK(s.at(r, c) == (r == row && c >= 1 && c <= 222 ? 1 : 0));
  }
  SUBCASE("diagonal corners") {
    const auto s = rasterize_surface({{{10, 20}, {109, 79}}}, roi, 224, 134);
    // pixel centers map to floor((p + 0.5) * target / roi)
    CHECK(s.at(1, 1) == 1);
    CHECK(s.at(132, 222) == 1);
    std::set<int> values(s.values().begin(), s.values().end());
    CHECK(values == std::set<int>{0, 1});
  }
  SUBCASE("points outside the roi") {
    CHECK_THROWS_AS(rasterize_surface({{{0, 0}, {50, 50}}}, roi, 224, 134), InputError);
  }
}

TEST_CASE("stabilization recovers injected shifts") {
  std::mt19937_64 gen(6);
  const Image canvas = random_image(80, 70, gen);
  const Roi roi{20, 20, 25, 15};
  const std::vector<Offset> shifts{{0, 0}, {1, -2}, {3, 3}, {-4, 1}, {0, 5}, {-5, -5}};
  VideoClip clip;
  for (const auto& s : shifts) {
    // frame content moves by s: frame(r, c) = canvas(r - s.row, c - s.col)
    Image f(60, 50);
    for (int r = 0; r < 50; ++r)
      for (int c = 0; c < 60; ++c) f.at(r, c) = canvas.at(r - s.row + 10, c - s.col + 10);
    clip.frames.push_back(std::move(f));
  }
  for (const int radius : {-1, 10}) {
    const auto out = stabilize_clip(clip, roi, {.width = 25, .height = 15, .search_radius = radius});
    REQUIRE(out.length() == 6);
    for (std::size_t t = 0; t < shifts.size(); ++t) {
      INFO("radius " << radius << " frame " << t << " matched " << out.offsets[t].row << "," << out.offsets[t].col);
      CHECK(out.offsets[t] == Offset{roi.y + shifts[t].row, roi.x + shifts[t].col});
      // identity resize: each patch is exactly the frame-1 ROI
      CHECK(out.frames[t] == out.frames[0]);
    }
  }
}

TEST_CASE("static clip gives constant offsets") {
  std::mt19937_64 gen(7);
  VideoClip clip;
  const Image f = random_image(50, 40, gen);
  for (int t = 0; t < 5; ++t) clip.frames.push_back(f);
  const Roi roi{5, 6, 20, 12};
  const auto out = stabilize_clip(clip, roi, {.width = 33, .height = 20});
  for (int t = 0; t < 5; ++t) {
    CHECK(out.offsets[t] == Offset{6, 5});
    CHECK(out.frames[t] == out.frames[0]);
  }
  CHECK(out.frames[0].width() == 33);
  CHECK(out.frames[0].height() == 20);
}

TEST_CASE("input assembly") {
  PlaqueClip plaque;
  plaque.width = 224;
  plaque.height = 134;
  for (int t = 0; t < 45; ++t) plaque.frames.emplace_back(224, 134, 0.01f * t);
  SurfaceImage surface(224, 134, 0);
  surface.at(60, 100) = 1;
  const auto in = assemble_input(plaque, surface);
  CHECK(in.shape() == std::array<int, 4>{45, 224, 134, 2});
  CHECK(in.at(44, 0, 3, 3) == 0.01f * 44);
  for (std::size_t k = 0; k < in.plane_size(); ++k) CHECK(in.plane(0, 1)[k] == in.plane(44, 1)[k]);
  CHECK(in.at(20, 1, 60, 100) == 1.0f);
  CHECK(video_only(in).channels() == 1);
  CHECK_THROWS_AS(assemble_input(plaque, SurfaceImage(100, 60, 0)), InputError);
}

TEST_CASE("prepared case round trip") {
  fixture::TempDir tmp;
  const auto rec = fixture::small_case("c1", 1, 5);
  const auto prepared = prepare_case(rec, {.width = 20, .height = 12});
  save_prepared(tmp / "p", prepared);
  CHECK(is_prepared_dir(tmp / "p"));
  CHECK_FALSE(is_prepared_dir(tmp.path()));
  const auto back = load_prepared(tmp / "p");
  CHECK(back.case_id == "c1");
  CHECK(back.label == 1);
  CHECK(back.roi == prepared.roi);
  CHECK(back.surface == prepared.surface);
  CHECK(back.plaque.offsets == prepared.plaque.offsets);
  REQUIRE(back.plaque.length() == 5);
  for (int t = 0; t < 5; ++t)
    for (std::size_t k = 0; k < back.plaque.frames[t].size(); ++k)
      CHECK(std::abs(back.plaque.frames[t].values()[k] - prepared.plaque.frames[t].values()[k]) <= 0.5f / 255.0f + 1e-6f);
}
