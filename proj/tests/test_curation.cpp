#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "edidub/curation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace edidub;

using namespace edidub::oracle;

TEST_CASE("pose score") {
  CHECK(pose_score({{10, -15, 5}, {2, 3, -19}}) == 19.0);
  CHECK(pose_score({{0, 0, 0}, {0, 0, 0}}) == 0.0);
  CHECK_THROWS_AS(pose_score({}), ArgumentError);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 30.0);
  std::vector<PoseFrame> frames(1000);
  double want = 0.0;
  for (auto& f : frames) {
    f = {n(rng), n(rng), n(rng)};
    want = std::max({want, std::abs(f.pitch), std::abs(f.yaw), std::abs(f.roll)});
  }
  CHECK(pose_score(frames) == want);
}

TEST_CASE("low-angle selection") {
  const LowAngleOptions o;
  PoseVideo short_clip{"short", 5.0, {PoseFrame{}}};
  CHECK_FALSE(scan_low_angle(short_clip, o));
  PoseVideo exact{"exact", 6.0, {PoseFrame{20, 0, 0}, PoseFrame{0, -20, 0}}};
  REQUIRE(scan_low_angle(exact, o));
  CHECK(*scan_low_angle(exact, o) == 20.0);
  PoseVideo over{"over", 8.0, {PoseFrame{20.5, 0, 0}}};
  CHECK_FALSE(scan_low_angle(over, o));
  // A missing face on a sampled frame rejects; on a skipped frame it does not.
  PoseVideo missing{"missing", 8.0, std::vector<std::optional<PoseFrame>>(11, PoseFrame{1, 2, 3})};
  missing.frames[3] = std::nullopt;
  CHECK(scan_low_angle(missing, o));
  missing.frames[5] = std::nullopt;
  CHECK_FALSE(scan_low_angle(missing, o));
  // Angles above the limit on skipped frames are not seen.
  PoseVideo skipped{"skipped", 8.0, std::vector<std::optional<PoseFrame>>(6, PoseFrame{0, 0, 0})};
  skipped.frames[2] = PoseFrame{0, 90, 0};
  CHECK(*scan_low_angle(skipped, o) == 0.0);

  std::mt19937_64 rng(99);
  std::vector<PoseVideo> videos;
  for (int i = 0; i < 100; ++i) videos.push_back(random_pose_video(rng, i));
  videos.push_back(exact);
  int accepted = 0;
  for (const auto& v : videos) {
    const bool got = scan_low_angle(v, o).has_value();
    CHECK(got == low_angle(v, o));
    accepted += got;
  }
  CHECK(accepted > 10);
  CHECK(accepted < 95);

  const auto sel = select_low_angle(videos, o);
  CHECK(int(sel.size()) == accepted);
  for (size_t i = 1; i < sel.size(); ++i) CHECK(sel[i - 1].score <= sel[i].score);
  for (const auto& r : sel) {
    const auto& v = *std::find_if(videos.begin(), videos.end(), [&](const PoseVideo& x) { return x.id == r.id; });
    std::vector<PoseFrame> sampled;
    for (size_t i = 0; i < v.frames.size(); i += 5) sampled.push_back(*v.frames[i]);
    CHECK(r.score == pose_score(sampled));
  }
}

TEST_CASE("point in hull") {
  const Polygon square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  CHECK(point_in_hull({0.5, 0.5}, square));
  CHECK_FALSE(point_in_hull({2, 2}, square));
  CHECK(point_in_hull({1, 0.5}, square));
  CHECK(point_in_hull({0, 0}, square));
  const Polygon clockwise(square.rbegin(), square.rend());
  CHECK(point_in_hull({0.5, 0.5}, clockwise));
  CHECK(point_in_hull({0.5, 1.0}, clockwise));
  CHECK_FALSE(point_in_hull({0.5, 1.01}, clockwise));
  CHECK_FALSE(point_in_hull({0, 0}, Polygon{{0, 0}, {1, 1}, {2, 2}}));
  CHECK_FALSE(point_in_hull({0, 0}, Polygon{{0, 0}, {1, 1}}));

  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> c(-10, 10);
  int inside = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<Point2> cloud;
    for (int k = 0; k < 6; ++k) cloud.push_back({double(c(rng)), double(c(rng))});
    const Polygon hull = convex_hull(cloud);
    const Point2 p{double(c(rng)), double(c(rng))};
    const bool want = hull.size() >= 3 && in_polygon(p, hull);
    CHECK(point_in_hull(p, hull) == want);
    inside += want;
  }
  CHECK(inside > 50);
}

TEST_CASE("convex hull") {
  const auto h = convex_hull({{0, 0}, {2, 0}, {1, 1}, {2, 2}, {0, 2}, {1, 0}, {0, 0}});
  CHECK(h == Polygon{{0, 0}, {2, 0}, {2, 2}, {0, 2}});
  CHECK(convex_hull({{1, 1}, {1, 1}}).size() == 1);
}

TEST_CASE("occlusion counting") {
  const auto face = grid_points(4, 4);
  CHECK(count_occluded(face, {}) == 0);
  const Polygon big{{-1, -1}, {5, -1}, {5, 5}, {-1, 5}};
  CHECK(count_occluded(face, {big}) == 16);
  // Two overlapping hulls: points in both count once.
  const Polygon left{{0, 0}, {1, 0}, {1, 3}, {0, 3}}, mid{{1, 0}, {2, 0}, {2, 3}, {1, 3}};
  CHECK(count_occluded(face, {left}) == 8);
  CHECK(count_occluded(face, {left, mid}) == 12);

  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> c(-1, 5);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<Polygon> hulls;
    int prev = 0;
    for (int k = 0; k < 3; ++k) {
      std::vector<Point2> cloud;
      for (int j = 0; j < 5; ++j) cloud.push_back({double(c(rng)), double(c(rng))});
      hulls.push_back(convex_hull(cloud));
      const int now = count_occluded(face, hulls);
      CHECK(now >= prev);
      CHECK(now == count_inside(face, hulls));
      prev = now;
    }
  }
}

TEST_CASE("occlusion selection") {
  const OcclusionOptions o;
  // 31 grid points in a 1 x 31 strip, covered by a hull through its ends.
  auto strip = [](int n) {
    std::vector<Point2> pts;
    for (int i = 0; i < n; ++i) pts.push_back({double(i), 0.0});
    return pts;
  };
  const std::vector<Point2> hand{{-0.5, -1}, {40, -1}, {40, 1}, {-0.5, 1}};
  OcclusionVideo v31{"v31", {OcclusionFrame{strip(31), std::vector<std::vector<Point2>>{hand}}}};
  OcclusionVideo v30{"v30", {OcclusionFrame{strip(30), std::vector<std::vector<Point2>>{hand}}}};
  const auto r31 = scan_occlusion(v31, o), r30 = scan_occlusion(v30, o);
  CHECK(r31.accepted);
  CHECK(r31.total_occlusion == 31);
  CHECK_FALSE(r30.accepted);
  CHECK(r30.total_occlusion == 30);

  OcclusionVideo nohands{"none", std::vector<OcclusionFrame>(50, OcclusionFrame{strip(40), std::nullopt})};
  const auto rn = scan_occlusion(nohands, o);
  CHECK(rn.total_occlusion == 0);
  CHECK(rn.processed_frames == 5);
  CHECK_FALSE(rn.accepted);

  // 40 per sampled frame: the scan stops after the third sampled frame.
  OcclusionVideo heavy{"heavy", std::vector<OcclusionFrame>(100, OcclusionFrame{strip(40), std::vector<std::vector<Point2>>{hand}})};
  const auto rh = scan_occlusion(heavy, o);
  CHECK(rh.total_occlusion == 120);
  CHECK(rh.max_occlusion == 40);
  CHECK(rh.processed_frames == 3);

  std::mt19937_64 rng(23);
  std::vector<OcclusionVideo> videos{v30, v31, nohands};
  for (int i = 0; i < 100; ++i) videos.push_back(random_occlusion_video(rng, i));
  int accepted = 0;
  for (const auto& v : videos) {
    const auto r = scan_occlusion(v, o);
    const int full = total_occlusion(v, o);
    CHECK(r.accepted == (full > 30));
    CHECK(r.max_occlusion <= r.total_occlusion);
    if (full < o.early_stop_total) CHECK(r.total_occlusion == full);
    accepted += r.accepted;
  }
  CHECK(accepted > 10);
  CHECK(accepted < 95);
  const auto sel = select_occluded(videos, o);
  CHECK(int(sel.size()) == accepted);
  CHECK(sel.front().id == "v31");
}

TEST_CASE("curation stream files") {
  PoseVideo p{"p", 7.5, {PoseFrame{1.5, -2, 3}, std::nullopt, PoseFrame{0.1, 0.2, 0.3}}};
  std::stringstream ps;
  write_pose_stream(ps, p);
  const auto p2 = read_pose_stream(ps, "p");
  CHECK(p2.duration_seconds == 7.5);
  REQUIRE(p2.frames.size() == 3);
  CHECK_FALSE(p2.frames[1]);
  CHECK(p2.frames[2]->roll == 0.3);
  std::stringstream bad_pose("7.5\n1 2 3\n");
  CHECK_THROWS_AS(read_pose_stream(bad_pose, "x"), DataError);

  OcclusionVideo v{"v", {OcclusionFrame{std::vector<Point2>{{1, 2}, {3, 4}}, std::vector<std::vector<Point2>>{{{0, 0}, {1, 0}, {0, 1}}}},
                         OcclusionFrame{std::nullopt, std::nullopt}}};
  std::stringstream os;
  write_occlusion_stream(os, v);
  const auto v2 = read_occlusion_stream(os, "v");
  REQUIRE(v2.frames.size() == 2);
  CHECK(*v2.frames[0].face == *v.frames[0].face);
  CHECK(*v2.frames[0].hands == *v.frames[0].hands);
  CHECK_FALSE(v2.frames[1].face);
  CHECK_FALSE(v2.frames[1].hands);
  std::stringstream bad_occ("frame\nface 1 2 3\n");
  CHECK_THROWS_AS(read_occlusion_stream(bad_occ, "x"), DataError);
}

TEST_CASE("control-video corruption") {
  std::mt19937_64 rng(4);
  const Clip clip = test::uniform_tensor<float>({60, 12, 10, 3}, rng, -0.8, 0.8);
  const PixelBox box{2, 5, 4, 3};
  const Clip out = corrupt_clip(clip, box, 77);

  CHECK(corruption_source_frame(15, 60) == 50);
  CHECK(corruption_source_frame(39, 60) == 50);
  CHECK(corruption_source_frame(40, 60) == 15);
  CHECK(corruption_source_frame(54, 60) == 15);
  CHECK_THROWS_AS(corruption_source_frame(55, 60), ArgumentError);
  CHECK_THROWS_AS(corruption_source_frame(14, 60), ArgumentError);

  auto frame_equal = [&](int t) {
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 10; ++x)
        for (int c = 0; c < 3; ++c)
          if (out(t, y, x, c) != clip(t, y, x, c)) return false;
    return true;
  };
  for (int t = 0; t < 15; ++t) CHECK(frame_equal(t));
  for (int t = 55; t < 60; ++t) CHECK(frame_equal(t));

  double sum = 0.0, sum2 = 0.0;
  long n = 0;
  for (int t = 15; t < 55; ++t) {
    const int src = corruption_source_frame(t, 60);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 10; ++x)
        for (int c = 0; c < 3; ++c) {
          const bool in_box = x >= 2 && x < 6 && y >= 5 && y < 8;
          if (!in_box) {
            CHECK(out(t, y, x, c) == clip(t, y, x, c));
            continue;
          }
          // Rotated by 180 degrees inside the box.
          const double base = clip(src, 5 + 7 - y, 2 + 5 - x, c);
          const double r = out(t, y, x, c) - base;
          sum += r, sum2 += r * r, ++n;
        }
  }
  const double sd = std::sqrt(sum2 / n - (sum / n) * (sum / n));
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sd == doctest::Approx(20.0 / 127.5).epsilon(0.08));

  CHECK(corrupt_clip(clip, box, 77) == out);
  CHECK_FALSE(corrupt_clip(clip, box, 78) == out);
  CHECK_THROWS_AS(corrupt_clip(clip.slice_frames(0, 20), box, 1), ArgumentError);
  CHECK_NOTHROW(corrupt_clip(clip.slice_frames(0, 21), box, 1));
  CHECK_THROWS_AS(corrupt_clip(clip, PixelBox{8, 0, 4, 2}, 1), ArgumentError);
}
