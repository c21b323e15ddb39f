#include <doctest.h>

#include <random>

#include "edidub/stitching.hpp"
#include "test_util.hpp"

using namespace edidub;

namespace {

void check_plan_bounds(const std::vector<FrameRange>& ranges, int n) {
  std::vector<int> hit(n, 0);
  for (const auto& [b, e] : ranges) {
    CHECK(b >= 0);
    CHECK(e <= n);
    CHECK(b < e);
    for (int f = b; f < e; ++f) ++hit[f];
  }
  for (int f = 0; f < n; ++f) CHECK(hit[f] >= 1);
}

}  // namespace

TEST_CASE("window planning") {
  CHECK(plan_windows(24).windows == std::vector<FrameRange>{{0, 24}});
  CHECK(plan_windows(36).windows == std::vector<FrameRange>{{0, 24}, {12, 36}});
  CHECK(plan_windows(30).windows == std::vector<FrameRange>{{0, 24}, {6, 30}});
  CHECK(plan_windows(5).windows == std::vector<FrameRange>{{0, 5}});
  const auto cov = plan_windows(36).coverage();
  for (int f = 0; f < 36; ++f) CHECK(cov[f] == (f >= 12 && f < 24 ? 2 : 1));
  for (int n = 1; n < 100; ++n) check_plan_bounds(plan_windows(n).windows, n);
  for (int n = 1; n < 60; ++n) check_plan_bounds(plan_windows(n, 8, 4).windows, n);
  CHECK_THROWS_AS(plan_windows(30, 8, 9), ArgumentError);
  CHECK_THROWS_AS(plan_windows(0), ArgumentError);
}

TEST_CASE("section planning") {
  CHECK(plan_sections(120).sections == std::vector<FrameRange>{{0, 120}});
  CHECK(plan_sections(50).sections == std::vector<FrameRange>{{0, 50}});
  CHECK(plan_sections(240).sections == std::vector<FrameRange>{{0, 120}, {108, 228}, {120, 240}});
  CHECK(plan_sections(228).sections == std::vector<FrameRange>{{0, 120}, {108, 228}});
  for (int n = 1; n < 500; n += 7) {
    const auto p = plan_sections(n);
    check_plan_bounds(p.sections, n);
    for (size_t s = 1; s < p.sections.size(); ++s) CHECK(p.sections[s].first <= p.sections[s - 1].second - 12);
  }
  CHECK_THROWS_AS(plan_sections(100, 12, 12), ArgumentError);
}

TEST_CASE("overlap averaging") {
  std::mt19937_64 rng(1);
  SUBCASE("single window") {
    const auto plan = plan_windows(7, 24, 12);
    const auto p = test::random_tensor<double>({7, 2, 2, 3}, rng);
    CHECK(multidiffusion_step<double>({p}, plan) == p);
  }
  SUBCASE("constants 0 and 2 average to 1") {
    const auto plan = plan_windows(36);
    const auto out = multidiffusion_step<double>(
        {Tensor<double>::constant({24, 1, 1, 1}, 0.0), Tensor<double>::constant({24, 1, 1, 1}, 2.0)}, plan);
    for (int f = 0; f < 36; ++f) CHECK(out(f, 0, 0, 0) == (f < 12 ? 0.0 : f < 24 ? 1.0 : 2.0));
  }
  SUBCASE("coverage-count oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 20 + trial;
      const auto plan = plan_windows(n, 8, 5);
      std::vector<Tensor<double>> preds;
      for (const auto& [b, e] : plan.windows) preds.push_back(test::random_tensor<double>({e - b, 2, 3, 2}, rng));
      const auto out = multidiffusion_step(preds, plan);
      double conserved = 0.0, total = 0.0;
      for (int f = 0; f < n; ++f)
        for (int y = 0; y < 2; ++y)
          for (int x = 0; x < 3; ++x)
            for (int c = 0; c < 2; ++c) {
              double acc = 0.0;
              int cnt = 0;
              for (size_t w = 0; w < plan.windows.size(); ++w) {
                const auto& [b, e] = plan.windows[w];
                if (f < b || f >= e) continue;
                acc += preds[w](f - b, y, x, c);
                ++cnt;
              }
              CHECK(std::abs(out(f, y, x, c) - acc / cnt) <= 1e-12);
              conserved += out(f, y, x, c) * cnt;
            }
      for (const auto& p : preds) total += p.values().sum();
      CHECK(std::abs(conserved - total) < 1e-9);
    }
  }
  SUBCASE("shape errors") {
    const auto plan = plan_windows(36);
    CHECK_THROWS_AS(multidiffusion_step<double>({Tensor<double>(Shape4{24, 1, 1, 1})}, plan), ArgumentError);
    CHECK_THROWS_AS(multidiffusion_step<double>({Tensor<double>(Shape4{24, 1, 1, 1}), Tensor<double>(Shape4{23, 1, 1, 1})}, plan),
                    ArgumentError);
  }
}

TEST_CASE("windowed predictor wrapper") {
  std::mt19937_64 rng(2);
  const auto x = test::random_tensor<float>({30, 4, 4, 3}, rng);
  const UnitSequence units{std::vector<int>(60, 1), 4};
  // window predictor whose output depends on the position inside the window
  WindowPredictor<float> inner = [](const Tensor<float>& w, int t, const UnitSequence& u, FrameRange) {
    Tensor<float> out(w.shape());
    for (int f = 0; f < w.frames(); ++f)
      for (int i = 0; i < w.frame_size(); ++i)
        out.frame_data(f)[i] = w.frame_data(f)[i] * float(t) + float(f) + float(u.size());
    return out;
  };
  SUBCASE("single window is the plain predictor") {
    const auto plan = plan_windows(30, 30, 15);
    const auto wrapped = multidiffusion_predictor(inner, plan);
    CHECK(wrapped(x, 3, units) == inner(x, 3, units, {0, 30}));
  }
  SUBCASE("overlapping windows average") {
    const auto plan = plan_windows(30, 24, 12);
    const auto wrapped = multidiffusion_predictor(inner, plan);
    const auto out = wrapped(x, 2, units);
    // windows [0,24) and [6,30): frame 3 is only in the first, frames 10 and 20 in both
    CHECK(out(3, 1, 1, 0) == doctest::Approx(x(3, 1, 1, 0) * 2 + 3 + 48));
    CHECK(out(10, 1, 1, 0) == doctest::Approx(x(10, 1, 1, 0) * 2 + (10 + 4) / 2.0 + 48));
    CHECK(out(20, 1, 1, 0) == doctest::Approx(x(20, 1, 1, 0) * 2 + (20 + 14) / 2.0 + 48));
  }
}

TEST_CASE("sequential sectioning") {
  std::mt19937_64 rng(3);
  const auto clip = test::uniform_tensor<float>({40, 3, 3, 3}, rng);
  const auto mask = RegionMask::ones(40, 3, 3);
  SUBCASE("single section") {
    const auto plan = plan_sections(40);
    SectionDubber negate = [](const Clip& s, const RegionMask&, FrameRange) {
      Clip o = s;
      o.values() = -o.values();
      return o;
    };
    auto expected = clip;
    expected.values() = -expected.values();
    CHECK(dub_section_sequential(clip, mask, plan, negate) == expected);
  }
  SUBCASE("identity dubbing reproduces the input") {
    const auto plan = plan_sections(40, 16, 4);
    SectionDubber id = [](const Clip& s, const RegionMask&, FrameRange) { return s; };
    CHECK(dub_section_sequential(clip, mask, plan, id) == clip);
  }
  SUBCASE("continuation frames are unmasked and carried over") {
    const auto plan = plan_sections(40, 16, 4);
    REQUIRE(plan.sections.size() == 3);
    std::vector<FrameRange> seen;
    SectionDubber masked_add = [&](const Clip& s, const RegionMask& m, FrameRange r) {
      seen.push_back(r);
      Clip o = s;
      for (int f = 0; f < s.frames(); ++f)
        for (int y = 0; y < 3; ++y)
          for (int x = 0; x < 3; ++x)
            if (m(f, y, x))
              for (int c = 0; c < 3; ++c) o(f, y, x, c) += 1.0f;
      return o;
    };
    const auto out = dub_section_sequential(clip, mask, plan, masked_add);
    // every frame is edited exactly once
    for (long i = 0; i < out.size(); ++i) CHECK(out.values()[i] == clip.values()[i] + 1.0f);
    CHECK(seen == plan.sections);
  }
}
