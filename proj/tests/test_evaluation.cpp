#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "edidub/evaluation.hpp"
#include "oracles.hpp"

using namespace edidub;

using oracle::random_unit_rows;

TEST_CASE("softmax weighted mean") {
  CHECK(softmax_weighted_mean({0.4, 0.4, 0.4}) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(softmax_weighted_mean({-3.25}) == -3.25);
  CHECK(softmax_weighted_mean({0.0, 1.0}) == doctest::Approx(std::exp(1.0) / (1.0 + std::exp(1.0))).epsilon(1e-15));
  CHECK(std::abs(softmax_weighted_mean({0.0, 1.0}) - 0.73106) < 1e-5);
  CHECK_THROWS_AS(softmax_weighted_mean({}), ArgumentError);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> s(1 + rep % 17);
    for (auto& x : s) x = n(rng);
    const double m = softmax_weighted_mean(s);
    CHECK(m >= *std::min_element(s.begin(), s.end()) - 1e-12);
    CHECK(m <= *std::max_element(s.begin(), s.end()) + 1e-12);
    std::vector<double> shifted = s;
    for (auto& x : shifted) x += 7.5;
    CHECK(std::abs(softmax_weighted_mean(shifted) - (m + 7.5)) < 1e-12);
  }
  // Large scores stay finite thanks to max subtraction.
  CHECK(std::isfinite(softmax_weighted_mean({1000.0, 999.0})));
}

TEST_CASE("identity metrics closed forms") {
  EmbeddingSequence a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 1, 0, 1, 0;
  CHECK(id_p(a, a) == 0.0);
  CHECK(id_p(a, b) == doctest::Approx(std::exp(1.0) / (1.0 + std::exp(1.0))).epsilon(1e-14));
  CHECK_THROWS_AS(id_p(a, EmbeddingSequence(3, 2)), ArgumentError);

  EmbeddingSequence constant(5, 3);
  for (int i = 0; i < 5; ++i) constant.row(i) << 0.6, 0.8, 0.0;
  CHECK(id_tc(constant) == doctest::Approx(0.0).epsilon(1e-15));
  EmbeddingSequence alt(6, 2);
  for (int i = 0; i < 6; ++i) alt.row(i) << (i % 2 == 0), (i % 2 == 1);
  CHECK(id_tc(alt) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(id_tc(EmbeddingSequence(1, 2)), ArgumentError);

  EmbeddingSequence not_unit(2, 2);
  not_unit << 1, 0, 0, 2;
  CHECK_THROWS_AS(id_tc(not_unit), ArgumentError);
}

TEST_CASE("identity metrics equal loop oracles on random sets") {
  std::mt19937_64 rng(71);
  for (int rep = 0; rep < 100; ++rep) {
    const int T = 2 + rep % 30, e = 1 + rep % 9;
    const auto o = random_unit_rows(T, e, rng), g = random_unit_rows(T, e, rng);
    CHECK(std::abs(id_p(o, g) - oracle::id_p(o, g)) <= 1e-12);
    CHECK(std::abs(id_tc(g) - oracle::id_tc(g)) <= 1e-12);
    CHECK(id_p(o, o) == 0.0);
    CHECK(id_p(o, g) >= 0.0);
  }
}

TEST_CASE("metrics invariant under a common rotation") {
  std::mt19937_64 rng(5);
  const auto o = random_unit_rows(33, 4, rng), g = random_unit_rows(33, 4, rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(4, 4)).householderQ();
  const EmbeddingSequence ro = o * q, rg = g * q;
  CHECK(std::abs(id_p(o, g) - id_p(ro, rg)) < 1e-12);
  CHECK(std::abs(id_tc(g) - id_tc(rg)) < 1e-12);
  const auto l = lse_metrics(o, g), rl = lse_metrics(ro, rg);
  CHECK(std::abs(l.lse_d - rl.lse_d) < 1e-12);
  CHECK(std::abs(l.lse_c - rl.lse_c) < 1e-12);
}

TEST_CASE("lse metrics") {
  std::mt19937_64 rng(13);
  const auto a = random_unit_rows(31, 6, rng);
  CHECK(lse_metrics(a, a).lse_d == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(lse_metrics(random_unit_rows(30, 6, rng), random_unit_rows(30, 6, rng)), ArgumentError);
  CHECK_NOTHROW(lse_metrics(random_unit_rows(30, 6, rng), random_unit_rows(30, 6, rng), 14));

  // Offset-independent embeddings: every offset has the same distance.
  EmbeddingSequence ca(40, 2), cv(40, 2);
  for (int i = 0; i < 40; ++i) ca.row(i) << 1, 0, cv.row(i) << 0.6, 0.8;
  const auto flat = lse_metrics(ca, cv);
  CHECK(flat.lse_c == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(flat.lse_d == doctest::Approx(0.4).epsilon(1e-14));

  // Video lagging audio by 3 frames: best offset is +3.
  const auto audio = random_unit_rows(60, 8, rng);
  EmbeddingSequence video(60, 8);
  for (int i = 0; i < 60; ++i) video.row(i) = audio.row((i - 3 + 60) % 60);
  int best = 0;
  double best_d = 1e9;
  for (int o = -15; o <= 15; ++o)
    if (const double d = offset_distance(audio, video, o); d < best_d) best_d = d, best = o;
  CHECK(best == 3);
  CHECK(best_d == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(lse_metrics(audio, video).lse_c > 0.5);

  for (int rep = 0; rep < 100; ++rep) {
    const int W = rep % 6, T = 2 * W + 1 + rep % 20, e = 2 + rep % 5;
    const auto x = random_unit_rows(T, e, rng), y = random_unit_rows(T, e, rng);
    const auto got = lse_metrics(x, y, W), want = oracle::lse(x, y, W);
    CHECK(std::abs(got.lse_d - want.lse_d) <= 1e-12);
    CHECK(std::abs(got.lse_c - want.lse_c) <= 1e-12);
  }
}

TEST_CASE("report aggregation and files") {
  std::vector<VideoMetrics> rows{{"a", 1.0, 2.0, 0.1, 0.01}, {"b", 3.0, 4.0, 0.3, 0.03}, {"c", 5.0, 0.0, 0.2, 0.02}};
  const auto r = aggregate_report(rows);
  CHECK(r.se_defined);
  CHECK(r.lse_d.mean == doctest::Approx(3.0));
  CHECK(r.lse_d.se == doctest::Approx(2.0 / std::sqrt(3.0)));
  CHECK(r.id_p.mean == doctest::Approx(0.2));

  std::stringstream table;
  write_report_table(table, r);
  const auto back = read_report_table(table);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == rows[i].id);
    CHECK(back[i].lse_d == rows[i].lse_d);
    CHECK(back[i].id_tc == rows[i].id_tc);
  }
  // Totals recomputed from the table equal the in-memory aggregate.
  const auto again = aggregate_report(back);
  CHECK(again.lse_c.mean == r.lse_c.mean);
  CHECK(again.lse_c.se == r.lse_c.se);

  std::stringstream summary;
  write_report_summary(summary, r);
  CHECK(summary.str().find("videos 3\nse_defined 1\nlse_d_mean 3\n") == 0);

  const auto single = aggregate_report({rows[0]});
  CHECK_FALSE(single.se_defined);
  CHECK(single.id_p.se == 0.0);
  CHECK_THROWS_AS(aggregate_report({}), ArgumentError);

  std::stringstream bad("video\tlse_d\tlse_c\tid_p\tid_tc\nx\t1\t2\n");
  CHECK_THROWS_AS(read_report_table(bad), DataError);
}

TEST_CASE("wilcoxon signed-rank") {
  // Five positive differences: exact one-sided p = 1/32.
  const auto r = wilcoxon_signed_rank({2, 3, 4, 5, 6}, {1, 1, 1, 1, 1});
  CHECK(r.exact);
  CHECK(r.n == 5);
  CHECK(r.w_plus == 15.0);
  CHECK(r.p_greater == doctest::Approx(1.0 / 32.0));
  CHECK(r.p_two_sided == doctest::Approx(2.0 / 32.0));
  CHECK(r.p_less == doctest::Approx(1.0));

  // Hand example: differences 1, -2, 3, 4, -5 -> W+ = 1 + 3 + 4 = 8.
  const auto h = wilcoxon_signed_rank({1, 0, 3, 4, 0}, {0, 2, 0, 0, 5});
  CHECK(h.w_plus == 8.0);
  CHECK(h.w_minus == 7.0);
  // P(W+ >= 8) for n = 5: 16 of 32 subsets.
  CHECK(h.p_greater == doctest::Approx(16.0 / 32.0));

  const auto z = wilcoxon_signed_rank({1, 2}, {1, 2});
  CHECK(z.n == 0);
  CHECK(z.p_two_sided == 1.0);

  // Large sample with ties falls back to the normal approximation.
  std::vector<double> a, b;
  for (int i = 0; i < 60; ++i) a.push_back(i % 7 + 1.0), b.push_back(0.0);
  const auto big = wilcoxon_signed_rank(a, b);
  CHECK_FALSE(big.exact);
  CHECK(big.p_greater < 1e-6);
  CHECK_THROWS_AS(wilcoxon_signed_rank({1}, {}), ArgumentError);
}
