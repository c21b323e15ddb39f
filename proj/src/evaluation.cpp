#include "edidub/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace edidub {

void check_unit_rows(const EmbeddingSequence& e, const std::string& what) {
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    if (std::abs(e.row(i).norm() - 1.0) > 1e-6)
      throw ArgumentError(what + ": row " + std::to_string(i) + " is not unit-norm");
}

namespace {

// Identical rows are at distance exactly zero; rounding in the dot product
// of a unit row with itself would otherwise leave a residue of ~1e-16.
template <typename A, typename B>
double cosine_distance(const A& a, const B& b) {
  return a == b ? 0.0 : 1.0 - a.dot(b);
}

}  // namespace

double softmax_weighted_mean(const std::vector<double>& scores, double temperature) {
  require(!scores.empty(), "softmax_weighted_mean needs at least one score");
  require(temperature > 0.0, "softmax temperature must be positive");
  const double top = *std::max_element(scores.begin(), scores.end());
  double num = 0.0, den = 0.0;
  for (double s : scores) {
    const double w = std::exp((s - top) / temperature);
    num += w * s;
    den += w;
  }
  return num / den;
}

double id_p(const EmbeddingSequence& original, const EmbeddingSequence& generated, double temperature) {
  require(original.rows() == generated.rows() && original.cols() == generated.cols(),
          "id_p needs sequences of equal length and dimension");
  require(original.rows() > 0, "id_p needs at least one frame");
  check_unit_rows(original, "id_p original");
  check_unit_rows(generated, "id_p generated");
  std::vector<double> d(original.rows());
  for (Eigen::Index i = 0; i < original.rows(); ++i) d[i] = cosine_distance(original.row(i), generated.row(i));
  return softmax_weighted_mean(d, temperature);
}

double id_tc(const EmbeddingSequence& generated, double temperature) {
  require(generated.rows() >= 2, "id_tc needs at least two frames");
  check_unit_rows(generated, "id_tc");
  std::vector<double> d(generated.rows() - 1);
  for (Eigen::Index i = 0; i + 1 < generated.rows(); ++i) d[i] = cosine_distance(generated.row(i), generated.row(i + 1));
  return softmax_weighted_mean(d, temperature);
}

double offset_distance(const EmbeddingSequence& audio, const EmbeddingSequence& video, int offset) {
  const long T = audio.rows();
  require(video.rows() == T && audio.cols() == video.cols(), "sync embeddings must have equal shapes");
  const long lo = std::max(0L, -long(offset)), hi = std::min(T, T - offset);
  require(hi > lo, "offset leaves no overlapping frames");
  double sum = 0.0;
  for (long i = lo; i < hi; ++i) sum += cosine_distance(audio.row(i), video.row(i + offset));
  return sum / double(hi - lo);
}

LseScores lse_metrics(const EmbeddingSequence& audio, const EmbeddingSequence& video, int offset_window) {
  require(offset_window >= 0, "offset window must be nonnegative");
  require(audio.rows() == video.rows(), "audio and video embeddings differ in length");
  require(audio.rows() >= 2 * offset_window + 1, "sequence shorter than 2*offset_window+1 frames");
  check_unit_rows(audio, "lse audio");
  check_unit_rows(video, "lse video");
  std::vector<double> dist;
  for (int o = -offset_window; o <= offset_window; ++o) dist.push_back(offset_distance(audio, video, o));
  LseScores out;
  out.lse_d = dist[offset_window];
  std::vector<double> sorted = dist;
  std::nth_element(sorted.begin(), sorted.begin() + offset_window, sorted.end());
  out.lse_c = sorted[offset_window] - *std::min_element(dist.begin(), dist.end());
  return out;
}

MeanSe mean_standard_error(const std::vector<double>& v) {
  require(!v.empty(), "no values to aggregate");
  MeanSe r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / double(v.size() - 1)) / std::sqrt(double(v.size()));
  }
  return r;
}

MetricReport aggregate_report(std::vector<VideoMetrics> per_video) {
  require(!per_video.empty(), "report needs at least one video");
  MetricReport r;
  auto column = [&](double VideoMetrics::*field) {
    std::vector<double> v;
    for (const auto& m : per_video) v.push_back(m.*field);
    return mean_standard_error(v);
  };
  r.lse_d = column(&VideoMetrics::lse_d);
  r.lse_c = column(&VideoMetrics::lse_c);
  r.id_p = column(&VideoMetrics::id_p);
  r.id_tc = column(&VideoMetrics::id_tc);
  r.se_defined = per_video.size() > 1;
  r.per_video = std::move(per_video);
  return r;
}

VideoMetrics VideoEvaluator::operator()(const std::string& id, const Clip& original, const Clip& generated,
                                        const EmbeddingSequence& audio) const {
  if (original.shape() != generated.shape()) throw ArgumentError("video " + id + ": original and generated clips differ in shape");
  VideoMetrics m;
  m.id = id;
  const EmbeddingSequence gen_id = identity(generated);
  m.id_p = edidub::id_p(identity(original), gen_id, temperature);
  m.id_tc = edidub::id_tc(gen_id, temperature);
  const LseScores lse = lse_metrics(audio, mouth(generated), lse_window);
  m.lse_d = lse.lse_d;
  m.lse_c = lse.lse_c;
  return m;
}

void write_report_table(std::ostream& os, const MetricReport& report) {
  const auto old = os.precision(17);
  os << "video\tlse_d\tlse_c\tid_p\tid_tc\n";
  for (const auto& m : report.per_video)
    os << m.id << '\t' << m.lse_d << '\t' << m.lse_c << '\t' << m.id_p << '\t' << m.id_tc << '\n';
  os.precision(old);
}

std::vector<VideoMetrics> read_report_table(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("video\t", 0) != 0) throw DataError("report table lacks its header");
  std::vector<VideoMetrics> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    VideoMetrics m;
    if (!(std::getline(ls, m.id, '\t') >> m.lse_d >> m.lse_c >> m.id_p >> m.id_tc))
      throw DataError("malformed report row: " + line);
    out.push_back(m);
  }
  return out;
}

void write_report_summary(std::ostream& os, const MetricReport& r) {
  const auto old = os.precision(17);
  os << "videos " << r.per_video.size() << "\nse_defined " << (r.se_defined ? 1 : 0) << '\n';
  const std::pair<const char*, const MeanSe*> cols[] = {
      {"lse_d", &r.lse_d}, {"lse_c", &r.lse_c}, {"id_p", &r.id_p}, {"id_tc", &r.id_tc}};
  for (const auto& [name, v] : cols) os << name << "_mean " << v->mean << '\n' << name << "_se " << v->se << '\n';
  os.precision(old);
}

namespace {

double upper_normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "paired test needs equally many values on both sides");
  std::vector<double> d;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  WilcoxonResult r;
  r.n = int(d.size());
  if (r.n == 0) return r;

  std::vector<int> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return std::abs(d[i]) < std::abs(d[j]); });
  std::vector<double> rank(d.size());
  double tie_term = 0.0;
  bool ties = false;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    const double t = double(j - i + 1);
    if (t > 1) ties = true;
    tie_term += t * t * t - t;
    i = j + 1;
  }
  for (size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? r.w_plus : r.w_minus) += rank[i];

  const int n = r.n;
  if (n <= 25 && !ties) {
    // Number of subsets of {1..n} for each rank sum.
    const int max_sum = n * (n + 1) / 2;
    std::vector<double> count(max_sum + 1, 0.0);
    count[0] = 1.0;
    for (int k = 1; k <= n; ++k)
      for (int s = max_sum; s >= k; --s) count[s] += count[s - k];
    const double total = std::ldexp(1.0, n);
    const int w = int(std::lround(r.w_plus));
    double ge = 0.0, le = 0.0;
    for (int s = 0; s <= max_sum; ++s) {
      if (s >= w) ge += count[s];
      if (s <= w) le += count[s];
    }
    r.exact = true;
    r.p_greater = ge / total;
    r.p_less = le / total;
  } else {
    const double mean = n * (n + 1) / 4.0;
    const double var = n * (n + 1) * (2.0 * n + 1) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(std::max(var, std::numeric_limits<double>::min()));
    r.p_greater = upper_normal_tail((r.w_plus - mean - 0.5) / sd);
    r.p_less = 1.0 - upper_normal_tail((r.w_plus - mean + 0.5) / sd);
  }
  r.p_two_sided = std::min(1.0, 2.0 * std::min(r.p_greater, r.p_less));
  return r;
}

}  // namespace edidub
