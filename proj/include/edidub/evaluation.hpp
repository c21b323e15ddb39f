#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "edidub/tensor.hpp"

namespace edidub {

/// T x e matrix with unit-norm rows.
using EmbeddingSequence = RowMatrix<double>;

/// Throws ArgumentError unless every row has norm 1 within 1e-6.
void check_unit_rows(const EmbeddingSequence& e, const std::string& what);

/// Sum_i w_i s_i with w = softmax(s / temperature), computed after
/// subtracting the maximum score.
double softmax_weighted_mean(const std::vector<double>& scores, double temperature = 1.0);

/// Frame-wise cosine distance between original and generated identity
/// embeddings, softmax-weighted so that the worst frames dominate. The
/// distance is 1 - <a, b>, taken as exactly 0 for bitwise identical rows.
double id_p(const EmbeddingSequence& original, const EmbeddingSequence& generated, double temperature = 1.0);

/// Softmax-weighted cosine distance between consecutive generated frames.
double id_tc(const EmbeddingSequence& generated, double temperature = 1.0);

struct LseScores {
  double lse_d = 0.0;
  double lse_c = 0.0;
};

/// Mean audio/video distance at offset o: 1 - <audio_i, video_{i+o}> averaged
/// over every i for which both indices exist.
double offset_distance(const EmbeddingSequence& audio, const EmbeddingSequence& video, int offset);

/// LSE-D is the zero-offset distance. LSE-C is the median of the offset
/// distances over [-window, window] minus their minimum.
LseScores lse_metrics(const EmbeddingSequence& audio, const EmbeddingSequence& video, int offset_window = 15);

// ---------------------------------------------------------------------------
// Reports

struct VideoMetrics {
  std::string id;
  double lse_d = 0.0, lse_c = 0.0, id_p = 0.0, id_tc = 0.0;
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;  // sample standard deviation / sqrt(n); 0 when n == 1
};

struct MetricReport {
  std::vector<VideoMetrics> per_video;
  MeanSe lse_d, lse_c, id_p, id_tc;
  bool se_defined = false;  // false for a single video
};

MeanSe mean_standard_error(const std::vector<double>& values);
MetricReport aggregate_report(std::vector<VideoMetrics> per_video);

/// Embedder plug-ins: each maps a clip to one unit-norm row per frame.
using FrameEmbedder = std::function<EmbeddingSequence(const Clip&)>;

struct VideoEvaluator {
  FrameEmbedder identity;
  FrameEmbedder mouth;
  int lse_window = 15;
  double temperature = 1.0;

  VideoMetrics operator()(const std::string& id, const Clip& original, const Clip& generated,
                          const EmbeddingSequence& audio) const;
};

/// Tab-separated table with header "video lse_d lse_c id_p id_tc", one row
/// per video, 17 significant digits.
void write_report_table(std::ostream& os, const MetricReport& report);
std::vector<VideoMetrics> read_report_table(std::istream& is);

/// Key/value summary: "videos N", "se_defined 0|1" and, per metric,
/// "<metric>_mean" and "<metric>_se".
void write_report_summary(std::ostream& os, const MetricReport& report);

// ---------------------------------------------------------------------------
// Paired significance test

struct WilcoxonResult {
  int n = 0;             // pairs with nonzero difference
  double w_plus = 0.0;   // rank sum of positive differences (a > b)
  double w_minus = 0.0;
  bool exact = false;    // exact null distribution (small n, no ties)
  double p_two_sided = 1.0;
  double p_greater = 1.0;  // alternative: a tends to exceed b
  double p_less = 1.0;
};

/// Wilcoxon signed-rank test on the pairs (a_i, b_i). Zero differences are
/// dropped, tied magnitudes get average ranks. Uses the exact distribution
/// for n <= 25 without ties and the tie-corrected normal approximation with
/// continuity correction otherwise.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace edidub
