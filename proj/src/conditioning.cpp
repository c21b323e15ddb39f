#include "edidub/conditioning.hpp"

#include <algorithm>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace edidub {

namespace {

Vector<double> non_lip_vector(const LandmarkFrame& f) {
  std::vector<double> v;
  v.reserve(2 * f.points.size());
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    if (std::binary_search(f.lip_indices.begin(), f.lip_indices.end(), static_cast<int>(i))) continue;
    v.push_back(f.points[i].x);
    v.push_back(f.points[i].y);
  }
  return Eigen::Map<Vector<double>>(v.data(), static_cast<long>(v.size()));
}

}  // namespace

std::vector<int> select_reference_frames(const std::vector<LandmarkFrame>& landmarks,
                                         int exclusion_radius) {
  require(!landmarks.empty(), "empty landmark sequence");
  require(exclusion_radius >= 0, "negative exclusion radius");
  const int n = static_cast<int>(landmarks.size());
  for (const auto& f : landmarks) {
    require(f.points.size() == landmarks.front().points.size() &&
                f.lip_indices == landmarks.front().lip_indices,
            "landmark frames disagree on topology");
    for (int idx : f.lip_indices)
      require(idx >= 0 && idx < static_cast<int>(f.points.size()), "lip index out of range");
  }

  std::vector<Vector<double>> vecs;
  vecs.reserve(n);
  for (const auto& f : landmarks) vecs.push_back(non_lip_vector(f));

  std::vector<int> refs(n);
  for (int i = 0; i < n; ++i) {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (std::abs(i - j) <= exclusion_radius) continue;
      const double d = (vecs[i] - vecs[j]).squaredNorm();
      if (d < best_dist) {
        best_dist = d;
        best = j;
      }
    }
    if (best < 0) {
      // window swallows the clip: farthest frame in time
      best = (i >= n - 1 - i) ? 0 : n - 1;
    }
    refs[i] = best;
  }
  return refs;
}

// ---------------------------------------------------------------------------

namespace {

int nearest_centroid(const Eigen::Ref<const Vector<double>>& x, const FeatureMatrix& centroids,
                     double* dist_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

}  // namespace

Codebook fit_codebook(const FeatureMatrix& features, int k, std::uint64_t seed,
                      const KMeansOptions& options) {
  require(k > 0, "k must be positive");
  const long n = features.rows();
  if (n < k) throw ArgumentError("fewer feature vectors than clusters");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  FeatureMatrix centroids(k, features.cols());
  Vector<double> d2(n);
  const long first = std::min<long>(n - 1, static_cast<long>(unit(rng) * n));
  centroids.row(0) = features.row(first);
  for (long i = 0; i < n; ++i) d2[i] = (features.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    long pick = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      pick = -1;
      for (long i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > target) break;
      }
    }
    centroids.row(c) = features.row(pick);
    for (long i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (features.row(i) - centroids.row(c)).squaredNorm());
  }

  std::vector<int> assign(n, 0);
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double inertia = 0.0;
    for (long i = 0; i < n; ++i) {
      double d = 0.0;
      assign[i] = nearest_centroid(features.row(i).transpose(), centroids, &d);
      d2[i] = d;
      inertia += d;
    }
    FeatureMatrix sums = FeatureMatrix::Zero(k, features.cols());
    std::vector<long> counts(k, 0);
    for (long i = 0; i < n; ++i) {
      sums.row(assign[i]) += features.row(i);
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
      } else {
        // empty cluster: move it to the worst-served point
        long worst = 0;
        d2.maxCoeff(&worst);
        centroids.row(c) = features.row(worst);
        d2[worst] = 0.0;
      }
    }
    const bool converged = std::isfinite(prev_inertia) &&
                           std::abs(prev_inertia - inertia) <= options.relative_tolerance * std::max(prev_inertia, 1e-300);
    prev_inertia = inertia;
    if (converged) break;
  }
  return Codebook{std::move(centroids)};
}

UnitSequence quantize(const FeatureMatrix& features, const Codebook& codebook) {
  if (features.cols() != codebook.feature_dim())
    throw ArgumentError("feature dimension does not match codebook");
  UnitSequence out;
  out.vocab = codebook.k();
  out.units.resize(features.rows());
  for (long i = 0; i < features.rows(); ++i)
    out.units[i] = nearest_centroid(features.row(i).transpose(), codebook.centroids);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kCodebookMagic[4] = {'E', 'D', 'C', 'B'};
constexpr std::uint32_t kCodebookVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated codebook header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_codebook(std::ostream& os, const Codebook& cb) {
  os.write(kCodebookMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(cb.k()));
  put_u32(os, static_cast<std::uint32_t>(cb.feature_dim()));
  put_u32(os, kCodebookVersion);
  for (long i = 0; i < cb.centroids.size(); ++i) {
    const double v = cb.centroids.data()[i];
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int b = 0; b < 8; ++b) os.put(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
}

Codebook read_codebook(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCodebookMagic, 4) != 0)
    throw DataError("not a codebook file");
  const std::uint32_t k = get_u32(is), dim = get_u32(is), version = get_u32(is);
  if (version != kCodebookVersion) throw DataError("unsupported codebook version");
  Codebook cb{FeatureMatrix(k, dim)};
  for (long i = 0; i < cb.centroids.size(); ++i) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated codebook body");
    std::uint64_t bits = 0;
    for (int j = 0; j < 8; ++j) bits |= static_cast<std::uint64_t>(b[j]) << (8 * j);
    std::memcpy(cb.centroids.data() + i, &bits, 8);
  }
  return cb;
}

void write_units(std::ostream& os, const UnitSequence& units) {
  for (int u : units.units) os << u << '\n';
}

UnitSequence read_units(std::istream& is, int vocab) {
  UnitSequence out;
  out.vocab = vocab;
  for (std::string line; std::getline(is, line);) {
    std::istringstream ls(line);
    int u;
    if (!(ls >> u)) continue;
    if (u < 0 || u > vocab) throw DataError("unit " + std::to_string(u) + " outside alphabet");
    out.units.push_back(u);
  }
  return out;
}

void write_landmarks(std::ostream& os, const std::vector<LandmarkFrame>& frames) {
  os.precision(17);
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < f.points.size(); ++i)
      os << (i ? " " : "") << f.points[i].x << ' ' << f.points[i].y;
    os << '\n';
  }
}

std::vector<LandmarkFrame> read_landmarks(std::istream& is, const std::vector<int>& lip_indices) {
  std::vector<LandmarkFrame> out;
  for (std::string line; std::getline(is, line);) {
    std::istringstream ls(line);
    LandmarkFrame f;
    f.lip_indices = lip_indices;
    double x, y;
    while (ls >> x >> y) f.points.push_back({x, y});
    if (f.points.empty()) continue;
    out.push_back(std::move(f));
  }
  return out;
}

UnitSequence drop_condition(const UnitSequence& units, double probability, std::mt19937_64& rng) {
  require(probability >= 0.0 && probability <= 1.0, "drop probability outside [0,1]");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < probability) return UnitSequence::null(units.size(), units.vocab);
  return units;
}

UnitSequence drop_condition(const UnitSequence& units, double probability, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return drop_condition(units, probability, rng);
}

}  // namespace edidub
