#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "edidub/nn/layers.hpp"
#include "edidub/units.hpp"

namespace edidub {

// ---------------------------------------------------------------------------
// Reference-frame selection

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct LandmarkFrame {
  std::vector<Point2> points;
  std::vector<int> lip_indices;  // sorted
};

/// For every frame, the index of the frame (outside +-exclusion_radius)
/// whose non-lip landmarks are closest in L2. Ties go to the smallest index;
/// when no frame lies outside the window the temporally farthest frame is
/// used.
std::vector<int> select_reference_frames(const std::vector<LandmarkFrame>& landmarks,
                                         int exclusion_radius = 5);

// ---------------------------------------------------------------------------
// Speech-unit codebook

using FeatureMatrix = RowMatrix<double>;

struct Codebook {
  FeatureMatrix centroids;  // k x feature_dim

  int k() const { return static_cast<int>(centroids.rows()); }
  int feature_dim() const { return static_cast<int>(centroids.cols()); }
};

struct KMeansOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-6;
};

/// k-means with k-means++ seeding; deterministic for a given seed.
Codebook fit_codebook(const FeatureMatrix& features, int k, std::uint64_t seed,
                      const KMeansOptions& options = {});

/// Nearest centroid (L2) per row; ties resolve to the lower index.
UnitSequence quantize(const FeatureMatrix& features, const Codebook& codebook);

/// Codebook file: 16-byte header (magic "EDCB", k, feature_dim, version as
/// little-endian uint32) followed by k*feature_dim little-endian float64,
/// row-major.
void write_codebook(std::ostream& os, const Codebook& codebook);
Codebook read_codebook(std::istream& is);

/// Newline-delimited integers; the vocabulary size is supplied by the caller.
void write_units(std::ostream& os, const UnitSequence& units);
UnitSequence read_units(std::istream& is, int vocab);

/// One line per frame of whitespace-separated "x y" pairs. Lip indices are not
/// part of the file and are attached by the caller.
void write_landmarks(std::ostream& os, const std::vector<LandmarkFrame>& frames);
std::vector<LandmarkFrame> read_landmarks(std::istream& is, const std::vector<int>& lip_indices);

/// With `probability`, replaces the whole sequence by NULL symbols.
UnitSequence drop_condition(const UnitSequence& units, double probability, std::uint64_t seed);
UnitSequence drop_condition(const UnitSequence& units, double probability, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Unit embedding and FiLM modulation parameters

/// Looks up each unit in a (vocab+1) x d table and packs the two 50 Hz rows of
/// every frame side by side, giving a frames x 2d matrix.
template <typename S>
RowMatrix<S> embed_units(const UnitSequence& units, const Eigen::Ref<const RowMatrix<S>>& table,
                         int num_frames) {
  if (units.size() != 2 * num_frames)
    throw ArgumentError("unit sequence length " + std::to_string(units.size()) +
                        " does not equal twice the frame count " + std::to_string(num_frames));
  if (table.rows() != units.vocab + 1) throw ArgumentError("embedding table rows != vocab + 1");
  const long d = table.cols();
  RowMatrix<S> out(num_frames, 2 * d);
  for (int i = 0; i < num_frames; ++i) {
    for (int half = 0; half < 2; ++half) {
      const int u = units.units[2 * i + half];
      if (u < 0 || u > units.vocab) throw ArgumentError("unit outside alphabet");
      out.row(i).segment(half * d, d) = table.row(u);
    }
  }
  return out;
}

template <typename S>
void embed_units_backward(const UnitSequence& units, const RowMatrix<S>& d_out,
                          Eigen::Ref<RowMatrix<S>> d_table) {
  const long d = d_table.cols();
  for (int i = 0; i < d_out.rows(); ++i)
    for (int half = 0; half < 2; ++half)
      d_table.row(units.units[2 * i + half]) += d_out.row(i).segment(half * d, d);
}

template <typename S>
struct FilmParams {
  RowMatrix<S> gamma;  // frames x channels
  RowMatrix<S> beta;
};

template <typename S>
struct FilmCache {
  RowMatrix<S> input;     // frames x 2d
  RowMatrix<S> filtered;  // after the depthwise temporal convolution
};

/// Depthwise temporal convolution (odd width, zero "same" padding) followed by
/// a per-frame linear projection to (gamma - 1, beta) for `channels` channels.
struct FilmProjector {
  int cond_dim = 0;  // 2d
  int channels = 0;
  int kernel = 3;
  long dw_w_off = 0, dw_b_off = 0;
  nn::Linear proj;

  template <typename S>
  static FilmProjector make(nn::ParameterSet<S>& ps, const std::string& name, int cond_dim,
                            int channels, int kernel) {
    if (kernel % 2 == 0) throw ArgumentError("FiLM temporal kernel width must be odd");
    FilmProjector f;
    f.cond_dim = cond_dim;
    f.channels = channels;
    f.kernel = kernel;
    f.dw_w_off = ps.add(name + ".depthwise.weight", {kernel, cond_dim});
    f.dw_b_off = ps.add(name + ".depthwise.bias", {cond_dim});
    f.proj = nn::Linear::make(ps, name + ".proj", cond_dim, 2 * channels);
    return f;
  }

  template <typename S>
  void init(nn::ParameterSet<S>& ps, std::mt19937_64& rng, double gain) const {
    nn::fill_normal(ps.values(), dw_w_off, long(kernel) * cond_dim, 1.0 / std::sqrt(double(kernel)), rng);
    proj.init(ps, rng, gain);
  }

  /// Sets the projection to zero so gamma == 1 and beta == 0 for any input.
  template <typename S>
  void set_identity(nn::ParameterSet<S>& ps) const {
    ps.values().segment(proj.w_off, long(proj.in) * proj.out).setZero();
    ps.values().segment(proj.b_off, proj.out).setZero();
  }

  template <typename S>
  RowMatrix<S> depthwise(const nn::ParameterSet<S>& ps, const RowMatrix<S>& c) const {
    const auto w = nn::param_matrix(ps, dw_w_off, kernel, cond_dim);
    const auto b = nn::param_matrix(ps, dw_b_off, 1, cond_dim);
    const int T = static_cast<int>(c.rows()), pad = kernel / 2;
    RowMatrix<S> z(T, cond_dim);
    for (int t = 0; t < T; ++t) {
      z.row(t) = b.row(0);
      for (int k = 0; k < kernel; ++k) {
        const int s = t + k - pad;
        if (s < 0 || s >= T) continue;
        z.row(t).array() += w.row(k).array() * c.row(s).array();
      }
    }
    return z;
  }

  template <typename S>
  FilmParams<S> forward(const nn::ParameterSet<S>& ps, const RowMatrix<S>& condition,
                        FilmCache<S>* cache) const {
    if (condition.cols() != cond_dim) throw ContractError("FiLM condition width mismatch");
    RowMatrix<S> z = depthwise(ps, condition);
    RowMatrix<S> out = proj.forward(ps, z);
    FilmParams<S> p{out.leftCols(channels).array() + S(1), out.rightCols(channels)};
    if (cache) {
      cache->input = condition;
      cache->filtered = std::move(z);
    }
    return p;
  }

  /// Returns the gradient with respect to the condition matrix.
  template <typename S>
  RowMatrix<S> backward(const nn::ParameterSet<S>& ps, Vector<S>& grads, const FilmCache<S>& cache,
                        const RowMatrix<S>& d_gamma, const RowMatrix<S>& d_beta) const {
    const int T = static_cast<int>(cache.input.rows()), pad = kernel / 2;
    RowMatrix<S> d_out(T, 2 * channels);
    d_out.leftCols(channels) = d_gamma;
    d_out.rightCols(channels) = d_beta;
    RowMatrix<S> dz = proj.backward(ps, grads, cache.filtered, d_out);
    const auto w = nn::param_matrix(ps, dw_w_off, kernel, cond_dim);
    auto gw = nn::grad_matrix(grads, dw_w_off, kernel, cond_dim);
    nn::grad_matrix(grads, dw_b_off, 1, cond_dim).row(0) += dz.colwise().sum();
    RowMatrix<S> dc = RowMatrix<S>::Zero(T, cond_dim);
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < kernel; ++k) {
        const int s = t + k - pad;
        if (s < 0 || s >= T) continue;
        gw.row(k).array() += dz.row(t).array() * cache.input.row(s).array();
        dc.row(s).array() += w.row(k).array() * dz.row(t).array();
      }
    return dc;
  }
};

/// Convenience: FiLM parameters from a standalone projector and parameter set.
template <typename S>
FilmParams<S> film_params(const RowMatrix<S>& frame_conditions, const FilmProjector& projector,
                          const nn::ParameterSet<S>& weights) {
  return projector.forward(weights, frame_conditions, static_cast<FilmCache<S>*>(nullptr));
}

/// AdaIN: per-frame, per-channel normalization over spatial positions,
/// then gamma * h + beta.
template <typename S>
Tensor<S> adain(const Tensor<S>& h, const FilmParams<S>& film) {
  const Tensor<S> normalized = nn::normalize_per_frame(h, h.channels(), static_cast<nn::NormCache<S>*>(nullptr));
  return nn::modulate(normalized, film.gamma, film.beta);
}

}  // namespace edidub
