#include "edidub/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

namespace edidub {

namespace {

constexpr int kSuper = 4;
constexpr int kContourPoints = 12;

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  for (double& ch : rgb) ch += v - c;
  return rgb;
}

double luma(const std::array<double, 3>& rgb) { return (rgb[0] + rgb[1] + rgb[2]) / 3.0; }

struct MouthBox {
  int row_begin, row_end;  // pixel rows overlapping the fully open mouth
  double column;           // mouth axis in pixel-index coordinates
};

MouthBox mouth_box(const BlobSpec& s) {
  const double n = s.image_size;
  return MouthBox{std::max(0, int(std::floor((s.mouth_cy - s.mouth_max_half_height) * n))),
                  std::min(s.image_size, int(std::ceil((s.mouth_cy + s.mouth_max_half_height) * n))),
                  s.mouth_cx * n - 0.5};
}

/// Darkness profile along the mouth axis of one frame.
std::vector<double> mouth_profile(const Clip& clip, int t, const BlobSpec& spec, const BlobColors& colors) {
  const MouthBox box = mouth_box(spec);
  const int x0 = std::clamp(int(std::floor(box.column)), 0, clip.width() - 1);
  const int x1 = std::min(x0 + 1, clip.width() - 1);
  const double fx = std::clamp(box.column - x0, 0.0, 1.0);
  const double face = luma(colors.face) * 2.0 - 1.0, mouth = luma(colors.mouth) * 2.0 - 1.0;
  std::vector<double> out;
  for (int y = box.row_begin; y < box.row_end; ++y) {
    double l0 = 0.0, l1 = 0.0;
    for (int c = 0; c < clip.channels(); ++c) {
      l0 += clip(t, y, x0, c);
      l1 += clip(t, y, x1, c);
    }
    const double l = ((1.0 - fx) * l0 + fx * l1) / clip.channels();
    out.push_back(std::clamp((face - l) / (face - mouth), 0.0, 1.0));
  }
  return out;
}

RowMatrix<double> normalize_rows(RowMatrix<double> m) {
  for (long r = 0; r < m.rows(); ++r) m.row(r) /= m.row(r).norm();
  return m;
}

}  // namespace

void BlobSpec::validate() const {
  require(image_size >= 4 && frames >= 1, "blob spec needs a positive size and frame count");
  require(!aperture_map.empty(), "blob spec needs an aperture map");
  std::set<double> seen;
  for (double a : aperture_map) {
    require(a >= 0.0 && a <= 1.0, "aperture values must lie in [0, 1]");
    require(seen.insert(a).second, "aperture map must be injective");
  }
  require(mouth_cy - mouth_max_half_height >= mask_top, "mouth reaches above the editable region");
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      require(std::hypot(mouth_cx + sx * mouth_half_width - face_cx, mouth_cy + sy * mouth_max_half_height - face_cy) <=
                  face_radius,
              "mouth extends outside the face");
}

std::vector<double> default_aperture_map(int vocab) {
  require(vocab >= 1, "vocabulary must be non-empty");
  std::vector<double> levels(vocab);
  for (int i = 0; i < vocab; ++i) levels[i] = vocab == 1 ? 0.5 : double(i) / (vocab - 1);
  std::mt19937_64 rng(0x5eed);
  std::shuffle(levels.begin(), levels.end(), rng);
  return levels;
}

BlobColors blob_colors(double identity_hue) {
  return BlobColors{{0.35, 0.38, 0.42}, hsv_to_rgb(identity_hue, 0.45, 0.92), {0.10, 0.10, 0.15}, {0.18, 0.04, 0.06}};
}

std::vector<double> commanded_aperture(const BlobSpec& spec, const UnitSequence& units) {
  require(units.size() == 2 * spec.frames, "unit sequence must hold two units per frame");
  std::vector<double> out(spec.frames);
  for (int f = 0; f < spec.frames; ++f) {
    const int a = units.units[2 * f], b = units.units[2 * f + 1];
    require(a >= 0 && a < spec.vocab() && b >= 0 && b < spec.vocab(), "unit outside the blob alphabet");
    out[f] = 0.5 * (spec.aperture_map[a] + spec.aperture_map[b]);
  }
  return out;
}

RegionMask blob_mask(const BlobSpec& s) {
  const int n = s.image_size;
  const double margin = 0.04;
  RegionMask m(s.frames, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double u = (x + 0.5) / n, v = (y + 0.5) / n;
      const bool inside = v >= s.mask_top && v <= s.face_cy + s.face_radius + margin &&
                          std::abs(u - s.face_cx) <= s.face_radius + margin;
      if (inside)
        for (int t = 0; t < s.frames; ++t) m.set(t, y, x, true);
    }
  return m;
}

RenderedClip render_blob_clip(const BlobSpec& spec, const UnitSequence& units) {
  spec.validate();
  const auto aperture = commanded_aperture(spec, units);
  const BlobColors colors = blob_colors(spec.identity_hue);
  const int n = spec.image_size;
  const double eye_dx = 0.15, eye_y = 0.36, eye_r = 0.05;
  RenderedClip out{Clip(spec.frames, n, n, 3), blob_mask(spec), {}};
  for (int t = 0; t < spec.frames; ++t) {
    const double hh = aperture[t] * spec.mouth_max_half_height;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        std::array<double, 3> acc{0, 0, 0};
        for (int sy = 0; sy < kSuper; ++sy)
          for (int sx = 0; sx < kSuper; ++sx) {
            const double u = (x + (sx + 0.5) / kSuper) / n, v = (y + (sy + 0.5) / kSuper) / n;
            const std::array<double, 3>* c = &colors.background;
            if (std::hypot(u - spec.face_cx, v - spec.face_cy) <= spec.face_radius) c = &colors.face;
            if (std::hypot(u - (spec.face_cx - eye_dx), v - eye_y) <= eye_r ||
                std::hypot(u - (spec.face_cx + eye_dx), v - eye_y) <= eye_r)
              c = &colors.eye;
            if (hh > 0.0) {
              const double du = (u - spec.mouth_cx) / spec.mouth_half_width, dv = (v - spec.mouth_cy) / hh;
              if (du * du + dv * dv <= 1.0) c = &colors.mouth;
            }
            for (int ch = 0; ch < 3; ++ch) acc[ch] += (*c)[ch];
          }
        for (int ch = 0; ch < 3; ++ch) out.clip(t, y, x, ch) = float(acc[ch] / (kSuper * kSuper) * 2.0 - 1.0);
      }

    LandmarkFrame lm;
    for (int k = 0; k < kContourPoints; ++k) {
      const double a = 2.0 * std::numbers::pi * k / kContourPoints;
      lm.points.push_back({spec.face_cx + spec.face_radius * std::cos(a), spec.face_cy + spec.face_radius * std::sin(a)});
    }
    lm.points.push_back({spec.face_cx - eye_dx, eye_y});
    lm.points.push_back({spec.face_cx + eye_dx, eye_y});
    lm.points.push_back({spec.mouth_cx - spec.mouth_half_width, spec.mouth_cy});
    lm.points.push_back({spec.mouth_cx + spec.mouth_half_width, spec.mouth_cy});
    lm.points.push_back({spec.mouth_cx, spec.mouth_cy - hh});
    lm.points.push_back({spec.mouth_cx, spec.mouth_cy + hh});
    lm.lip_indices = kBlobLipIndices;
    out.landmarks.push_back(std::move(lm));
  }
  return out;
}

std::vector<double> measure_aperture(const Clip& clip, const BlobSpec& spec) {
  require(clip.height() == spec.image_size && clip.width() == spec.image_size,
          "clip resolution differs from the blob spec");
  const BlobColors colors = blob_colors(spec.identity_hue);
  std::vector<double> out(clip.frames());
  for (int t = 0; t < clip.frames(); ++t) {
    const auto p = mouth_profile(clip, t, spec, colors);
    out[t] = std::clamp(std::accumulate(p.begin(), p.end(), 0.0) / spec.max_mouth_height_px(), 0.0, 1.0);
  }
  return out;
}

UnitSequence random_unit_sequence(int frames, int vocab, std::mt19937_64& rng) {
  require(frames >= 0 && vocab >= 1, "invalid unit sequence request");
  std::uniform_int_distribution<int> unit(0, vocab - 1), run(2, 6);
  UnitSequence u{{}, vocab};
  while (u.size() < 2 * frames) {
    const int value = unit(rng);
    for (int r = run(rng); r > 0 && u.size() < 2 * frames; --r) u.units.push_back(value);
  }
  return u;
}

SpeechFeatureModel SpeechFeatureModel::make(int vocab, int dim, std::uint64_t seed) {
  require(vocab >= 1 && dim >= 1, "invalid speech feature model");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  SpeechFeatureModel m{FeatureMatrix(vocab, dim)};
  for (long i = 0; i < m.centroids.size(); ++i) m.centroids.data()[i] = n(rng);
  return m;
}

double SpeechFeatureModel::min_separation() const {
  double best = std::numeric_limits<double>::infinity();
  for (long i = 0; i < centroids.rows(); ++i)
    for (long j = i + 1; j < centroids.rows(); ++j)
      best = std::min(best, (centroids.row(i) - centroids.row(j)).norm());
  return best;
}

FeatureMatrix synth_speech_features(const UnitSequence& units_truth, const SpeechFeatureModel& model,
                                    double noise_std, std::uint64_t seed) {
  require(noise_std >= 0.0, "noise level must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMatrix out(units_truth.size(), model.centroids.cols());
  for (int i = 0; i < units_truth.size(); ++i) {
    const int u = units_truth.units[i];
    require(u >= 0 && u < model.centroids.rows(), "unit outside the feature model alphabet");
    out.row(i) = model.centroids.row(u);
    if (noise_std > 0.0)
      for (long c = 0; c < out.cols(); ++c) out(i, c) += noise_std * n(rng);
  }
  return out;
}

RowMatrix<double> synth_identity_embedder(const Clip& clip) {
  const int H = clip.height(), W = clip.width(), C = clip.channels();
  constexpr int grid = 4, fine = 8;
  RowMatrix<double> e = RowMatrix<double>::Zero(clip.frames(), grid * grid * C + fine * fine);
  for (int t = 0; t < clip.frames(); ++t) {
    Eigen::VectorXd colour_count = Eigen::VectorXd::Zero(grid * grid), fine_count = Eigen::VectorXd::Zero(fine * fine);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int g = (y * grid / H) * grid + x * grid / W;
        const int f = (y * fine / H) * fine + x * fine / W;
        double l = 0.0;
        for (int c = 0; c < C; ++c) {
          const double v = clip(t, y, x, c) * 0.5 + 1.5;  // [1, 2]: keeps every feature positive
          e(t, g * C + c) += v;
          l += v;
        }
        e(t, grid * grid * C + f) += l / C;
        colour_count[g] += 1.0;
        fine_count[f] += 1.0;
      }
    for (int g = 0; g < grid * grid; ++g)
      for (int c = 0; c < C; ++c) e(t, g * C + c) /= std::max(1.0, colour_count[g]);
    for (int f = 0; f < fine * fine; ++f) e(t, grid * grid * C + f) /= std::max(1.0, fine_count[f]);
  }
  return normalize_rows(std::move(e));
}

RowMatrix<double> synth_mouth_embedder(const Clip& clip, const BlobSpec& spec) {
  const BlobColors colors = blob_colors(spec.identity_hue);
  const MouthBox box = mouth_box(spec);
  RowMatrix<double> e(clip.frames(), box.row_end - box.row_begin + 1);
  for (int t = 0; t < clip.frames(); ++t) {
    const auto p = mouth_profile(clip, t, spec, colors);
    for (size_t i = 0; i < p.size(); ++i) e(t, long(i)) = p[i];
    e(t, long(p.size())) = 0.5;  // bias so a closed mouth still has a direction
  }
  return normalize_rows(std::move(e));
}

RowMatrix<double> synth_audio_embedder(const UnitSequence& units, const BlobSpec& spec) {
  BlobSpec s = spec;
  s.frames = units.size() / 2;
  return synth_mouth_embedder(render_blob_clip(s, units).clip, s);
}

}  // namespace edidub
