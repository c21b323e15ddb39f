#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "edidub/conditioning.hpp"
#include "edidub/tensor.hpp"
#include "edidub/units.hpp"

namespace edidub {

/// A "talking blob": a coloured face disk with two eyes and an elliptical
/// mouth whose opening follows the speech units. Geometry is given in
/// normalized image coordinates so one spec renders at any resolution.
struct BlobSpec {
  int image_size = 16;
  int frames = 24;
  double face_cx = 0.5, face_cy = 0.5, face_radius = 0.42;
  double mouth_cx = 0.5, mouth_cy = 0.68;
  double mouth_half_width = 0.18;
  double mouth_max_half_height = 0.14;
  double mask_top = 0.45;       // the editable region starts below the eyes
  std::vector<double> aperture_map;  // unit -> opening fraction in [0, 1]
  double identity_hue = 0.0;    // [0, 1)

  int vocab() const { return static_cast<int>(aperture_map.size()); }
  /// Mouth height in pixels when fully open.
  double max_mouth_height_px() const { return 2.0 * mouth_max_half_height * image_size; }
  /// Throws ArgumentError when the mouth can leave the editable region or the
  /// aperture map is not injective.
  void validate() const;
};

/// Injective unit -> aperture table: evenly spaced openings in a fixed
/// shuffled order.
std::vector<double> default_aperture_map(int vocab);

struct BlobColors {
  std::array<double, 3> background, face, eye, mouth;  // [0, 1] RGB
};
BlobColors blob_colors(double identity_hue);

/// Commanded per-frame aperture: mean of the frame's two unit openings.
std::vector<double> commanded_aperture(const BlobSpec& spec, const UnitSequence& units);

/// Landmark indices of the four lip points in a rendered blob.
inline const std::vector<int> kBlobLipIndices{14, 15, 16, 17};

struct RenderedClip {
  Clip clip;
  RegionMask mask;
  std::vector<LandmarkFrame> landmarks;
};

/// 4x4 supersampled render. Landmarks: 12 face-contour points, 2 eye centres
/// and 4 lip points (left, right, top, bottom), the last four flagged as lips.
RenderedClip render_blob_clip(const BlobSpec& spec, const UnitSequence& units);

/// Lower-face editable region of a spec.
RegionMask blob_mask(const BlobSpec& spec);

/// Per-frame opening estimate: darkness (relative to the face and mouth
/// colours) summed along the mouth's vertical axis inside the mouth box and
/// divided by the fully open height.
std::vector<double> measure_aperture(const Clip& clip, const BlobSpec& spec);

/// Random piecewise-constant unit stream: runs of 2..6 identical units.
UnitSequence random_unit_sequence(int frames, int vocab, std::mt19937_64& rng);

/// Hidden per-unit centroids standing in for a speech encoder.
struct SpeechFeatureModel {
  FeatureMatrix centroids;  // vocab x dim

  static SpeechFeatureModel make(int vocab, int dim, std::uint64_t seed);
  /// Smallest distance between two hidden centroids.
  double min_separation() const;
};

/// One feature row per unit: the unit's hidden centroid plus Gaussian noise.
FeatureMatrix synth_speech_features(const UnitSequence& units_truth, const SpeechFeatureModel& model,
                                    double noise_std, std::uint64_t seed);

/// Per-frame unit-norm identity descriptor: 4x4 grid of mean colours plus an
/// 8x8 downsampled intensity image.
RowMatrix<double> synth_identity_embedder(const Clip& clip);

/// Per-frame unit-norm sync descriptor of the mouth region (intensity profile
/// along the mouth axis), used as the synthetic video side of LSE.
RowMatrix<double> synth_mouth_embedder(const Clip& clip, const BlobSpec& spec);

/// Audio side of the synthetic sync embedder: the profile an ideal render of
/// the commanded aperture would produce.
RowMatrix<double> synth_audio_embedder(const UnitSequence& units, const BlobSpec& spec);

}  // namespace edidub
