#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "edidub/denoiser.hpp"
#include "edidub/diffusion.hpp"
#include "edidub/io.hpp"
#include "edidub/stitching.hpp"
#include "edidub/training.hpp"

namespace edidub {

// ---------------------------------------------------------------------------
// Datasets

/// Frame i of the result is frame reference[i] of the clip.
Clip gather_frames(const Clip& clip, const std::vector<int>& reference);

/// A full-length training sample with its reference frames already gathered.
struct LsdSample {
  Clip clip;
  RegionMask mask;
  Clip reference;
  UnitSequence units;
};

LsdSample load_lsd_sample(const SampleFiles& files, int vocab, int exclusion_radius = 5);
std::vector<LsdSample> load_lsd_dataset(const std::filesystem::path& root, int vocab, int exclusion_radius = 5);

/// Random temporal crop of `frames` frames.
LsdExample crop_example(const LsdSample& sample, int frames, std::mt19937_64& rng);

struct SrdSample {
  Clip target;
  RegionMask mask;
};
std::vector<SrdSample> load_srd_dataset(const std::filesystem::path& root);

struct SyntheticDatasetOptions {
  int count = 500;
  int frames = 24;
  int image_size = 16;
  int hr_size = 0;  // 0: no high-resolution render
  int vocab = 16;
  std::uint64_t seed = 1;
};

/// Writes `count` talking-blob samples with random identities and unit
/// streams under root, plus the dataset manifest.
void make_synthetic_dataset(const std::filesystem::path& root, const SyntheticDatasetOptions& options);

/// Spec used for sample `index` of a synthetic dataset.
BlobSpec synthetic_spec(const SyntheticDatasetOptions& options, int index);

// ---------------------------------------------------------------------------
// Training loops

struct TrainLoopOptions {
  long steps = 0;  // run until state.step reaches this
  long checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::ostream* log = nullptr;          // "step lr loss" lines
  std::function<void(long step, const StepResult&)> on_step;
};

void train_lsd(TrainState& state, const std::vector<LsdSample>& data, const TrainConfig& config,
               const DiffusionSchedule& schedule, const TrainLoopOptions& options);

void train_srd(TrainState& state, const std::vector<SrdSample>& data, const TrainConfig& config,
               const DiffusionSchedule& schedule, const SrdAugmentation& aug, const TrainLoopOptions& options);

// ---------------------------------------------------------------------------
// Dubbing

struct DubSettings {
  DiffusionSchedule schedule = build_cosine_schedule(1000, 50);
  GuidanceConfig guidance{5.0};
  int window_size = 24;
  int window_step = 12;
  int section_length = 120;
  int section_overlap = 12;
  bool clamp_intermediate = false;  // clamp every intermediate clean estimate, not only the output
  int srd_start = 600;  // SRD sampling begins from the bicubic upsampling noised to this timestep
};

/// Window-level LSD predictor: appends the matching reference frames and
/// runs the denoiser.
WindowPredictor<float> lsd_window_predictor(const Denoiser<float>& model, const Clip& reference);

/// Latent of a section under its original speech (unguided, windowed).
NoisyState<float> invert_section(const Denoiser<float>& model, const Clip& section, const RegionMask& mask,
                                 const Clip& reference, const UnitSequence& original_units,
                                 const DubSettings& settings);

/// Invert with the original units, then sample with the new units under
/// guidance; both passes average overlapping windows.
Clip dub_section(const Denoiser<float>& model, const Clip& section, const RegionMask& mask, const Clip& reference,
                 const UnitSequence& original_units, const UnitSequence& new_units, const DubSettings& settings);

/// Full low-resolution dub: sections processed in order with continuation
/// overlap. `reference` holds the per-frame reference images of the
/// original clip (see gather_frames).
Clip dub_clip(const Denoiser<float>& model, const Clip& clip, const RegionMask& mask, const Clip& reference,
              const UnitSequence& original_units, const UnitSequence& new_units, const DubSettings& settings);

/// Super-resolution of a low-resolution result, conditioned on its bicubic
/// upsampling. Sampling covers the whole frame and starts at the largest
/// inference step not above settings.srd_start, from the upsampling itself
/// noised with seeded noise; the original is composited back outside the mask.
Clip srd_refine(const Denoiser<float>& srd, const Clip& low_res, const Clip& hr_original, const RegionMask& hr_mask,
                const DubSettings& settings, std::uint64_t seed);

}  // namespace edidub
