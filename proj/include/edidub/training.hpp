#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "edidub/denoiser.hpp"
#include "edidub/diffusion.hpp"

namespace edidub {

struct TrainConfig {
  double peak_lr = 1e-4;
  double min_lr = 1e-5;
  long warmup_steps = 10000;
  long total_steps = 500000;
  int batch_size = 28;
  double ema_decay = 0.999;
  double weight_decay = 0.01;
  double flip_probability = 0.5;
  double condition_drop_probability = 0.1;

  static TrainConfig paper();
  static TrainConfig desk();
  void validate() const;
};

/// Linear warmup from 0 to peak_lr, then cosine decay to min_lr at total_steps.
double lr_at(long step, const TrainConfig& config);

/// ema <- decay * ema + (1 - decay) * current
template <typename S>
void ema_update(Vector<S>& ema, const Vector<S>& current, double decay) {
  if (ema.size() != current.size()) throw ContractError("EMA and model parameter counts differ");
  require(decay >= 0.0 && decay < 1.0, "EMA decay must lie in [0, 1)");
  const S d = static_cast<S>(decay);
  ema = d * ema + (S(1) - d) * current;
}

/// Adaptive moments with decoupled weight decay.
struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  Vector<float> m, v;
  long t = 0;

  void step(Vector<float>& params, const Vector<float>& grads, double lr);
};

/// Everything that evolves during training; saving and restoring it resumes
/// a run on exactly the same trajectory.
struct TrainState {
  Denoiser<float> model;
  Vector<float> ema;
  AdamW optimizer;
  long step = 0;
  std::mt19937_64 rng;

  TrainState(const DenoiserConfig& config, std::uint64_t seed);
};

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
};

struct LsdExample {
  Clip clip;
  RegionMask mask;
  Clip reference;  // per-frame selected reference frames
  UnitSequence units;
};

/// One optimizer update on a batch: uniform timestep in [1, T], masked
/// noising, reference channels appended, per-clip condition dropout, joint
/// horizontal flip. Throws DataError when any item has an empty mask.
StepResult train_step_lsd(TrainState& state, const std::vector<LsdExample>& batch,
                          const TrainConfig& config, const DiffusionSchedule& schedule);

struct SrdAugmentation {
  int lr_min = 32;
  int lr_max = 64;
  double predecessor_probability = 0.05;

  static SrdAugmentation paper() { return {}; }
  static SrdAugmentation desk() { return {12, 20, 0.05}; }
};

struct SrdDraw {
  int lr_size = 0;
  std::vector<int> source_frame;  // conditioning frame i is built from frame source_frame[i]
};

/// Random part of an SRD example: the low-resolution size and which frames
/// are replaced by their predecessor (frame 0 never is).
SrdDraw draw_srd_augmentation(int frames, const SrdAugmentation& aug, std::mt19937_64& rng);

struct SrdTrainExample {
  Clip target;
  Clip masked_hr;
  Clip lr_conditioning;
  int lr_size = 0;
};

SrdTrainExample make_srd_example(const Clip& target, const RegionMask& mask, std::mt19937_64& rng,
                                 const SrdAugmentation& aug = {});

/// Bicubic down to `lr_size` then back up to the target size.
Clip degrade_bicubic(const Clip& target, int lr_size);

/// As train_step_lsd with full-frame noising, the bicubic conditioning as
/// the extra channels and plain MSE over every pixel.
StepResult train_step_srd(TrainState& state, const std::vector<SrdTrainExample>& batch,
                          const TrainConfig& config, const DiffusionSchedule& schedule);

// ---------------------------------------------------------------------------
// Persistence

/// Flat float32 little-endian blob plus a sidecar manifest with one line per
/// parameter: name, offset, count, shape.
void write_parameters(const std::filesystem::path& blob, const nn::ParameterSet<float>& params,
                      const Vector<float>& values);
Vector<float> read_parameters(const std::filesystem::path& blob, const nn::ParameterSet<float>& layout);

/// One "key value..." line per field, each key prefixed with `prefix`.
void write_denoiser_config(std::ostream& os, const DenoiserConfig& config, const std::string& prefix = "");
DenoiserConfig read_denoiser_config(std::istream& is);
/// Applies one unprefixed field; false when the key is not a denoiser field.
bool set_denoiser_field(DenoiserConfig& config, const std::string& key, const std::vector<std::string>& values);

/// Checkpoint directory: config.txt, model.bin/.manifest, ema.bin/.manifest,
/// optimizer.bin (both moments), state.txt (step, adam step, rng state).
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& dir);

/// Loads only the EMA weights into a fresh inference model.
Denoiser<float> load_inference_model(const std::filesystem::path& dir, bool use_ema = true);

}  // namespace edidub
