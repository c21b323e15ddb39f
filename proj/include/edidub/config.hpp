#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "edidub/curation.hpp"
#include "edidub/denoiser.hpp"
#include "edidub/diffusion.hpp"
#include "edidub/pipeline.hpp"
#include "edidub/training.hpp"

namespace edidub {

/// Everything the commands need besides file paths. Serialized as
/// "key value ..." lines; every key below can also be overridden from the
/// command line.
///
///   preset                         desk | paper; resets every other key, so
///                                  it may only appear first
///   seed                           base seed for training and sampling
///   lsd.<field>, srd.<field>       denoiser topology, with the field names of
///                                  a checkpoint's config.txt
///   lsd_train.<field>,
///   srd_train.<field>              peak_lr min_lr warmup total batch ema
///                                  weight_decay flip condition_drop steps
///   srd_aug.<field>                lr_min lr_max replace_p
///   checkpoint_every               steps between checkpoints
///   reference_exclusion            frames excluded around each target frame
///   schedule.<field>               train_steps inference_steps
///   dub.<field>                    guidance window window_step section overlap
///                                  clamp_intermediate srd_start
///   eval.<field>                   lse_window temperature
///   curate.<field>                 max_angle min_duration pose_step
///                                  occlusion_threshold occlusion_step early_stop
///   synthetic.<field>              count frames size hr_size vocab
struct PipelineConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1;

  DenoiserConfig lsd = DenoiserConfig::lsd_desk();
  DenoiserConfig srd = DenoiserConfig::srd_desk();
  TrainConfig lsd_train = TrainConfig::desk();
  TrainConfig srd_train = TrainConfig::desk();
  long lsd_steps = 0;  // steps a training command runs to; 0 means total
  long srd_steps = 0;
  SrdAugmentation srd_augmentation = SrdAugmentation::desk();
  long checkpoint_every = 500;
  int reference_exclusion = 5;

  int schedule_train_steps = 1000;
  int schedule_inference_steps = 50;

  double guidance_scale = 5.0;
  int window_size = 8;
  int window_step = 4;
  int section_length = 120;
  int section_overlap = 12;
  bool clamp_intermediate = false;
  int srd_start = 600;

  int lse_window = 8;
  double softmax_temperature = 1.0;

  LowAngleOptions low_angle;
  OcclusionOptions occlusion;
  SyntheticDatasetOptions synthetic;

  /// Built-in presets; ConfigError for unknown names.
  static PipelineConfig named(const std::string& name);

  /// Applies one key; ConfigError for unknown keys or malformed values.
  void set(const std::string& key, const std::vector<std::string>& values);
  /// "key=value" or "key=v1,v2,..." form used by command-line overrides.
  void set_assignment(const std::string& assignment);

  /// ConfigError describing the first inconsistency.
  void validate() const;

  long lsd_target_steps() const { return lsd_steps > 0 ? lsd_steps : lsd_train.total_steps; }
  long srd_target_steps() const { return srd_steps > 0 ? srd_steps : srd_train.total_steps; }
  DiffusionSchedule schedule() const;
  DubSettings dub_settings() const;

  bool operator==(const PipelineConfig&) const;
};

PipelineConfig read_pipeline_config(std::istream& is);
PipelineConfig read_pipeline_config_file(const std::string& path);
void write_pipeline_config(std::ostream& os, const PipelineConfig& config);

/// Environment variable naming the default configuration file.
inline constexpr const char* kConfigEnvVar = "EDIDUB_CONFIG";

/// Starts from `preset` (desk when empty), applies the file at `path` (or
/// $EDIDUB_CONFIG when path is empty and the variable is set), then the
/// "key=value" overrides in order.
PipelineConfig resolve_pipeline_config(const std::string& path, const std::string& preset,
                                       const std::vector<std::string>& overrides);

}  // namespace edidub
