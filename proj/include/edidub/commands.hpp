#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "edidub/config.hpp"
#include "edidub/evaluation.hpp"

namespace edidub {

/// Process exit status of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,   // anything unexpected
  kExitUsage = 2,     // bad command line
  kExitConfig = 3,    // ConfigError
  kExitData = 4,      // DataError
  kExitContract = 5,  // ContractError
  kExitArgument = 6,  // ArgumentError
};

/// Training on a dataset root (see read_dataset_manifest). Resumes from
/// checkpoint_dir when it already holds a checkpoint, whose topology must
/// match the configuration. Appends "step lr loss" lines to
/// checkpoint_dir/train_log.txt.
TrainState cmd_train_lsd(const PipelineConfig& config, const std::filesystem::path& data_root,
                         const std::filesystem::path& checkpoint_dir);
TrainState cmd_train_srd(const PipelineConfig& config, const std::filesystem::path& data_root,
                         const std::filesystem::path& checkpoint_dir);

struct DubRequest {
  Clip clip;
  RegionMask mask;
  std::vector<LandmarkFrame> landmarks;
  UnitSequence original_units;
  UnitSequence new_units;
  // Optional second stage.
  std::optional<Clip> hr_clip;
  std::optional<RegionMask> hr_mask;
};

struct DubResult {
  Clip low_res;
  std::optional<Clip> high_res;
  double frames_per_second = 0.0;
};

/// Low-resolution dub with the LSD, then SRD refinement when both an SRD and
/// the high-resolution inputs are supplied. Outside the mask the output
/// equals the corresponding input exactly.
DubResult cmd_dub(const PipelineConfig& config, const Denoiser<float>& lsd, const Denoiser<float>* srd,
                  const DubRequest& request);

/// Reference frames of a clip chosen from its lip landmarks.
Clip reference_frames(const Clip& clip, const std::vector<LandmarkFrame>& landmarks, int exclusion_radius);

/// Inverted latent of a whole clip (a single section is required).
NoisyState<float> cmd_invert(const PipelineConfig& config, const Denoiser<float>& lsd, const Clip& clip,
                             const RegionMask& mask, const std::vector<LandmarkFrame>& landmarks,
                             const UnitSequence& original_units);

/// Pairs every sample listed in generated_root with the sample of the same
/// name under original_root. A generated sample holds clip/ and units.txt
/// (the speech it was dubbed to); the original sample provides clip/ and
/// spec.txt. Uses the synthetic identity and sync embedders.
MetricReport cmd_evaluate(const PipelineConfig& config, const std::filesystem::path& original_root,
                          const std::filesystem::path& generated_root);

enum class CurationMode { front, occluded };
CurationMode parse_curation_mode(const std::string& name);

/// Manifest lines are "<video id> <stream file>", paths relative to the
/// manifest. Unreadable streams are skipped with a line on `warnings`.
/// Writes the accepted records as a tab-separated table to `out`.
void cmd_curate(const PipelineConfig& config, CurationMode mode, const std::filesystem::path& manifest,
                std::ostream& out, std::ostream& warnings);

void cmd_make_synthetic(const PipelineConfig& config, const std::filesystem::path& root);

}  // namespace edidub
