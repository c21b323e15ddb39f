#include "edidub/commands.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include "edidub/io.hpp"

namespace edidub {

namespace fs = std::filesystem;

namespace {

TrainState open_state(const DenoiserConfig& model, std::uint64_t seed, const fs::path& dir) {
  if (!fs::exists(dir / "state.txt")) return TrainState(model, seed);
  TrainState state = load_checkpoint(dir);
  if (!(state.model.config() == model))
    throw ConfigError("checkpoint in " + dir.string() + " was trained with a different topology");
  return state;
}

TrainLoopOptions loop_options(const PipelineConfig& c, const fs::path& dir, long steps, std::ostream& log) {
  TrainLoopOptions o;
  o.steps = steps;
  o.checkpoint_dir = dir;
  o.checkpoint_every = c.checkpoint_every;
  o.log = &log;
  return o;
}

}  // namespace

TrainState cmd_train_lsd(const PipelineConfig& c, const fs::path& data_root, const fs::path& dir) {
  c.validate();
  const auto data = load_lsd_dataset(data_root, c.lsd.unit_vocab, c.reference_exclusion);
  TrainState state = open_state(c.lsd, c.seed, dir);
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.txt", std::ios::app);
  train_lsd(state, data, c.lsd_train, c.schedule(), loop_options(c, dir, c.lsd_target_steps(), log));
  return state;
}

TrainState cmd_train_srd(const PipelineConfig& c, const fs::path& data_root, const fs::path& dir) {
  c.validate();
  const auto data = load_srd_dataset(data_root);
  for (const auto& s : data)
    if (s.target.height() != c.srd.spatial_size || s.target.width() != c.srd.spatial_size)
      throw DataError("high-resolution samples must be " + std::to_string(c.srd.spatial_size) + " px square");
  TrainState state = open_state(c.srd, c.seed, dir);
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.txt", std::ios::app);
  train_srd(state, data, c.srd_train, c.schedule(), c.srd_augmentation,
            loop_options(c, dir, c.srd_target_steps(), log));
  return state;
}

Clip reference_frames(const Clip& clip, const std::vector<LandmarkFrame>& landmarks, int exclusion_radius) {
  if (int(landmarks.size()) != clip.frames()) throw ArgumentError("one landmark frame per clip frame required");
  return gather_frames(clip, select_reference_frames(landmarks, exclusion_radius));
}

DubResult cmd_dub(const PipelineConfig& c, const Denoiser<float>& lsd, const Denoiser<float>* srd,
                  const DubRequest& r) {
  c.validate();
  if (r.original_units.size() != 2 * r.clip.frames() || r.new_units.size() != 2 * r.clip.frames())
    throw ArgumentError("unit sequences must hold two units per clip frame");
  if (!r.mask.matches(r.clip.shape())) throw ArgumentError("mask shape differs from clip shape");
  if (r.hr_clip.has_value() != r.hr_mask.has_value())
    throw ArgumentError("high-resolution clip and mask must be given together");
  const auto start = std::chrono::steady_clock::now();
  DubResult out;
  out.low_res = dub_clip(lsd, r.clip, r.mask, reference_frames(r.clip, r.landmarks, c.reference_exclusion),
                         r.original_units, r.new_units, c.dub_settings());
  if (srd && r.hr_clip) out.high_res = srd_refine(*srd, out.low_res, *r.hr_clip, *r.hr_mask, c.dub_settings(), c.seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.frames_per_second = secs > 0 ? r.clip.frames() / secs : 0.0;
  return out;
}

NoisyState<float> cmd_invert(const PipelineConfig& c, const Denoiser<float>& lsd, const Clip& clip,
                             const RegionMask& mask, const std::vector<LandmarkFrame>& landmarks,
                             const UnitSequence& original_units) {
  c.validate();
  if (original_units.size() != 2 * clip.frames()) throw ArgumentError("unit sequence must hold two units per frame");
  if (clip.frames() > c.section_length)
    throw ArgumentError("inversion covers a single section of at most " + std::to_string(c.section_length) + " frames");
  return invert_section(lsd, clip, mask, reference_frames(clip, landmarks, c.reference_exclusion), original_units,
                        c.dub_settings());
}

MetricReport cmd_evaluate(const PipelineConfig& c, const fs::path& original_root, const fs::path& generated_root) {
  c.validate();
  std::vector<VideoMetrics> rows;
  for (const auto& gen : read_dataset_manifest(generated_root)) {
    const std::string id = gen.dir.filename().string();
    const SampleFiles orig{original_root / id};
    if (!fs::exists(orig.clip() / "manifest.txt"))
      throw ArgumentError("generated sample " + id + " has no original counterpart in " + original_root.string());
    const Clip original = read_clip(orig.clip());
    const Clip generated = read_clip(gen.clip());
    BlobSpec spec = read_blob_spec(orig.spec());
    spec.image_size = generated.height();
    const UnitSequence units = read_units_file(gen.units(), spec.vocab());
    if (units.size() != 2 * generated.frames()) throw DataError("units of " + id + " do not match its frame count");
    VideoEvaluator eval;
    eval.identity = [](const Clip& x) { return synth_identity_embedder(x); };
    eval.mouth = [spec](const Clip& x) { return synth_mouth_embedder(x, spec); };
    eval.lse_window = c.lse_window;
    eval.temperature = c.softmax_temperature;
    rows.push_back(eval(id, original, generated, synth_audio_embedder(units, spec)));
  }
  return aggregate_report(std::move(rows));
}

CurationMode parse_curation_mode(const std::string& name) {
  if (name == "front") return CurationMode::front;
  if (name == "occluded") return CurationMode::occluded;
  throw ArgumentError("curation mode must be front or occluded, not '" + name + "'");
}

void cmd_curate(const PipelineConfig& c, CurationMode mode, const fs::path& manifest, std::ostream& out,
                std::ostream& warnings) {
  c.validate();
  std::ifstream is(manifest);
  if (!is) throw ConfigError("cannot open curation manifest " + manifest.string());
  std::vector<PoseVideo> poses;
  std::vector<OcclusionVideo> occlusions;
  for (std::string line; std::getline(is, line);) {
    std::istringstream ls(line);
    std::string id, path;
    if (!(ls >> id) || id[0] == '#') continue;
    if (!(ls >> path)) throw ConfigError("manifest line for " + id + " lacks a stream path");
    const fs::path stream = fs::path(path).is_absolute() ? fs::path(path) : manifest.parent_path() / path;
    try {
      std::ifstream ss(stream);
      if (!ss) throw DataError("cannot open " + stream.string());
      if (mode == CurationMode::front) poses.push_back(read_pose_stream(ss, id));
      else occlusions.push_back(read_occlusion_stream(ss, id));
    } catch (const DataError& e) {
      warnings << "warning: skipping " << id << ": " << e.what() << '\n';
    }
  }
  if (mode == CurationMode::front) write_low_angle_results(out, select_low_angle(poses, c.low_angle));
  else write_occlusion_records(out, select_occluded(occlusions, c.occlusion));
}

void cmd_make_synthetic(const PipelineConfig& c, const fs::path& root) {
  SyntheticDatasetOptions o = c.synthetic;
  o.seed = c.seed;
  make_synthetic_dataset(root, o);
}

}  // namespace edidub
