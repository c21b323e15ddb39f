#include "edidub/pipeline.hpp"

#include <ostream>

#include "edidub/conditioning.hpp"
#include "edidub/resample.hpp"

namespace edidub {

namespace fs = std::filesystem;

Clip gather_frames(const Clip& clip, const std::vector<int>& reference) {
  require(int(reference.size()) == clip.frames(), "one reference index per frame required");
  Clip out(clip.shape());
  for (int i = 0; i < clip.frames(); ++i) {
    require(reference[i] >= 0 && reference[i] < clip.frames(), "reference index out of range");
    out.set_frames(i, clip.slice_frames(reference[i], reference[i] + 1));
  }
  return out;
}

LsdSample load_lsd_sample(const SampleFiles& files, int vocab, int exclusion_radius) {
  LsdSample s;
  s.clip = read_clip(files.clip());
  s.mask = read_mask(files.mask());
  s.units = read_units_file(files.units(), vocab);
  if (!s.mask.matches(s.clip.shape())) throw DataError("mask shape differs from clip in " + files.dir.string());
  if (s.units.size() != 2 * s.clip.frames()) throw DataError("unit count differs from 2 x frames in " + files.dir.string());
  const auto landmarks = read_landmarks_file(files.landmarks(), kBlobLipIndices);
  if (int(landmarks.size()) != s.clip.frames()) throw DataError("landmark count differs from frames in " + files.dir.string());
  s.reference = gather_frames(s.clip, select_reference_frames(landmarks, exclusion_radius));
  return s;
}

std::vector<LsdSample> load_lsd_dataset(const fs::path& root, int vocab, int exclusion_radius) {
  std::vector<LsdSample> out;
  for (const auto& f : read_dataset_manifest(root)) out.push_back(load_lsd_sample(f, vocab, exclusion_radius));
  return out;
}

LsdExample crop_example(const LsdSample& s, int frames, std::mt19937_64& rng) {
  require(frames >= 1 && frames <= s.clip.frames(), "crop longer than the sample");
  std::uniform_int_distribution<int> start(0, s.clip.frames() - frames);
  const int b = start(rng), e = b + frames;
  return LsdExample{s.clip.slice_frames(b, e), s.mask.slice_frames(b, e), s.reference.slice_frames(b, e),
                    s.units.slice_frames(b, e)};
}

std::vector<SrdSample> load_srd_dataset(const fs::path& root) {
  std::vector<SrdSample> out;
  for (const auto& f : read_dataset_manifest(root)) {
    SrdSample s{read_clip(f.hr()), read_mask(f.hr_mask())};
    if (!s.mask.matches(s.target.shape())) throw DataError("high-resolution mask mismatch in " + f.dir.string());
    out.push_back(std::move(s));
  }
  return out;
}

BlobSpec synthetic_spec(const SyntheticDatasetOptions& o, int index) {
  BlobSpec spec;
  spec.frames = o.frames;
  spec.image_size = o.image_size;
  spec.aperture_map = default_aperture_map(o.vocab);
  std::mt19937_64 rng(o.seed * 1000003ULL + std::uint64_t(index));
  spec.identity_hue = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return spec;
}

void make_synthetic_dataset(const fs::path& root, const SyntheticDatasetOptions& o) {
  require(o.count >= 1, "dataset needs at least one sample");
  std::vector<std::string> names;
  for (int i = 0; i < o.count; ++i) {
    const BlobSpec spec = synthetic_spec(o, i);
    std::mt19937_64 rng(o.seed * 7919ULL + std::uint64_t(i) * 104729ULL + 17);
    const UnitSequence units = random_unit_sequence(o.frames, o.vocab, rng);
    const auto r = render_blob_clip(spec, units);
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05d", i);
    const SampleFiles f{root / name};
    write_clip(f.clip(), r.clip);
    write_mask(f.mask(), r.mask);
    write_landmarks_file(f.landmarks(), r.landmarks);
    write_units_file(f.units(), units);
    write_blob_spec(f.spec(), spec);
    if (o.hr_size > 0) {
      BlobSpec hr = spec;
      hr.image_size = o.hr_size;
      const auto h = render_blob_clip(hr, units);
      write_clip(f.hr(), h.clip);
      write_mask(f.hr_mask(), h.mask);
    }
    names.push_back(name);
  }
  write_dataset_manifest(root, names);
}

namespace {

void after_step(TrainState& state, const StepResult& r, const TrainLoopOptions& o) {
  if (o.log) *o.log << state.step << ' ' << r.lr << ' ' << r.loss << '\n';
  if (o.on_step) o.on_step(state.step, r);
  if (!o.checkpoint_dir.empty() && o.checkpoint_every > 0 && state.step % o.checkpoint_every == 0)
    save_checkpoint(o.checkpoint_dir, state);
}

}  // namespace

void train_lsd(TrainState& state, const std::vector<LsdSample>& data, const TrainConfig& config,
               const DiffusionSchedule& schedule, const TrainLoopOptions& o) {
  require(!data.empty(), "empty training set");
  config.validate();
  const int frames = state.model.config().input_frames;
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  while (state.step < o.steps) {
    std::vector<LsdExample> batch;
    for (int b = 0; b < config.batch_size; ++b) batch.push_back(crop_example(data[pick(state.rng)], frames, state.rng));
    after_step(state, train_step_lsd(state, batch, config, schedule), o);
  }
  if (!o.checkpoint_dir.empty()) save_checkpoint(o.checkpoint_dir, state);
}

void train_srd(TrainState& state, const std::vector<SrdSample>& data, const TrainConfig& config,
               const DiffusionSchedule& schedule, const SrdAugmentation& aug, const TrainLoopOptions& o) {
  require(!data.empty(), "empty training set");
  config.validate();
  const int frames = state.model.config().input_frames;
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  while (state.step < o.steps) {
    std::vector<SrdTrainExample> batch;
    for (int b = 0; b < config.batch_size; ++b) {
      const auto& s = data[pick(state.rng)];
      require(s.target.frames() >= frames, "sample shorter than the SRD window");
      std::uniform_int_distribution<int> start(0, s.target.frames() - frames);
      const int t0 = start(state.rng);
      batch.push_back(make_srd_example(s.target.slice_frames(t0, t0 + frames), s.mask.slice_frames(t0, t0 + frames),
                                       state.rng, aug));
    }
    after_step(state, train_step_srd(state, batch, config, schedule), o);
  }
  if (!o.checkpoint_dir.empty()) save_checkpoint(o.checkpoint_dir, state);
}

WindowPredictor<float> lsd_window_predictor(const Denoiser<float>& model, const Clip& reference) {
  return [&model, &reference](const Clip& x, int t, const UnitSequence& units, FrameRange range) {
    const Clip ref = range.first == 0 && range.second == reference.frames()
                         ? reference
                         : reference.slice_frames(range.first, range.second);
    return predict_noise(model, concat_channels(x, ref), t, units);
  };
}

namespace {

WindowPlan section_windows(int frames, const DubSettings& s) {
  return plan_windows(frames, s.window_size, std::min(s.window_step, s.window_size));
}

}  // namespace

NoisyState<float> invert_section(const Denoiser<float>& model, const Clip& section, const RegionMask& mask,
                                 const Clip& reference, const UnitSequence& original_units,
                                 const DubSettings& settings) {
  const auto predictor = multidiffusion_predictor(lsd_window_predictor(model, reference),
                                                  section_windows(section.frames(), settings));
  return ddim_invert<float>(predictor, section, mask, original_units, settings.schedule, settings.clamp_intermediate);
}

Clip dub_section(const Denoiser<float>& model, const Clip& section, const RegionMask& mask, const Clip& reference,
                 const UnitSequence& original_units, const UnitSequence& new_units, const DubSettings& settings) {
  require(reference.shape() == section.shape(), "reference frames must match the section");
  require(original_units.size() == 2 * section.frames() && new_units.size() == 2 * section.frames(),
          "unit sequences must hold two units per frame");
  if (mask.empty_region()) return section;
  const auto predictor = multidiffusion_predictor(lsd_window_predictor(model, reference),
                                                  section_windows(section.frames(), settings));
  const NoisyState<float> latent =
      ddim_invert<float>(predictor, section, mask, original_units, settings.schedule, settings.clamp_intermediate);
  return ddim_sample<float>(predictor, latent, new_units, settings.schedule, settings.guidance,
                            settings.clamp_intermediate);
}

Clip dub_clip(const Denoiser<float>& model, const Clip& clip, const RegionMask& mask, const Clip& reference,
              const UnitSequence& original_units, const UnitSequence& new_units, const DubSettings& settings) {
  require(mask.matches(clip.shape()), "mask shape differs from clip shape");
  require(reference.shape() == clip.shape(), "reference frames must match the clip");
  if (original_units.size() != 2 * clip.frames() || new_units.size() != 2 * clip.frames())
    throw ArgumentError("unit sequences must hold two units per clip frame");
  const SectionPlan plan = plan_sections(clip.frames(), settings.section_length, settings.section_overlap);
  return dub_section_sequential(clip, mask, plan, [&](const Clip& section, const RegionMask& m, FrameRange r) {
    return dub_section(model, section, m, reference.slice_frames(r.first, r.second), original_units.slice_frames(r.first, r.second),
                       new_units.slice_frames(r.first, r.second), settings);
  });
}

Clip srd_refine(const Denoiser<float>& srd, const Clip& low_res, const Clip& hr_original, const RegionMask& hr_mask,
                const DubSettings& settings, std::uint64_t seed) {
  require(hr_mask.matches(hr_original.shape()), "high-resolution mask mismatch");
  require(low_res.frames() == hr_original.frames(), "frame counts differ between resolutions");
  if (hr_mask.empty_region()) return hr_original;
  const Clip cond = resize_bicubic(low_res, hr_original.height(), hr_original.width());
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Clip noise(hr_original.shape());
  for (long i = 0; i < noise.size(); ++i) noise.values()[i] = n(rng);
  require(settings.srd_start >= settings.schedule.inference_steps.front(), "SRD start precedes every inference step");
  DiffusionSchedule schedule = settings.schedule;
  std::erase_if(schedule.inference_steps, [&](int t) { return t > settings.srd_start; });
  const int t_start = schedule.inference_steps.back();
  // Starting from pure noise lets the first steps invent structure that the
  // conditioning already fixes; a partly noised upsampling keeps it. The SRD is
  // trained with noise over the whole frame, so the whole frame is sampled and
  // the original is pasted back only once at the end.
  Clip start(cond.shape());
  start.values() = float(schedule.signal(t_start)) * cond.values() + float(schedule.noise(t_start)) * noise.values();
  const RegionMask everywhere = RegionMask::ones(hr_mask.frames(), hr_mask.height(), hr_mask.width());
  const NoisyState<float> init{start, t_start, everywhere, hr_original};
  const int window = std::min(srd.config().input_frames, hr_original.frames());
  const auto predictor = multidiffusion_predictor<float>(
      [&srd, &cond](const Clip& x, int t, const UnitSequence& u, FrameRange r) {
        return predict_noise(srd, concat_channels(x, cond.slice_frames(r.first, r.second)), t, u);
      },
      plan_windows(hr_original.frames(), window, std::max(1, window / 2)));
  // The start is not an inverted latent, so nothing is lost by clamping the
  // intermediate estimates here.
  const Clip sampled = ddim_sample<float>(predictor, init, UnitSequence{{}, 0}, schedule, GuidanceConfig{0.0}, true);
  return composite(sampled, hr_original, hr_mask);
}

}  // namespace edidub
