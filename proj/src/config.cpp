#include "edidub/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "edidub/kv.hpp"

namespace edidub {

PipelineConfig PipelineConfig::named(const std::string& name) {
  PipelineConfig c;
  if (name == "desk") return c;
  if (name != "paper") throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
  c.preset = "paper";
  c.lsd = DenoiserConfig::lsd_paper();
  c.srd = DenoiserConfig::srd_paper();
  c.lsd_train = TrainConfig::paper();
  c.srd_train = TrainConfig::paper();
  c.srd_augmentation = SrdAugmentation::paper();
  c.checkpoint_every = 10000;
  c.window_size = 24;
  c.window_step = 12;
  c.lse_window = 15;
  c.synthetic.frames = 125;
  c.synthetic.image_size = 64;
  c.synthetic.hr_size = 224;
  c.synthetic.vocab = 200;
  return c;
}

namespace {

bool set_train_field(TrainConfig& t, long& steps, const std::string& f, const std::vector<std::string>& v) {
  if (f == "peak_lr") t.peak_lr = kv_double(f, v);
  else if (f == "min_lr") t.min_lr = kv_double(f, v);
  else if (f == "warmup") t.warmup_steps = kv_long(f, v);
  else if (f == "total") t.total_steps = kv_long(f, v);
  else if (f == "batch") t.batch_size = kv_int(f, v);
  else if (f == "ema") t.ema_decay = kv_double(f, v);
  else if (f == "weight_decay") t.weight_decay = kv_double(f, v);
  else if (f == "flip") t.flip_probability = kv_double(f, v);
  else if (f == "condition_drop") t.condition_drop_probability = kv_double(f, v);
  else if (f == "steps") steps = kv_long(f, v);
  else return false;
  return true;
}

void write_train(std::ostream& os, const std::string& p, const TrainConfig& t, long steps) {
  os << p << "peak_lr " << t.peak_lr << '\n'
     << p << "min_lr " << t.min_lr << '\n'
     << p << "warmup " << t.warmup_steps << '\n'
     << p << "total " << t.total_steps << '\n'
     << p << "batch " << t.batch_size << '\n'
     << p << "ema " << t.ema_decay << '\n'
     << p << "weight_decay " << t.weight_decay << '\n'
     << p << "flip " << t.flip_probability << '\n'
     << p << "condition_drop " << t.condition_drop_probability << '\n'
     << p << "steps " << steps << '\n';
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::vector<std::string>& v) {
  const auto dot = key.find('.');
  const std::string group = dot == std::string::npos ? "" : key.substr(0, dot);
  const std::string f = dot == std::string::npos ? key : key.substr(dot + 1);
  bool known = true;
  if (key == "preset") *this = named(kv_single(key, v));
  else if (key == "seed") seed = std::uint64_t(kv_long(key, v));
  else if (key == "checkpoint_every") checkpoint_every = kv_long(key, v);
  else if (key == "reference_exclusion") reference_exclusion = kv_int(key, v);
  else if (group == "lsd") known = set_denoiser_field(lsd, f, v);
  else if (group == "srd") known = set_denoiser_field(srd, f, v);
  else if (group == "lsd_train") known = set_train_field(lsd_train, lsd_steps, f, v);
  else if (group == "srd_train") known = set_train_field(srd_train, srd_steps, f, v);
  else if (group == "srd_aug") {
    if (f == "lr_min") srd_augmentation.lr_min = kv_int(key, v);
    else if (f == "lr_max") srd_augmentation.lr_max = kv_int(key, v);
    else if (f == "replace_p") srd_augmentation.predecessor_probability = kv_double(key, v);
    else known = false;
  } else if (group == "schedule") {
    if (f == "train_steps") schedule_train_steps = kv_int(key, v);
    else if (f == "inference_steps") schedule_inference_steps = kv_int(key, v);
    else known = false;
  } else if (group == "dub") {
    if (f == "guidance") guidance_scale = kv_double(key, v);
    else if (f == "window") window_size = kv_int(key, v);
    else if (f == "window_step") window_step = kv_int(key, v);
    else if (f == "section") section_length = kv_int(key, v);
    else if (f == "overlap") section_overlap = kv_int(key, v);
    else if (f == "clamp_intermediate") clamp_intermediate = kv_bool(key, v);
    else if (f == "srd_start") srd_start = kv_int(key, v);
    else known = false;
  } else if (group == "eval") {
    if (f == "lse_window") lse_window = kv_int(key, v);
    else if (f == "temperature") softmax_temperature = kv_double(key, v);
    else known = false;
  } else if (group == "curate") {
    if (f == "max_angle") low_angle.max_angle = kv_double(key, v);
    else if (f == "min_duration") low_angle.min_duration = kv_double(key, v);
    else if (f == "pose_step") low_angle.frame_step = kv_int(key, v);
    else if (f == "occlusion_threshold") occlusion.threshold = kv_int(key, v);
    else if (f == "occlusion_step") occlusion.frame_step = kv_int(key, v);
    else if (f == "early_stop") occlusion.early_stop_total = kv_int(key, v);
    else known = false;
  } else if (group == "synthetic") {
    if (f == "count") synthetic.count = kv_int(key, v);
    else if (f == "frames") synthetic.frames = kv_int(key, v);
    else if (f == "size") synthetic.image_size = kv_int(key, v);
    else if (f == "hr_size") synthetic.hr_size = kv_int(key, v);
    else if (f == "vocab") synthetic.vocab = kv_int(key, v);
    else known = false;
  } else {
    known = false;
  }
  if (!known) throw ConfigError("unknown configuration key '" + key + "'");
}

void PipelineConfig::set_assignment(const std::string& a) {
  const auto eq = a.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + a + "' is not of the form key=value");
  std::vector<std::string> values;
  std::stringstream ss(a.substr(eq + 1));
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) values.push_back(item);
  set(a.substr(0, eq), values);
}

void PipelineConfig::validate() const {
  auto wrap = [](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string(what) + ": " + e.what());
    }
  };
  wrap("lsd", [&] { lsd.validate(); });
  wrap("srd", [&] { srd.validate(); });
  wrap("lsd_train", [&] { lsd_train.validate(); });
  wrap("srd_train", [&] { srd_train.validate(); });
  if (!lsd.conditioned()) throw ConfigError("lsd.unit_vocab must be positive");
  if (srd.conditioned()) throw ConfigError("srd.unit_vocab must be 0 (the SRD is unconditioned)");
  if (lsd.in_channels != 2 * lsd.out_channels || srd.in_channels != 2 * srd.out_channels)
    throw ConfigError("denoisers take the noisy clip plus one conditioning clip of the same channel count");
  if (srd_augmentation.lr_min < 1 || srd_augmentation.lr_max < srd_augmentation.lr_min)
    throw ConfigError("srd_aug sizes must satisfy 1 <= lr_min <= lr_max");
  if (srd_augmentation.predecessor_probability < 0 || srd_augmentation.predecessor_probability > 1)
    throw ConfigError("srd_aug.replace_p must lie in [0, 1]");
  if (schedule_inference_steps < 1 || schedule_train_steps < schedule_inference_steps)
    throw ConfigError("schedule needs 1 <= inference_steps <= train_steps");
  if (guidance_scale < 0) throw ConfigError("dub.guidance must be nonnegative");
  if (window_size < 1 || window_step < 1 || window_step > window_size)
    throw ConfigError("dub windows need 1 <= window_step <= window");
  if (section_overlap < 0 || section_overlap >= section_length)
    throw ConfigError("dub sections need 0 <= overlap < section");
  if (srd_start < 1 || srd_start > schedule_train_steps)
    throw ConfigError("dub.srd_start must lie in [1, schedule.train_steps]");
  if (lse_window < 0 || softmax_temperature <= 0) throw ConfigError("eval settings out of range");
  if (low_angle.frame_step < 1 || occlusion.frame_step < 1) throw ConfigError("curation frame steps must be positive");
  if (checkpoint_every < 0 || reference_exclusion < 0) throw ConfigError("negative checkpoint interval or exclusion");
}

DiffusionSchedule PipelineConfig::schedule() const {
  return build_cosine_schedule(schedule_train_steps, schedule_inference_steps);
}

DubSettings PipelineConfig::dub_settings() const {
  DubSettings s;
  s.schedule = schedule();
  s.guidance.scale = guidance_scale;
  s.window_size = window_size;
  s.window_step = window_step;
  s.section_length = section_length;
  s.section_overlap = section_overlap;
  s.clamp_intermediate = clamp_intermediate;
  s.srd_start = srd_start;
  return s;
}

bool PipelineConfig::operator==(const PipelineConfig& o) const {
  std::ostringstream a, b;
  write_pipeline_config(a, *this);
  write_pipeline_config(b, o);
  return a.str() == b.str();
}

void write_pipeline_config(std::ostream& os, const PipelineConfig& c) {
  const auto old = os.precision(17);
  os << "preset " << c.preset << '\n' << "seed " << c.seed << '\n';
  write_denoiser_config(os, c.lsd, "lsd.");
  write_denoiser_config(os, c.srd, "srd.");
  write_train(os, "lsd_train.", c.lsd_train, c.lsd_steps);
  write_train(os, "srd_train.", c.srd_train, c.srd_steps);
  os << "srd_aug.lr_min " << c.srd_augmentation.lr_min << '\n'
     << "srd_aug.lr_max " << c.srd_augmentation.lr_max << '\n'
     << "srd_aug.replace_p " << c.srd_augmentation.predecessor_probability << '\n'
     << "checkpoint_every " << c.checkpoint_every << '\n'
     << "reference_exclusion " << c.reference_exclusion << '\n'
     << "schedule.train_steps " << c.schedule_train_steps << '\n'
     << "schedule.inference_steps " << c.schedule_inference_steps << '\n'
     << "dub.guidance " << c.guidance_scale << '\n'
     << "dub.window " << c.window_size << '\n'
     << "dub.window_step " << c.window_step << '\n'
     << "dub.section " << c.section_length << '\n'
     << "dub.overlap " << c.section_overlap << '\n'
     << "dub.clamp_intermediate " << (c.clamp_intermediate ? "true" : "false") << '\n'
     << "dub.srd_start " << c.srd_start << '\n'
     << "eval.lse_window " << c.lse_window << '\n'
     << "eval.temperature " << c.softmax_temperature << '\n'
     << "curate.max_angle " << c.low_angle.max_angle << '\n'
     << "curate.min_duration " << c.low_angle.min_duration << '\n'
     << "curate.pose_step " << c.low_angle.frame_step << '\n'
     << "curate.occlusion_threshold " << c.occlusion.threshold << '\n'
     << "curate.occlusion_step " << c.occlusion.frame_step << '\n'
     << "curate.early_stop " << c.occlusion.early_stop_total << '\n'
     << "synthetic.count " << c.synthetic.count << '\n'
     << "synthetic.frames " << c.synthetic.frames << '\n'
     << "synthetic.size " << c.synthetic.image_size << '\n'
     << "synthetic.hr_size " << c.synthetic.hr_size << '\n'
     << "synthetic.vocab " << c.synthetic.vocab << '\n';
  os.precision(old);
}

namespace {

void apply_lines(PipelineConfig& c, std::istream& is) {
  bool first = true;
  for (const auto& [key, values] : read_key_values(is)) {
    if (key == "preset" && !first) throw ConfigError("'preset' must be the first key of a configuration file");
    c.set(key, values);
    first = false;
  }
}

}  // namespace

PipelineConfig read_pipeline_config(std::istream& is) {
  PipelineConfig c;
  apply_lines(c, is);
  c.validate();
  return c;
}

PipelineConfig read_pipeline_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open configuration file " + path);
  return read_pipeline_config(is);
}

PipelineConfig resolve_pipeline_config(const std::string& path, const std::string& preset,
                                       const std::vector<std::string>& overrides) {
  PipelineConfig c = PipelineConfig::named(preset.empty() ? "desk" : preset);
  std::string file = path;
  if (file.empty())
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) file = env;
  if (!file.empty()) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot open configuration file " + file);
    apply_lines(c, is);
  }
  for (const auto& o : overrides) c.set_assignment(o);
  c.validate();
  return c;
}

}  // namespace edidub
