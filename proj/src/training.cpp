#include "edidub/training.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "edidub/conditioning.hpp"
#include "edidub/kv.hpp"
#include "edidub/resample.hpp"

namespace edidub {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.peak_lr = 5e-4;
  c.min_lr = 5e-5;
  c.warmup_steps = 200;
  c.total_steps = 4000;
  c.batch_size = 8;
  // A few thousand steps: a 0.999 average would still carry a visible share
  // of the initial weights at the end of the run.
  c.ema_decay = 0.995;
  return c;
}

void TrainConfig::validate() const {
  require(min_lr > 0.0 && min_lr <= peak_lr, "learning rates must satisfy 0 < min_lr <= peak_lr");
  require(warmup_steps >= 0 && warmup_steps < total_steps, "warmup must be shorter than the run");
  require(batch_size >= 1, "batch size must be positive");
  require(ema_decay >= 0.0 && ema_decay < 1.0, "EMA decay must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight decay must be non-negative");
  require(flip_probability >= 0.0 && flip_probability <= 1.0, "flip probability outside [0, 1]");
  require(condition_drop_probability >= 0.0 && condition_drop_probability <= 1.0,
          "condition dropout probability outside [0, 1]");
}

double lr_at(long step, const TrainConfig& c) {
  require(step >= 0 && step <= c.total_steps, "learning-rate step out of range");
  if (step <= c.warmup_steps) {
    if (c.warmup_steps == 0) return c.peak_lr;
    return c.peak_lr * double(step) / double(c.warmup_steps);
  }
  const double progress = double(step - c.warmup_steps) / double(c.total_steps - c.warmup_steps);
  return c.min_lr + 0.5 * (c.peak_lr - c.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::step(Vector<float>& params, const Vector<float>& grads, double lr) {
  if (grads.size() != params.size()) throw ContractError("gradient and parameter counts differ");
  if (m.size() != params.size()) {
    m = Vector<float>::Zero(params.size());
    v = Vector<float>::Zero(params.size());
  }
  ++t;
  const float b1 = float(beta1), b2 = float(beta2);
  m = b1 * m + (1.0f - b1) * grads;
  v = b2 * v + (1.0f - b2) * grads.cwiseProduct(grads);
  const float c1 = float(1.0 - std::pow(beta1, double(t)));
  const float c2 = float(1.0 - std::pow(beta2, double(t)));
  const float lr_f = float(lr), eps = float(epsilon), wd = float(weight_decay);
  params.array() -= lr_f * ((m.array() / c1) / ((v.array() / c2).sqrt() + eps) + wd * params.array());
}

TrainState::TrainState(const DenoiserConfig& config, std::uint64_t seed)
    : model(config, seed), ema(model.parameters().values()), rng(seed ^ 0x9e3779b97f4a7c15ULL) {}

namespace {

Clip gaussian_like(const Shape4& shape, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  Clip out(shape);
  for (long i = 0; i < out.size(); ++i) out.values()[i] = n(rng);
  return out;
}

StepResult apply_update(TrainState& state, const Vector<float>& grads, double loss_sum, int batch,
                        const TrainConfig& config) {
  const double lr = lr_at(std::min(state.step + 1, config.total_steps), config);
  state.optimizer.weight_decay = config.weight_decay;
  state.optimizer.step(state.model.parameters().values(), grads, lr);
  ema_update(state.ema, state.model.parameters().values(), config.ema_decay);
  ++state.step;
  return StepResult{loss_sum / batch, lr};
}

}  // namespace

StepResult train_step_lsd(TrainState& state, const std::vector<LsdExample>& batch,
                          const TrainConfig& config, const DiffusionSchedule& schedule) {
  require(!batch.empty(), "empty batch");
  for (size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    require(ex.mask.matches(ex.clip.shape()) && ex.reference.shape() == ex.clip.shape(),
            "batch item shapes are inconsistent");
    if (ex.mask.empty_region())
      throw DataError("batch item " + std::to_string(i) + " has an empty mask region");
  }
  auto& rng = state.rng;
  const auto& model = state.model;
  Vector<float> grads = Vector<float>::Zero(model.num_parameters());
  std::bernoulli_distribution flip(config.flip_probability);
  std::uniform_int_distribution<int> pick_t(1, schedule.num_train_steps);
  double loss_sum = 0.0;
  for (const auto& ex : batch) {
    const bool flipped = flip(rng);
    const Clip clip = flipped ? flip_horizontal(ex.clip) : ex.clip;
    const RegionMask mask = flipped ? flip_horizontal(ex.mask) : ex.mask;
    const Clip reference = flipped ? flip_horizontal(ex.reference) : ex.reference;
    const UnitSequence units = model.config().conditioned()
                                   ? drop_condition(ex.units, config.condition_drop_probability, rng)
                                   : ex.units;
    const int t = pick_t(rng);
    const Clip noise = gaussian_like(clip.shape(), rng);
    const auto noisy = masked_forward_noise(clip, mask, t, noise, schedule);
    DenoiserCache<float> cache;
    const Clip pred = model.forward(concat_channels(noisy.x, reference), t, units, &cache);
    loss_sum += masked_ddpm_loss(pred, noise, mask);
    Clip g = masked_ddpm_loss_grad(pred, noise, mask);
    g.values() /= float(batch.size());
    model.backward(cache, g, grads);
  }
  return apply_update(state, grads, loss_sum, int(batch.size()), config);
}

SrdDraw draw_srd_augmentation(int frames, const SrdAugmentation& aug, std::mt19937_64& rng) {
  require(aug.lr_min >= 1 && aug.lr_min <= aug.lr_max, "invalid low-resolution size range");
  std::uniform_int_distribution<int> size(aug.lr_min, aug.lr_max);
  std::bernoulli_distribution replace(aug.predecessor_probability);
  SrdDraw d;
  d.lr_size = size(rng);
  d.source_frame.resize(frames);
  for (int i = 0; i < frames; ++i) d.source_frame[i] = (i > 0 && replace(rng)) ? i - 1 : i;
  return d;
}

Clip degrade_bicubic(const Clip& target, int lr_size) {
  const Clip low = resize_bicubic(target, lr_size, lr_size);
  return resize_bicubic(low, target.height(), target.width());
}

SrdTrainExample make_srd_example(const Clip& target, const RegionMask& mask, std::mt19937_64& rng,
                                 const SrdAugmentation& aug) {
  require(mask.matches(target.shape()), "mask shape differs from target shape");
  require(aug.lr_max < std::min(target.height(), target.width()),
          "low-resolution sizes must be below the target size");
  const SrdDraw d = draw_srd_augmentation(target.frames(), aug, rng);
  const Clip degraded = degrade_bicubic(target, d.lr_size);
  SrdTrainExample ex;
  ex.target = target;
  ex.lr_size = d.lr_size;
  ex.lr_conditioning = Clip(target.shape());
  for (int i = 0; i < target.frames(); ++i)
    ex.lr_conditioning.set_frames(i, degraded.slice_frames(d.source_frame[i], d.source_frame[i] + 1));
  ex.masked_hr = composite(Clip(target.shape()), target, mask);
  return ex;
}

StepResult train_step_srd(TrainState& state, const std::vector<SrdTrainExample>& batch,
                          const TrainConfig& config, const DiffusionSchedule& schedule) {
  require(!batch.empty(), "empty batch");
  for (const auto& ex : batch)
    require(ex.lr_conditioning.shape() == ex.target.shape(), "conditioning shape differs from target");
  auto& rng = state.rng;
  const auto& model = state.model;
  Vector<float> grads = Vector<float>::Zero(model.num_parameters());
  std::bernoulli_distribution flip(config.flip_probability);
  std::uniform_int_distribution<int> pick_t(1, schedule.num_train_steps);
  const UnitSequence none{{}, 0};
  double loss_sum = 0.0;
  for (const auto& ex : batch) {
    const bool flipped = flip(rng);
    const Clip target = flipped ? flip_horizontal(ex.target) : ex.target;
    const Clip cond = flipped ? flip_horizontal(ex.lr_conditioning) : ex.lr_conditioning;
    const RegionMask all = RegionMask::ones(target.frames(), target.height(), target.width());
    const int t = pick_t(rng);
    const Clip noise = gaussian_like(target.shape(), rng);
    const auto noisy = masked_forward_noise(target, all, t, noise, schedule);
    DenoiserCache<float> cache;
    const Clip pred = model.forward(concat_channels(noisy.x, cond), t, none, &cache);
    loss_sum += masked_ddpm_loss(pred, noise, all);
    Clip g = masked_ddpm_loss_grad(pred, noise, all);
    g.values() /= float(batch.size());
    model.backward(cache, g, grads);
  }
  return apply_update(state, grads, loss_sum, int(batch.size()), config);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::filesystem::path manifest_path(const std::filesystem::path& blob) {
  auto p = blob;
  p.replace_extension(".manifest");
  return p;
}

void write_floats(const std::filesystem::path& path, const Vector<float>& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(float)));
  if (!os) throw DataError("failed writing " + path.string());
}

Vector<float> read_floats(const std::filesystem::path& path, long count) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw DataError("cannot read " + path.string());
  if (long(is.tellg()) != count * long(sizeof(float)))
    throw DataError(path.string() + " holds the wrong number of values");
  is.seekg(0);
  Vector<float> v(count);
  is.read(reinterpret_cast<char*>(v.data()), std::streamsize(count * sizeof(float)));
  return v;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

void write_parameters(const std::filesystem::path& blob, const nn::ParameterSet<float>& params,
                      const Vector<float>& values) {
  if (values.size() != params.size()) throw ContractError("parameter vector does not match layout");
  write_floats(blob, values);
  std::ofstream os(manifest_path(blob));
  for (const auto& e : params.entries()) os << e.name << ' ' << e.offset << ' ' << e.size << ' ' << join(e.shape) << '\n';
  if (!os) throw DataError("failed writing manifest for " + blob.string());
}

Vector<float> read_parameters(const std::filesystem::path& blob, const nn::ParameterSet<float>& layout) {
  std::ifstream ms(manifest_path(blob));
  if (!ms) throw DataError("missing manifest for " + blob.string());
  std::string line;
  size_t i = 0;
  const auto& entries = layout.entries();
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    long offset = 0, size = 0;
    ls >> name >> offset >> size;
    if (i >= entries.size() || entries[i].name != name || entries[i].offset != offset || entries[i].size != size)
      throw DataError("checkpoint manifest does not match the model layout at '" + name + "'");
    ++i;
  }
  if (i != entries.size()) throw DataError("checkpoint manifest is missing parameters");
  return read_floats(blob, layout.size());
}

void write_denoiser_config(std::ostream& os, const DenoiserConfig& c, const std::string& prefix) {
  os << prefix << "input_frames " << c.input_frames << '\n'
     << prefix << "spatial_size " << c.spatial_size << '\n'
     << prefix << "in_channels " << c.in_channels << '\n'
     << prefix << "out_channels " << c.out_channels << '\n'
     << prefix << "base_channels " << c.base_channels << '\n'
     << prefix << "channel_multipliers " << join(c.channel_multipliers) << '\n'
     << prefix << "resblocks_per_stage " << c.resblocks_per_stage << '\n'
     << prefix << "attention_resolutions " << join(c.attention_resolutions) << '\n'
     << prefix << "attention_heads " << c.attention_heads << '\n'
     << prefix << "time_embed_dim " << c.time_embed_dim << '\n'
     << prefix << "norm_groups " << c.norm_groups << '\n'
     << prefix << "unit_vocab " << c.unit_vocab << '\n'
     << prefix << "unit_embed_dim " << c.unit_embed_dim << '\n'
     << prefix << "film_kernel " << c.film_kernel << '\n';
}

bool set_denoiser_field(DenoiserConfig& c, const std::string& key, const std::vector<std::string>& values) {
  if (key == "input_frames") c.input_frames = kv_int(key, values);
  else if (key == "spatial_size") c.spatial_size = kv_int(key, values);
  else if (key == "in_channels") c.in_channels = kv_int(key, values);
  else if (key == "out_channels") c.out_channels = kv_int(key, values);
  else if (key == "base_channels") c.base_channels = kv_int(key, values);
  else if (key == "channel_multipliers") c.channel_multipliers = kv_ints(key, values);
  else if (key == "resblocks_per_stage") c.resblocks_per_stage = kv_int(key, values);
  else if (key == "attention_resolutions") c.attention_resolutions = kv_ints(key, values);
  else if (key == "attention_heads") c.attention_heads = kv_int(key, values);
  else if (key == "time_embed_dim") c.time_embed_dim = kv_int(key, values);
  else if (key == "norm_groups") c.norm_groups = kv_int(key, values);
  else if (key == "unit_vocab") c.unit_vocab = kv_int(key, values);
  else if (key == "unit_embed_dim") c.unit_embed_dim = kv_int(key, values);
  else if (key == "film_kernel") c.film_kernel = kv_int(key, values);
  else return false;
  return true;
}

DenoiserConfig read_denoiser_config(std::istream& is) {
  DenoiserConfig c;
  for (const auto& [key, values] : read_key_values(is))
    if (!set_denoiser_field(c, key, values)) throw ConfigError("unknown denoiser config key '" + key + "'");
  return c;
}

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "config.txt");
    write_denoiser_config(os, state.model.config());
  }
  const auto& ps = state.model.parameters();
  write_parameters(dir / "model.bin", ps, ps.values());
  write_parameters(dir / "ema.bin", ps, state.ema);
  Vector<float> moments(2 * ps.size());
  if (state.optimizer.m.size() == ps.size()) {
    moments.head(ps.size()) = state.optimizer.m;
    moments.tail(ps.size()) = state.optimizer.v;
  } else {
    moments.setZero();
  }
  write_floats(dir / "optimizer.bin", moments);
  std::ofstream os(dir / "state.txt");
  os << "step " << state.step << '\n' << "adam_step " << state.optimizer.t << '\n' << "rng " << state.rng << '\n';
  if (!os) throw DataError("failed writing checkpoint state");
}

namespace {

DenoiserConfig read_config_file(const std::filesystem::path& dir) {
  std::ifstream is(dir / "config.txt");
  if (!is) throw ConfigError("checkpoint " + dir.string() + " has no config.txt");
  return read_denoiser_config(is);
}

}  // namespace

TrainState load_checkpoint(const std::filesystem::path& dir) {
  TrainState state(read_config_file(dir), 0);
  auto& ps = state.model.parameters();
  ps.values() = read_parameters(dir / "model.bin", ps);
  state.ema = read_parameters(dir / "ema.bin", ps);
  const Vector<float> moments = read_floats(dir / "optimizer.bin", 2 * ps.size());
  std::ifstream is(dir / "state.txt");
  if (!is) throw DataError("checkpoint " + dir.string() + " has no state.txt");
  std::string key;
  while (is >> key) {
    if (key == "step") is >> state.step;
    else if (key == "adam_step") is >> state.optimizer.t;
    else if (key == "rng") is >> state.rng;
    else throw DataError("unknown checkpoint state key '" + key + "'");
  }
  if (state.optimizer.t > 0) {
    state.optimizer.m = moments.head(ps.size());
    state.optimizer.v = moments.tail(ps.size());
  }
  return state;
}

Denoiser<float> load_inference_model(const std::filesystem::path& dir, bool use_ema) {
  Denoiser<float> model(read_config_file(dir), 0);
  auto& ps = model.parameters();
  ps.values() = read_parameters(dir / (use_ema ? "ema.bin" : "model.bin"), ps);
  return model;
}

}  // namespace edidub
