#include "edidub/denoiser.hpp"

#include <algorithm>
#include <cmath>

namespace edidub {

// ---------------------------------------------------------------------------
// Configuration

DenoiserConfig DenoiserConfig::lsd_paper() {
  DenoiserConfig c;
  c.input_frames = 25;
  c.spatial_size = 64;
  c.base_channels = 64;
  c.channel_multipliers = {1, 2, 4, 8};
  c.attention_resolutions = {16, 8};
  c.time_embed_dim = 256;
  c.norm_groups = 32;
  c.unit_vocab = 200;
  c.unit_embed_dim = 128;
  return c;
}

DenoiserConfig DenoiserConfig::srd_paper() {
  DenoiserConfig c;
  c.input_frames = 5;
  c.spatial_size = 224;
  c.base_channels = 64;
  c.channel_multipliers = {1, 1, 2, 2, 4, 4};
  c.attention_resolutions = {};
  c.time_embed_dim = 256;
  c.norm_groups = 32;
  c.unit_vocab = 0;
  return c;
}

DenoiserConfig DenoiserConfig::lsd_desk() {
  DenoiserConfig c;
  c.input_frames = 8;
  c.spatial_size = 16;
  c.base_channels = 32;
  c.channel_multipliers = {1, 2};
  c.attention_resolutions = {};
  c.time_embed_dim = 64;
  c.norm_groups = 8;
  c.unit_vocab = 16;
  c.unit_embed_dim = 32;
  return c;
}

DenoiserConfig DenoiserConfig::srd_desk() {
  DenoiserConfig c;
  c.input_frames = 4;
  c.spatial_size = 48;
  c.base_channels = 16;
  c.channel_multipliers = {1, 1, 2};
  c.attention_resolutions = {};
  c.time_embed_dim = 64;
  c.norm_groups = 8;
  c.unit_vocab = 0;
  c.unit_embed_dim = 0;
  return c;
}

bool DenoiserConfig::attention_at(int resolution) const {
  return std::find(attention_resolutions.begin(), attention_resolutions.end(), resolution) !=
         attention_resolutions.end();
}

namespace {

int groups_for(int channels, int norm_groups) { return std::min(channels, norm_groups); }

void check_groups(int channels, int norm_groups) {
  const int g = groups_for(channels, norm_groups);
  if (g <= 0 || channels % g != 0)
    throw ArgumentError("GroupNorm: " + std::to_string(channels) + " channels not divisible into " +
                        std::to_string(g) + " groups");
}

}  // namespace

void DenoiserConfig::validate() const {
  require(input_frames > 0, "input_frames must be positive");
  require(in_channels > 0 && out_channels > 0, "channel counts must be positive");
  require(base_channels > 0, "base_channels must be positive");
  require(!channel_multipliers.empty(), "at least one stage is required");
  for (int m : channel_multipliers) require(m > 0, "channel multipliers must be positive");
  require(resblocks_per_stage >= 1, "at least one residual block per stage");
  require(time_embed_dim > 0 && time_embed_dim % 2 == 0, "time embedding dim must be positive and even");
  require(norm_groups > 0, "norm_groups must be positive");
  require(unit_vocab >= 0, "unit_vocab must be non-negative");
  require(!conditioned() || unit_embed_dim > 0, "unit_embed_dim must be positive when conditioned");
  require(film_kernel > 0 && film_kernel % 2 == 1, "FiLM kernel width must be odd");
  const int factor = 1 << (num_stages() - 1);
  require(spatial_size > 0 && spatial_size % factor == 0,
          "spatial_size must be divisible by 2^(stages-1)");
  require(attention_heads > 0, "attention_heads must be positive");

  check_groups(base_channels, norm_groups);
  int ch = base_channels;
  for (int l = 0; l < num_stages(); ++l) {
    const int out = stage_channels(l);
    check_groups(ch, norm_groups);
    check_groups(out, norm_groups);
    if (attention_at(spatial_size >> l))
      require(out % attention_heads == 0, "attention channels not divisible by heads");
    ch = out;
  }
  for (int l = num_stages() - 1; l >= 0; --l) {
    check_groups(ch + stage_channels(l), norm_groups);
    ch = stage_channels(l);
  }
  for (int r : attention_resolutions) {
    bool found = false;
    for (int l = 0; l < num_stages(); ++l) found |= (spatial_size >> l) == r;
    require(found, "attention resolution " + std::to_string(r) + " is not a U-Net level");
  }
}

int temporal_receptive_radius(const DenoiserConfig& cfg) {
  const int blocks = 2 * cfg.num_stages() * cfg.resblocks_per_stage + 1;
  const int temporal_convs = 1 + 2 * blocks + (cfg.num_stages() - 1) + 1;
  // the earliest modulation sits after the input conv and the first block's conv1
  return cfg.film_kernel / 2 + temporal_convs - 2;
}

// ---------------------------------------------------------------------------
// Residual block

namespace {

template <typename S>
RowMatrix<S> silu_rows(const RowMatrix<S>& x) {
  return (x.array() / (S(1) + (-x.array()).exp())).matrix();
}

template <typename S>
RowMatrix<S> silu_rows_backward(const RowMatrix<S>& x, const RowMatrix<S>& dy) {
  const auto sig = (S(1) / (S(1) + (-x.array()).exp())).eval();
  return (dy.array() * sig * (S(1) + x.array() * (S(1) - sig))).matrix();
}

}  // namespace

template <typename S>
ResBlock ResBlock::make(nn::ParameterSet<S>& ps, const std::string& name, int in, int out,
                        const DenoiserConfig& cfg) {
  ResBlock b;
  b.in_ch = in;
  b.out_ch = out;
  b.conditioned = cfg.conditioned();
  b.norm1 = nn::GroupNorm::make(ps, name + ".norm1", in, groups_for(in, cfg.norm_groups));
  b.conv1 = nn::Conv3d::make(ps, name + ".conv1", in, out);
  b.time_proj = nn::Linear::make(ps, name + ".time_proj", cfg.time_embed_dim, out);
  if (b.conditioned) {
    b.film = FilmProjector::make(ps, name + ".film", 2 * cfg.unit_embed_dim, out, cfg.film_kernel);
  } else {
    b.norm2 = nn::GroupNorm::make(ps, name + ".norm2", out, groups_for(out, cfg.norm_groups));
  }
  b.conv2 = nn::Conv3d::make(ps, name + ".conv2", out, out);
  b.has_skip_proj = in != out;
  if (b.has_skip_proj) b.skip = nn::Conv3d::make(ps, name + ".skip", in, out, 1, 1, 1);
  return b;
}

template <typename S>
void ResBlock::init(nn::ParameterSet<S>& ps, std::mt19937_64& rng) const {
  norm1.init(ps);
  conv1.init(ps, rng);
  time_proj.init(ps, rng);
  if (conditioned) {
    film.init(ps, rng, 0.1);
  } else {
    norm2.init(ps);
  }
  // conv2 starts at zero so each block begins as its skip path
  if (has_skip_proj) skip.init(ps, rng);
}

template <typename S>
Tensor<S> ResBlock::forward(const nn::ParameterSet<S>& ps, const Tensor<S>& x, const RowMatrix<S>& temb,
                            const RowMatrix<S>& cond, ResBlockCache<S>* cache) const {
  ResBlockCache<S> local;
  ResBlockCache<S>& c = cache ? *cache : local;
  const bool keep = cache != nullptr;

  Tensor<S> a1 = norm1.forward(ps, x, keep ? &c.norm1 : nullptr);
  Tensor<S> h = conv1.forward(ps, nn::silu(a1), keep ? &c.conv1 : nullptr);
  const RowMatrix<S> tproj = time_proj.forward(ps, temb);
  h.matrix().rowwise() += tproj.row(0);

  Tensor<S> a2;
  if (conditioned) {
    FilmParams<S> fp = film.forward(ps, cond, keep ? &c.film : nullptr);
    Tensor<S> normalized = nn::normalize_per_frame(h, out_ch, keep ? &c.norm2 : nullptr);
    a2 = nn::modulate(normalized, fp.gamma, fp.beta);
    if (keep) c.film_params = std::move(fp);
  } else {
    a2 = norm2.forward(ps, h, keep ? &c.norm2 : nullptr);
  }
  Tensor<S> out = conv2.forward(ps, nn::silu(a2), keep ? &c.conv2 : nullptr);
  if (has_skip_proj) {
    out.values() += skip.forward(ps, x, keep ? &c.skip : nullptr).values();
  } else {
    out.values() += x.values();
  }
  if (keep) {
    c.act1 = std::move(a1);
    c.act2 = std::move(a2);
  }
  return out;
}

template <typename S>
Tensor<S> ResBlock::backward(const nn::ParameterSet<S>& ps, Vector<S>& grads, const ResBlockCache<S>& c,
                             const Tensor<S>& dy, const RowMatrix<S>& temb, RowMatrix<S>& d_temb,
                             RowMatrix<S>& d_cond) const {
  Tensor<S> da2 = nn::silu_backward(c.act2, conv2.backward(ps, grads, c.conv2, dy));
  Tensor<S> dh;
  if (conditioned) {
    const Tensor<S>& xhat = c.norm2.normalized;
    const int T = xhat.frames();
    const long hw = static_cast<long>(xhat.height()) * xhat.width();
    RowMatrix<S> d_gamma(T, out_ch), d_beta(T, out_ch);
    Tensor<S> dxhat(xhat.shape());
    for (int t = 0; t < T; ++t) {
      nn::ConstMatMap<S> xf(xhat.frame_data(t), hw, out_ch);
      nn::ConstMatMap<S> df(da2.frame_data(t), hw, out_ch);
      nn::MatMap<S> of(dxhat.frame_data(t), hw, out_ch);
      d_gamma.row(t) = (df.array() * xf.array()).colwise().sum().matrix();
      d_beta.row(t) = df.colwise().sum();
      of.array() = df.array().rowwise() * c.film_params.gamma.row(t).array();
    }
    dh = nn::normalize_per_frame_backward(c.norm2, dxhat, out_ch);
    d_cond += film.backward(ps, grads, c.film, d_gamma, d_beta);
  } else {
    dh = norm2.backward(ps, grads, c.norm2, da2);
  }
  RowMatrix<S> dproj = dh.matrix().colwise().sum();
  d_temb += time_proj.backward(ps, grads, temb, dproj);
  Tensor<S> dx = norm1.backward(ps, grads, c.norm1,
                                nn::silu_backward(c.act1, conv1.backward(ps, grads, c.conv1, dh)));
  if (has_skip_proj) {
    dx.values() += skip.backward(ps, grads, c.skip, dy).values();
  } else {
    dx.values() += dy.values();
  }
  return dx;
}

// ---------------------------------------------------------------------------
// U-Net

template <typename S>
Denoiser<S>::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto& cfg = config_;
  auto& ps = params_;
  const int groups = cfg.norm_groups;

  if (cfg.conditioned())
    embed_off_ = ps.add("unit_embedding", {cfg.unit_vocab + 1, cfg.unit_embed_dim});
  time1_ = nn::Linear::make(ps, "time.fc1", cfg.time_embed_dim, cfg.time_embed_dim);
  time2_ = nn::Linear::make(ps, "time.fc2", cfg.time_embed_dim, cfg.time_embed_dim);
  in_conv_ = nn::Conv3d::make(ps, "input.conv", cfg.in_channels, cfg.base_channels);

  const int L = cfg.num_stages();
  int ch = cfg.base_channels;
  for (int l = 0; l < L; ++l) {
    const int out = cfg.stage_channels(l);
    const bool attn = cfg.attention_at(cfg.spatial_size >> l);
    for (int r = 0; r < cfg.resblocks_per_stage; ++r) {
      const std::string name = "down." + std::to_string(l) + "." + std::to_string(r);
      enc_.push_back(ResBlock::make(ps, name, ch, out, cfg));
      ch = out;
      enc_attn_used_.push_back(attn);
      enc_attn_.push_back(attn ? nn::SpatioTemporalAttention::make(ps, name + ".attn", out, cfg.attention_heads,
                                                                    groups_for(out, groups))
                               : nn::SpatioTemporalAttention{});
    }
  }
  mid_ = ResBlock::make(ps, "mid", ch, ch, cfg);
  mid_attn_used_ = cfg.attention_at(cfg.deepest_resolution());
  if (mid_attn_used_)
    mid_attn_ = nn::SpatioTemporalAttention::make(ps, "mid.attn", ch, cfg.attention_heads, groups_for(ch, groups));

  dec_.resize(static_cast<std::size_t>(L) * cfg.resblocks_per_stage);
  dec_attn_.resize(dec_.size());
  dec_attn_used_.resize(dec_.size());
  up_conv_.resize(L);
  for (int l = L - 1; l >= 0; --l) {
    const int out = cfg.stage_channels(l);
    const bool attn = cfg.attention_at(cfg.spatial_size >> l);
    for (int r = 0; r < cfg.resblocks_per_stage; ++r) {
      const std::string name = "up." + std::to_string(l) + "." + std::to_string(r);
      const int in = r == 0 ? ch + out : out;
      const std::size_t idx = static_cast<std::size_t>(l) * cfg.resblocks_per_stage + r;
      dec_[idx] = ResBlock::make(ps, name, in, out, cfg);
      dec_attn_used_[idx] = attn;
      if (attn)
        dec_attn_[idx] = nn::SpatioTemporalAttention::make(ps, name + ".attn", out, cfg.attention_heads,
                                                           groups_for(out, groups));
      ch = out;
    }
    if (l > 0) up_conv_[l] = nn::Conv3d::make(ps, "up." + std::to_string(l) + ".upsample", ch, ch);
  }
  out_norm_ = nn::GroupNorm::make(ps, "out.norm", ch, groups_for(ch, groups));
  out_conv_ = nn::Conv3d::make(ps, "out.conv", ch, cfg.out_channels);

  // initialization
  std::mt19937_64 rng(seed);
  if (cfg.conditioned())
    nn::fill_normal(ps.values(), embed_off_, long(cfg.unit_vocab + 1) * cfg.unit_embed_dim, 1.0, rng);
  time1_.init(ps, rng);
  time2_.init(ps, rng);
  in_conv_.init(ps, rng);
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    enc_[i].init(ps, rng);
    if (enc_attn_used_[i]) enc_attn_[i].init(ps, rng);
  }
  mid_.init(ps, rng);
  if (mid_attn_used_) mid_attn_.init(ps, rng);
  for (int l = L - 1; l >= 0; --l) {
    for (int r = 0; r < cfg.resblocks_per_stage; ++r) {
      const std::size_t idx = static_cast<std::size_t>(l) * cfg.resblocks_per_stage + r;
      dec_[idx].init(ps, rng);
      if (dec_attn_used_[idx]) dec_attn_[idx].init(ps, rng);
    }
    if (l > 0) up_conv_[l].init(ps, rng);
  }
  out_norm_.init(ps);
  // out_conv stays zero: the initial prediction is exactly zero
}

template <typename S>
void Denoiser<S>::randomize(std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  nn::fill_normal(params_.values(), 0, params_.size(), stddev, rng);
}

template <typename S>
void Denoiser<S>::set_film_identity() {
  if (!config_.conditioned()) return;
  auto apply = [&](const ResBlock& b) { b.film.set_identity(params_); };
  for (const auto& b : enc_) apply(b);
  for (const auto& b : dec_) apply(b);
  apply(mid_);
}

template <typename S>
RowMatrix<S> Denoiser<S>::time_embedding(int t, DenoiserCache<S>* cache) const {
  const int dim = config_.time_embed_dim, half = dim / 2;
  RowMatrix<S> sinus(1, dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    sinus(0, i) = static_cast<S>(std::cos(t * freq));
    sinus(0, half + i) = static_cast<S>(std::sin(t * freq));
  }
  RowMatrix<S> e1 = time1_.forward(params_, sinus);
  RowMatrix<S> s1 = silu_rows(e1);
  RowMatrix<S> e2 = time2_.forward(params_, s1);
  RowMatrix<S> temb = silu_rows(e2);
  if (cache) {
    cache->sinusoid = sinus;
    cache->e1 = e1;
    cache->s1 = s1;
    cache->e2 = e2;
    cache->temb = temb;
  }
  return temb;
}

template <typename S>
Tensor<S> Denoiser<S>::forward(const Tensor<S>& x, int t, const UnitSequence& units,
                               DenoiserCache<S>* cache) const {
  const auto& cfg = config_;
  if (x.channels() != cfg.in_channels)
    throw ContractError("denoiser expects " + std::to_string(cfg.in_channels) + " input channels, got " +
                        std::to_string(x.channels()));
  const int factor = 1 << (cfg.num_stages() - 1);
  if (x.height() % factor != 0 || x.width() % factor != 0)
    throw ContractError("spatial size " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                        " not divisible by " + std::to_string(factor));
  const int L = cfg.num_stages(), R = cfg.resblocks_per_stage;
  const bool keep = cache != nullptr;
  if (keep) {
    cache->enc.assign(enc_.size(), {});
    cache->dec.assign(dec_.size(), {});
    cache->enc_attn.assign(enc_.size(), {});
    cache->dec_attn.assign(dec_.size(), {});
    cache->up_conv.assign(L, {});
    cache->skip_channels.assign(L, 0);
  }

  const RowMatrix<S> temb = time_embedding(t, cache);
  RowMatrix<S> cond;
  if (cfg.conditioned()) {
    const auto table = nn::param_matrix(params_, embed_off_, cfg.unit_vocab + 1, cfg.unit_embed_dim);
    if (units.vocab != cfg.unit_vocab)
      throw ContractError("unit vocabulary " + std::to_string(units.vocab) + " does not match model (" +
                          std::to_string(cfg.unit_vocab) + ")");
    cond = embed_units<S>(units, table, x.frames());
    if (keep) {
      cache->cond = cond;
      cache->units = units;
    }
  }

  Tensor<S> h = in_conv_.forward(params_, x, keep ? &cache->in_conv : nullptr);
  std::vector<Tensor<S>> skips(L);
  for (int l = 0; l < L; ++l) {
    for (int r = 0; r < R; ++r) {
      const std::size_t i = static_cast<std::size_t>(l) * R + r;
      h = enc_[i].forward(params_, h, temb, cond, keep ? &cache->enc[i] : nullptr);
      if (enc_attn_used_[i]) h = enc_attn_[i].forward(params_, h, keep ? &cache->enc_attn[i] : nullptr);
    }
    skips[l] = h;
    if (keep) cache->skip_channels[l] = h.channels();
    if (l + 1 < L) h = nn::avg_pool2(h);
  }
  h = mid_.forward(params_, h, temb, cond, keep ? &cache->mid : nullptr);
  if (mid_attn_used_) h = mid_attn_.forward(params_, h, keep ? &cache->mid_attn : nullptr);
  for (int l = L - 1; l >= 0; --l) {
    h = concat_channels(h, skips[l]);
    for (int r = 0; r < R; ++r) {
      const std::size_t i = static_cast<std::size_t>(l) * R + r;
      h = dec_[i].forward(params_, h, temb, cond, keep ? &cache->dec[i] : nullptr);
      if (dec_attn_used_[i]) h = dec_attn_[i].forward(params_, h, keep ? &cache->dec_attn[i] : nullptr);
    }
    if (l > 0) h = up_conv_[l].forward(params_, nn::upsample_nearest2(h), keep ? &cache->up_conv[l] : nullptr);
  }
  Tensor<S> a = out_norm_.forward(params_, h, keep ? &cache->out_norm : nullptr);
  Tensor<S> out = out_conv_.forward(params_, nn::silu(a), keep ? &cache->out_conv : nullptr);
  if (keep) cache->out_act = std::move(a);
  return out;
}

template <typename S>
Tensor<S> Denoiser<S>::backward(const DenoiserCache<S>& c, const Tensor<S>& d_out, Vector<S>& grads) const {
  const auto& cfg = config_;
  if (grads.size() != params_.size()) grads = Vector<S>::Zero(params_.size());
  const int L = cfg.num_stages(), R = cfg.resblocks_per_stage;

  RowMatrix<S> d_temb = RowMatrix<S>::Zero(1, cfg.time_embed_dim);
  RowMatrix<S> d_cond = RowMatrix<S>::Zero(c.cond.rows(), c.cond.cols());

  Tensor<S> dh = out_norm_.backward(
      params_, grads, c.out_norm, nn::silu_backward(c.out_act, out_conv_.backward(params_, grads, c.out_conv, d_out)));

  std::vector<Tensor<S>> d_skips(L);
  for (int l = 0; l < L; ++l) {
    if (l > 0) dh = nn::upsample_nearest2_backward(up_conv_[l].backward(params_, grads, c.up_conv[l], dh));
    for (int r = R - 1; r >= 0; --r) {
      const std::size_t i = static_cast<std::size_t>(l) * R + r;
      if (dec_attn_used_[i]) dh = dec_attn_[i].backward(params_, grads, c.dec_attn[i], dh);
      dh = dec_[i].backward(params_, grads, c.dec[i], dh, c.temb, d_temb, d_cond);
    }
    // split the concatenation [h, skip]
    const int skip_ch = c.skip_channels[l];
    const int h_ch = dh.channels() - skip_ch;
    Tensor<S> d_skip(dh.frames(), dh.height(), dh.width(), skip_ch);
    d_skip.matrix() = dh.matrix().rightCols(skip_ch);
    Tensor<S> d_h(dh.frames(), dh.height(), dh.width(), h_ch);
    d_h.matrix() = dh.matrix().leftCols(h_ch);
    d_skips[l] = std::move(d_skip);
    dh = std::move(d_h);
  }

  if (mid_attn_used_) dh = mid_attn_.backward(params_, grads, c.mid_attn, dh);
  dh = mid_.backward(params_, grads, c.mid, dh, c.temb, d_temb, d_cond);

  for (int l = L - 1; l >= 0; --l) {
    if (l + 1 < L) dh = nn::avg_pool2_backward(dh);
    dh.values() += d_skips[l].values();
    for (int r = R - 1; r >= 0; --r) {
      const std::size_t i = static_cast<std::size_t>(l) * R + r;
      if (enc_attn_used_[i]) dh = enc_attn_[i].backward(params_, grads, c.enc_attn[i], dh);
      dh = enc_[i].backward(params_, grads, c.enc[i], dh, c.temb, d_temb, d_cond);
    }
  }
  Tensor<S> dx = in_conv_.backward(params_, grads, c.in_conv, dh);

  // time MLP
  RowMatrix<S> de2 = silu_rows_backward(c.e2, d_temb);
  RowMatrix<S> ds1 = time2_.backward(params_, grads, c.s1, de2);
  time1_.backward(params_, grads, c.sinusoid, silu_rows_backward(c.e1, ds1));

  if (cfg.conditioned()) {
    Eigen::Map<RowMatrix<S>> d_table(grads.data() + embed_off_, cfg.unit_vocab + 1, cfg.unit_embed_dim);
    embed_units_backward<S>(c.units, d_cond, d_table);
  }
  return dx;
}

template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace edidub
