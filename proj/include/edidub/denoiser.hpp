#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "edidub/conditioning.hpp"
#include "edidub/nn/attention.hpp"
#include "edidub/nn/layers.hpp"
#include "edidub/units.hpp"

namespace edidub {

/// Topology of the conditional 3D U-Net. The same description serves the
/// lip-sync stage (units drive FiLM modulation) and the super-resolution stage
/// (unit_vocab == 0, no modulation).
struct DenoiserConfig {
  int input_frames = 8;
  int spatial_size = 16;
  int in_channels = 6;
  int out_channels = 3;
  int base_channels = 32;
  std::vector<int> channel_multipliers{1, 2};
  int resblocks_per_stage = 1;
  std::vector<int> attention_resolutions{};
  int attention_heads = 4;
  int time_embed_dim = 256;
  int norm_groups = 32;
  int unit_vocab = 200;  // 0 disables unit conditioning
  int unit_embed_dim = 128;
  int film_kernel = 3;

  static DenoiserConfig lsd_paper();
  static DenoiserConfig srd_paper();
  static DenoiserConfig lsd_desk();
  static DenoiserConfig srd_desk();

  bool conditioned() const { return unit_vocab > 0; }
  int num_stages() const { return static_cast<int>(channel_multipliers.size()); }
  int deepest_resolution() const { return spatial_size >> (num_stages() - 1); }
  int stage_channels(int level) const { return base_channels * channel_multipliers.at(level); }
  bool attention_at(int resolution) const;

  /// Throws ArgumentError describing the first violated constraint.
  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

/// Upper bound on how many frames away a change in one frame's condition can
/// reach in the output. Only meaningful without attention.
int temporal_receptive_radius(const DenoiserConfig& config);

struct DenoiserInput;  // defined below for the float/double aliases

template <typename S>
struct ResBlockCache {
  nn::NormCache<S> norm1;
  Tensor<S> act1;
  nn::Conv3dCache<S> conv1;
  nn::NormCache<S> norm2;
  FilmCache<S> film;
  FilmParams<S> film_params;
  Tensor<S> act2;
  nn::Conv3dCache<S> conv2;
  nn::Conv3dCache<S> skip;
};

struct ResBlock {
  int in_ch = 0, out_ch = 0;
  bool conditioned = false;
  nn::GroupNorm norm1;
  nn::Conv3d conv1;
  nn::Linear time_proj;
  nn::GroupNorm norm2;
  FilmProjector film;
  nn::Conv3d conv2;
  bool has_skip_proj = false;
  nn::Conv3d skip;

  template <typename S>
  static ResBlock make(nn::ParameterSet<S>& ps, const std::string& name, int in, int out,
                       const DenoiserConfig& cfg);

  template <typename S>
  void init(nn::ParameterSet<S>& ps, std::mt19937_64& rng) const;

  template <typename S>
  Tensor<S> forward(const nn::ParameterSet<S>& ps, const Tensor<S>& x, const RowMatrix<S>& temb,
                    const RowMatrix<S>& cond, ResBlockCache<S>* cache) const;

  template <typename S>
  Tensor<S> backward(const nn::ParameterSet<S>& ps, Vector<S>& grads, const ResBlockCache<S>& c,
                     const Tensor<S>& dy, const RowMatrix<S>& temb, RowMatrix<S>& d_temb,
                     RowMatrix<S>& d_cond) const;
};

template <typename S>
struct DenoiserCache {
  RowMatrix<S> sinusoid, e1, s1, e2, temb;
  RowMatrix<S> cond;
  UnitSequence units;
  nn::Conv3dCache<S> in_conv;
  std::vector<ResBlockCache<S>> enc, dec;
  std::vector<nn::AttentionCache<S>> enc_attn, dec_attn;
  ResBlockCache<S> mid;
  nn::AttentionCache<S> mid_attn;
  std::vector<nn::Conv3dCache<S>> up_conv;
  std::vector<int> skip_channels;
  nn::NormCache<S> out_norm;
  Tensor<S> out_act;
  nn::Conv3dCache<S> out_conv;
};

/// Conditional 3D U-Net noise predictor.
///
/// Parameters live in one flat ParameterSet; `forward` is const and safe to
/// call concurrently. When a cache is supplied, `backward` accumulates
/// parameter gradients into `grads` and returns the gradient with respect
/// to the input tensor.
template <typename S>
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  nn::ParameterSet<S>& parameters() { return params_; }
  const nn::ParameterSet<S>& parameters() const { return params_; }
  long num_parameters() const { return params_.size(); }

  /// x: [T, H, W, in_channels]; units: 2*T symbols (ignored when unconditioned).
  Tensor<S> forward(const Tensor<S>& x, int t, const UnitSequence& units,
                    DenoiserCache<S>* cache = nullptr) const;
  Tensor<S> backward(const DenoiserCache<S>& cache, const Tensor<S>& d_out, Vector<S>& grads) const;

  /// Re-draws every parameter (including zero-initialized ones) from a
  /// normal distribution; used by gradient checks.
  void randomize(std::uint64_t seed, double stddev);

  /// Sets every FiLM projection to the identity (gamma = 1, beta = 0).
  void set_film_identity();

  const std::vector<ResBlock>& encoder_blocks() const { return enc_; }

  int embedding_offset() const { return static_cast<int>(embed_off_); }

 private:
  RowMatrix<S> time_embedding(int t, DenoiserCache<S>* cache) const;

  DenoiserConfig config_;
  nn::ParameterSet<S> params_;
  long embed_off_ = 0;
  nn::Linear time1_, time2_;
  nn::Conv3d in_conv_;
  std::vector<ResBlock> enc_, dec_;              // level-major, resblocks_per_stage each
  std::vector<nn::SpatioTemporalAttention> enc_attn_, dec_attn_;  // one per resblock, may be unused
  std::vector<bool> enc_attn_used_, dec_attn_used_;
  ResBlock mid_;
  nn::SpatioTemporalAttention mid_attn_;
  bool mid_attn_used_ = false;
  std::vector<nn::Conv3d> up_conv_;  // index = level (unused at level 0)
  nn::GroupNorm out_norm_;
  nn::Conv3d out_conv_;
};

/// Spatial input plus timestep and speech condition.
struct DenoiserInput {
  Tensor<float> x;
  int t = 0;
  UnitSequence units;
};

template <typename S>
Tensor<S> predict_noise(const Denoiser<S>& denoiser, const Tensor<S>& x, int t, const UnitSequence& units) {
  const auto& cfg = denoiser.config();
  if (x.channels() != cfg.in_channels)
    throw ContractError("denoiser input must have " + std::to_string(cfg.in_channels) + " channels");
  const int factor = 1 << (cfg.num_stages() - 1);
  if (x.height() % factor != 0 || x.width() % factor != 0)
    throw ContractError("spatial size not divisible by the U-Net downsampling factor");
  return denoiser.forward(x, t, units);
}

inline Tensor<float> predict_noise(const Denoiser<float>& denoiser, const DenoiserInput& input) {
  return predict_noise(denoiser, input.x, input.t, input.units);
}

extern template class Denoiser<float>;
extern template class Denoiser<double>;

}  // namespace edidub
