#pragma once

#include <cmath>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "edidub/tensor.hpp"
#include "edidub/units.hpp"

namespace edidub {

/// Cumulative signal coefficients for the training chain plus the uniformly
/// spaced subsequence used by deterministic sampling and inversion.
struct DiffusionSchedule {
  int num_train_steps = 0;
  double offset = 0.008;
  std::vector<double> alpha_bar;     // length num_train_steps + 1, alpha_bar[0] == 1
  std::vector<int> inference_steps;  // strictly increasing

  double signal(int t) const { return std::sqrt(alpha_bar.at(t)); }
  double noise(int t) const { return std::sqrt(1.0 - alpha_bar.at(t)); }
  int largest_inference_step() const { return inference_steps.back(); }
};

/// Cosine schedule; betas are clipped at 0.999 so the final alpha_bar stays
/// positive.
DiffusionSchedule build_cosine_schedule(int num_train_steps, int num_inference_steps,
                                        double offset = 0.008);

/// Unclipped cosine-curve value f(t)/f(0).
double cosine_alpha_bar(int t, int num_train_steps, double offset = 0.008);

void write_schedule(std::ostream& os, const DiffusionSchedule& schedule);
DiffusionSchedule read_schedule(std::istream& is);

template <typename S>
struct NoisyState {
  Tensor<S> x;
  int t = 0;
  RegionMask mask;
  Tensor<S> clean;
};

struct GuidanceConfig {
  double scale = 5.0;
};

/// Noise prediction for a [T,H,W,3] state at timestep t under a unit condition.
template <typename S>
using NoisePredictor =
    std::function<Tensor<S>(const Tensor<S>& x_t, int t, const UnitSequence& condition)>;

template <typename S>
NoisyState<S> masked_forward_noise(const Tensor<S>& clean, const RegionMask& mask, int t,
                                   const Tensor<S>& noise, const DiffusionSchedule& schedule) {
  require(noise.shape() == clean.shape(), "noise shape differs from clip shape");
  require(mask.matches(clean.shape()), "mask shape differs from clip shape");
  require(t >= 0 && t <= schedule.num_train_steps, "timestep out of range");
  const S a = static_cast<S>(schedule.signal(t));
  const S b = static_cast<S>(schedule.noise(t));
  Tensor<S> noised(clean.shape());
  noised.values() = a * clean.values() + b * noise.values();
  return NoisyState<S>{composite(noised, clean, mask), t, mask, clean};
}

/// Sum of squared masked residuals divided by the number of masked elements
/// (mask broadcast over channels).
template <typename S>
S masked_ddpm_loss(const Tensor<S>& predicted, const Tensor<S>& target, const RegionMask& mask) {
  require(predicted.shape() == target.shape(), "loss shape mismatch");
  require(mask.matches(predicted.shape()), "loss mask shape mismatch");
  const long count = mask.count() * predicted.channels();
  if (count == 0) throw DegenerateMaskError();
  const ArrayX<S> m = mask.broadcast<S>(predicted.channels());
  return ((predicted.values() - target.values()) * m).square().sum() / static_cast<S>(count);
}

/// Gradient of masked_ddpm_loss with respect to `predicted`.
template <typename S>
Tensor<S> masked_ddpm_loss_grad(const Tensor<S>& predicted, const Tensor<S>& target,
                                const RegionMask& mask) {
  const long count = mask.count() * predicted.channels();
  if (count == 0) throw DegenerateMaskError();
  Tensor<S> g(predicted.shape());
  g.values() = (predicted.values() - target.values()) * mask.broadcast<S>(predicted.channels()) *
               (S(2) / static_cast<S>(count));
  return g;
}

template <typename S>
Tensor<S> cfg_combine(const Tensor<S>& eps_conditional, const Tensor<S>& eps_unconditional,
                      const GuidanceConfig& guidance) {
  require(eps_conditional.shape() == eps_unconditional.shape(), "guidance shape mismatch");
  require(guidance.scale >= 0.0, "guidance scale must be non-negative");
  const S s = static_cast<S>(guidance.scale);
  Tensor<S> out(eps_conditional.shape());
  out.values() = (S(1) + s) * eps_conditional.values() - s * eps_unconditional.values();
  return out;
}

namespace detail {

template <typename S>
Tensor<S> checked_predict(const NoisePredictor<S>& predictor, const Tensor<S>& x, int t,
                          const UnitSequence& condition) {
  Tensor<S> eps = predictor(x, t, condition);
  if (!(eps.shape() == x.shape()))
    throw ContractError("denoiser returned " + eps.shape().str() + " for input " + x.shape().str());
  return eps;
}

template <typename S>
Tensor<S> guided_prediction(const NoisePredictor<S>& predictor, const Tensor<S>& x, int t,
                            const UnitSequence& condition, const GuidanceConfig& guidance) {
  Tensor<S> eps = checked_predict(predictor, x, t, condition);
  if (guidance.scale == 0.0) return eps;
  const UnitSequence null = UnitSequence::null(condition.size(), condition.vocab);
  return cfg_combine(eps, checked_predict(predictor, x, t, null), guidance);
}

/// Deterministic transfer of a state from noise level `from` to level `to`
/// given a noise estimate, optionally clamping the clean estimate to [-1, 1].
template <typename S>
Tensor<S> ddim_transfer(const Tensor<S>& x, const Tensor<S>& eps, int from, int to,
                        const DiffusionSchedule& schedule, bool clamp_clean) {
  const S a_from = static_cast<S>(schedule.signal(from));
  const S b_from = static_cast<S>(schedule.noise(from));
  const S a_to = static_cast<S>(schedule.signal(to));
  const S b_to = static_cast<S>(schedule.noise(to));
  Tensor<S> out(x.shape());
  ArrayX<S> x0 = (x.values() - b_from * eps.values()) / a_from;
  if (clamp_clean) x0 = x0.cwiseMax(S(-1)).cwiseMin(S(1));
  out.values() = a_to * x0 + b_to * eps.values();
  return out;
}

}  // namespace detail

/// Deterministic DDIM sampling from init.t down to timestep 0 over the
/// schedule's inference steps, re-imposing init.clean outside the mask after
/// every update. The result is clamped to [-1, 1]. With clamp_intermediate
/// every intermediate clean estimate is clamped as well, which breaks the
/// exact correspondence with ddim_invert once estimates leave that range.
template <typename S>
Tensor<S> ddim_sample(const NoisePredictor<S>& predictor, const NoisyState<S>& init,
                      const UnitSequence& condition, const DiffusionSchedule& schedule,
                      const GuidanceConfig& guidance, bool clamp_intermediate = false) {
  const auto& steps = schedule.inference_steps;
  require(init.t == steps.back(), "sampling must start at the largest inference step");
  require(init.x.shape() == init.clean.shape() && init.mask.matches(init.x.shape()),
          "noisy state shape mismatch");
  if (init.mask.empty_region()) return init.clean;

  Tensor<S> x = init.x;
  for (int i = static_cast<int>(steps.size()) - 1; i >= 0; --i) {
    const int from = steps[i];
    const int to = i > 0 ? steps[i - 1] : 0;
    if (from == to) continue;
    Tensor<S> eps = detail::guided_prediction(predictor, x, from, condition, guidance);
    x = composite(detail::ddim_transfer(x, eps, from, to, schedule, clamp_intermediate), init.clean, init.mask);
  }
  x.values() = x.values().cwiseMax(S(-1)).cwiseMin(S(1));
  return composite(x, init.clean, init.mask);
}

/// Deterministic DDIM inversion: walks the inference steps upward starting
/// from the clean clip. Each transfer into level t uses the noise estimate
/// evaluated at t with the unguided conditional branch, so that the sampler's
/// step out of t undoes it exactly when the estimate does not depend on the
/// state.
template <typename S>
NoisyState<S> ddim_invert(const NoisePredictor<S>& predictor, const Tensor<S>& clean,
                          const RegionMask& mask, const UnitSequence& condition_original,
                          const DiffusionSchedule& schedule, bool clamp_intermediate = false) {
  require(mask.matches(clean.shape()), "mask shape differs from clip shape");
  const auto& steps = schedule.inference_steps;
  NoisyState<S> state{clean, steps.back(), mask, clean};
  if (mask.empty_region()) return state;

  Tensor<S> x = clean;
  int level = 0;
  for (int to : steps) {
    if (to == level) continue;
    Tensor<S> eps = detail::checked_predict(predictor, x, to, condition_original);
    x = composite(detail::ddim_transfer(x, eps, level, to, schedule, clamp_intermediate), clean, mask);
    level = to;
  }
  state.x = std::move(x);
  return state;
}

}  // namespace edidub
