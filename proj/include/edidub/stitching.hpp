#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "edidub/diffusion.hpp"
#include "edidub/tensor.hpp"
#include "edidub/units.hpp"

namespace edidub {

using FrameRange = std::pair<int, int>;  // [begin, end)

struct WindowPlan {
  int window_size = 24;
  int step = 12;
  int num_frames = 0;
  std::vector<FrameRange> windows;

  /// Number of windows covering each frame.
  std::vector<int> coverage() const;
};

struct SectionPlan {
  int section_length = 120;
  int overlap = 12;
  int num_frames = 0;
  std::vector<FrameRange> sections;
};

/// Windows start every `step` frames; a last window that would run past the
/// end is shifted left to end exactly at num_frames.
WindowPlan plan_windows(int num_frames, int window_size = 24, int step = 12);

/// Sections of `section_length` frames, each starting `overlap` frames before
/// the previous one ends; the last is shifted left to end at num_frames.
SectionPlan plan_sections(int num_frames, int section_length = 120, int overlap = 12);

/// Per-frame mean of the window predictions covering that frame.
template <typename S>
Tensor<S> multidiffusion_step(const std::vector<Tensor<S>>& predictions, const WindowPlan& plan) {
  require(!predictions.empty() && predictions.size() == plan.windows.size(),
          "one prediction per window required");
  const Shape4 first = predictions.front().shape();
  Tensor<S> sum(plan.num_frames, first.height, first.width, first.channels);
  std::vector<int> count(plan.num_frames, 0);
  for (size_t w = 0; w < predictions.size(); ++w) {
    const auto& [b, e] = plan.windows[w];
    const Shape4 s = predictions[w].shape();
    require(s.frames == e - b && s.height == first.height && s.width == first.width &&
                s.channels == first.channels,
            "window prediction shape does not match the plan");
    const long per_frame = sum.frame_size();
    S* dst = sum.data() + long(b) * per_frame;
    const S* src = predictions[w].data();
    for (long i = 0; i < long(e - b) * per_frame; ++i) dst[i] += src[i];
    for (int f = b; f < e; ++f) ++count[f];
  }
  const long per_frame = sum.frame_size();
  for (int f = 0; f < plan.num_frames; ++f) {
    if (count[f] == 1) continue;
    S* p = sum.data() + long(f) * per_frame;
    const S n = static_cast<S>(count[f]);
    for (long i = 0; i < per_frame; ++i) p[i] /= n;
  }
  return sum;
}

/// Noise prediction for one window; `range` locates the window inside the
/// section so that per-frame side inputs (reference frames) can be sliced.
template <typename S>
using WindowPredictor =
    std::function<Tensor<S>(const Tensor<S>& x, int t, const UnitSequence& units, FrameRange range)>;

/// Wraps a window-level noise predictor so that a whole section is predicted
/// by evaluating every window of `plan` and averaging overlaps.
template <typename S>
NoisePredictor<S> multidiffusion_predictor(WindowPredictor<S> window_predictor, WindowPlan plan) {
  return [inner = std::move(window_predictor), plan = std::move(plan)](
             const Tensor<S>& x, int t, const UnitSequence& units) -> Tensor<S> {
    require(x.frames() == plan.num_frames, "section length differs from the window plan");
    if (plan.windows.size() == 1) return inner(x, t, units, plan.windows.front());
    std::vector<Tensor<S>> preds;
    preds.reserve(plan.windows.size());
    for (const auto& [b, e] : plan.windows)
      preds.push_back(inner(x.slice_frames(b, e), t, units.empty() ? units : units.slice_frames(b, e), {b, e}));
    return multidiffusion_step(preds, plan);
  };
}

/// Section-level dubbing: receives the section frames (leading continuation
/// frames already replaced by earlier output), the section mask (zeroed on
/// those frames) and the section's frame range.
using SectionDubber = std::function<Clip(const Clip& section, const RegionMask& mask, FrameRange range)>;

/// Dubs sections in order. Every frame a section shares with already produced
/// output is copied from that output and unmasked, so the model continues it
/// unchanged.
Clip dub_section_sequential(const Clip& clip, const RegionMask& mask, const SectionPlan& plan,
                            const SectionDubber& dub_one_section);

}  // namespace edidub
