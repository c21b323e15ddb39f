#include "edidub/stitching.hpp"

#include <algorithm>

namespace edidub {

namespace {

std::vector<FrameRange> strided_ranges(int num_frames, int length, int stride) {
  std::vector<FrameRange> out;
  if (num_frames <= length) {
    out.emplace_back(0, num_frames);
    return out;
  }
  for (int b = 0;; b += stride) {
    if (b + length >= num_frames) {
      out.emplace_back(num_frames - length, num_frames);
      break;
    }
    out.emplace_back(b, b + length);
  }
  return out;
}

}  // namespace

std::vector<int> WindowPlan::coverage() const {
  std::vector<int> c(num_frames, 0);
  for (const auto& [b, e] : windows)
    for (int f = b; f < e; ++f) ++c[f];
  return c;
}

WindowPlan plan_windows(int num_frames, int window_size, int step) {
  require(num_frames >= 1, "window plan needs at least one frame");
  require(window_size >= 1 && step >= 1, "window size and step must be positive");
  require(step <= window_size, "window step larger than the window leaves frames uncovered");
  return WindowPlan{window_size, step, num_frames, strided_ranges(num_frames, window_size, step)};
}

SectionPlan plan_sections(int num_frames, int section_length, int overlap) {
  require(num_frames >= 1, "section plan needs at least one frame");
  require(overlap >= 0 && overlap < section_length, "section overlap must be smaller than the section");
  return SectionPlan{section_length, overlap, num_frames,
                     strided_ranges(num_frames, section_length, section_length - overlap)};
}

Clip dub_section_sequential(const Clip& clip, const RegionMask& mask, const SectionPlan& plan,
                            const SectionDubber& dub_one_section) {
  require(mask.matches(clip.shape()), "mask shape differs from clip shape");
  require(plan.num_frames == clip.frames(), "section plan length differs from clip length");
  Clip out = clip;
  int produced = 0;  // frames [0, produced) are final
  for (const auto& [b, e] : plan.sections) {
    const Clip section = out.slice_frames(b, e);
    RegionMask section_mask = mask.slice_frames(b, e);
    for (int f = b; f < std::min(produced, e); ++f) section_mask.clear_frame(f - b);
    const Clip dubbed = dub_one_section(section, section_mask, {b, e});
    require(dubbed.shape() == section.shape(), "section dubber changed the section shape");
    out.set_frames(b, dubbed);
    produced = std::max(produced, e);
  }
  return out;
}

}  // namespace edidub
