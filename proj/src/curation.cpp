#include "edidub/curation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace edidub {

double pose_score(const std::vector<PoseFrame>& frames) {
  require(!frames.empty(), "pose_score needs at least one frame");
  double m = 0.0;
  for (const auto& f : frames) m = std::max({m, std::abs(f.pitch), std::abs(f.yaw), std::abs(f.roll)});
  return m;
}

std::optional<double> scan_low_angle(const PoseVideo& video, const LowAngleOptions& o) {
  require(o.frame_step >= 1, "frame step must be positive");
  if (video.duration_seconds < o.min_duration || video.frames.empty()) return std::nullopt;
  double m = 0.0;
  for (size_t i = 0; i < video.frames.size(); i += size_t(o.frame_step)) {
    if (!video.frames[i]) return std::nullopt;
    m = std::max(m, pose_score({*video.frames[i]}));
    if (m > o.max_angle) break;
  }
  if (m > o.max_angle) return std::nullopt;
  return m;
}

std::vector<LowAngleResult> select_low_angle(const std::vector<PoseVideo>& videos, const LowAngleOptions& o) {
  std::vector<LowAngleResult> out;
  for (const auto& v : videos)
    if (const auto s = scan_low_angle(v, o)) out.push_back({v.id, *s});
  std::stable_sort(out.begin(), out.end(), [](const LowAngleResult& a, const LowAngleResult& b) {
    return a.score != b.score ? a.score < b.score : a.id < b.id;
  });
  return out;
}

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

Polygon convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon hull(2 * pts.size());
  size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool point_in_hull(const Point2& p, const Polygon& hull) {
  const size_t n = hull.size();
  if (n < 3) return false;
  double area2 = 0.0;
  for (size_t i = 0; i < n; ++i) area2 += hull[i].x * hull[(i + 1) % n].y - hull[(i + 1) % n].x * hull[i].y;
  if (area2 == 0.0) return false;
  const double sign = area2 > 0 ? 1.0 : -1.0;
  for (size_t i = 0; i < n; ++i)
    if (sign * cross(hull[i], hull[(i + 1) % n], p) < 0) return false;
  return true;
}

int count_occluded(const std::vector<Point2>& face_points, const std::vector<Polygon>& hulls) {
  int count = 0;
  for (const auto& p : face_points)
    if (std::any_of(hulls.begin(), hulls.end(), [&](const Polygon& h) { return point_in_hull(p, h); })) ++count;
  return count;
}

OcclusionRecord scan_occlusion(const OcclusionVideo& video, const OcclusionOptions& o) {
  require(o.frame_step >= 1, "frame step must be positive");
  OcclusionRecord r;
  r.id = video.id;
  for (size_t i = 0; i < video.frames.size(); i += size_t(o.frame_step)) {
    ++r.processed_frames;
    const auto& f = video.frames[i];
    if (!f.face || !f.hands || f.hands->empty()) continue;
    std::vector<Polygon> hulls;
    for (const auto& hand : *f.hands) hulls.push_back(convex_hull(hand));
    const int c = count_occluded(*f.face, hulls);
    r.total_occlusion += c;
    r.max_occlusion = std::max(r.max_occlusion, c);
    if (r.total_occlusion >= o.early_stop_total) break;
  }
  r.accepted = r.total_occlusion > o.threshold;
  return r;
}

std::vector<OcclusionRecord> select_occluded(const std::vector<OcclusionVideo>& videos, const OcclusionOptions& o) {
  std::vector<OcclusionRecord> out;
  for (const auto& v : videos) {
    OcclusionRecord r = scan_occlusion(v, o);
    if (r.accepted) out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_pose_stream(std::ostream& os, const PoseVideo& v) {
  const auto old = os.precision(17);
  os << "duration " << v.duration_seconds << '\n';
  for (const auto& f : v.frames) {
    if (f) os << f->pitch << ' ' << f->yaw << ' ' << f->roll << '\n';
    else os << "none\n";
  }
  os.precision(old);
}

PoseVideo read_pose_stream(std::istream& is, const std::string& id) {
  PoseVideo v;
  v.id = id;
  std::string line, key;
  if (!std::getline(is, line) || !(std::istringstream(line) >> key >> v.duration_seconds) || key != "duration")
    throw DataError("pose stream " + id + " must start with 'duration <seconds>'");
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "none") {
      v.frames.emplace_back(std::nullopt);
      continue;
    }
    PoseFrame f;
    std::istringstream all(line);
    if (!(all >> f.pitch >> f.yaw >> f.roll) || !std::isfinite(f.pitch) || !std::isfinite(f.yaw) ||
        !std::isfinite(f.roll))
      throw DataError("pose stream " + id + ": bad frame line '" + line + "'");
    v.frames.emplace_back(f);
  }
  return v;
}

namespace {

void write_points(std::ostream& os, const char* tag, const std::vector<Point2>& pts) {
  os << tag;
  for (const auto& p : pts) os << ' ' << p.x << ' ' << p.y;
  os << '\n';
}

std::vector<Point2> read_points(std::istringstream& ls, const std::string& id) {
  std::vector<double> v;
  for (double x; ls >> x;) v.push_back(x);
  if (!ls.eof() || v.size() % 2) throw DataError("occlusion stream " + id + ": odd or malformed coordinate list");
  std::vector<Point2> pts;
  for (size_t i = 0; i < v.size(); i += 2) pts.push_back({v[i], v[i + 1]});
  return pts;
}

}  // namespace

void write_occlusion_stream(std::ostream& os, const OcclusionVideo& v) {
  const auto old = os.precision(17);
  for (const auto& f : v.frames) {
    os << "frame\n";
    if (f.face) write_points(os, "face", *f.face);
    if (f.hands)
      for (const auto& h : *f.hands) write_points(os, "hand", h);
  }
  os.precision(old);
}

OcclusionVideo read_occlusion_stream(std::istream& is, const std::string& id) {
  OcclusionVideo v;
  v.id = id;
  for (std::string line; std::getline(is, line);) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "frame") {
      v.frames.emplace_back();
      continue;
    }
    if (v.frames.empty()) throw DataError("occlusion stream " + id + ": data before the first 'frame' line");
    auto& f = v.frames.back();
    if (tag == "face") {
      if (f.face) throw DataError("occlusion stream " + id + ": two face lines in one frame");
      f.face = read_points(ls, id);
    } else if (tag == "hand") {
      if (!f.hands) f.hands.emplace();
      f.hands->push_back(read_points(ls, id));
    } else {
      throw DataError("occlusion stream " + id + ": unknown line tag '" + tag + "'");
    }
  }
  return v;
}

void write_low_angle_results(std::ostream& os, const std::vector<LowAngleResult>& results) {
  const auto old = os.precision(17);
  os << "video\tscore\n";
  for (const auto& r : results) os << r.id << '\t' << r.score << '\n';
  os.precision(old);
}

void write_occlusion_records(std::ostream& os, const std::vector<OcclusionRecord>& records) {
  os << "video\ttotal_occlusion\tmax_occlusion\tprocessed_frames\n";
  for (const auto& r : records)
    os << r.id << '\t' << r.total_occlusion << '\t' << r.max_occlusion << '\t' << r.processed_frames << '\n';
}

// ---------------------------------------------------------------------------

int corruption_source_frame(int t, int frames, const CorruptionOptions& o) {
  require(t >= o.lead_frames && t < frames - o.tail_frames, "frame outside the corrupted window");
  const int span_start = o.lead_frames + (t - o.lead_frames) / o.span * o.span;
  return ((span_start - o.source_offset) % frames + frames) % frames;
}

Clip corrupt_clip(const Clip& clip, const PixelBox& box, std::uint64_t seed, const CorruptionOptions& o) {
  if (clip.frames() <= o.lead_frames + o.tail_frames)
    throw ArgumentError("clip needs more than " + std::to_string(o.lead_frames + o.tail_frames) + " frames to corrupt");
  require(box.width > 0 && box.height > 0 && box.x >= 0 && box.y >= 0 && box.x + box.width <= clip.width() &&
              box.y + box.height <= clip.height(),
          "mouth box outside the frame");
  Clip out = clip;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, o.noise_std);
  for (int t = o.lead_frames; t < clip.frames() - o.tail_frames; ++t) {
    const int src = corruption_source_frame(t, clip.frames(), o);
    for (int i = 0; i < box.height; ++i)
      for (int j = 0; j < box.width; ++j)
        for (int c = 0; c < clip.channels(); ++c) {
          const double v = clip(src, box.y + box.height - 1 - i, box.x + box.width - 1 - j, c) + noise(rng);
          out(t, box.y + i, box.x + j, c) = float(std::clamp(v, -1.0, 1.0));
        }
  }
  return out;
}

}  // namespace edidub
