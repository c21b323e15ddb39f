#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "edidub/conditioning.hpp"
#include "edidub/tensor.hpp"

namespace edidub {

// ---------------------------------------------------------------------------
// Low-angle selection

/// Head pose in degrees.
struct PoseFrame {
  double pitch = 0.0, yaw = 0.0, roll = 0.0;
};

/// Largest absolute angle over all frames and axes.
double pose_score(const std::vector<PoseFrame>& frames);

/// Per-frame poses at the source frame rate; nullopt where no face was found.
struct PoseVideo {
  std::string id;
  double duration_seconds = 0.0;
  std::vector<std::optional<PoseFrame>> frames;
};

struct LowAngleOptions {
  double max_angle = 20.0;
  double min_duration = 6.0;
  int frame_step = 5;
};

struct LowAngleResult {
  std::string id;
  double score = 0.0;
};

/// Scans frames 0, k, 2k, ... keeping the running maximum angle and stopping
/// as soon as it exceeds the limit. Returns the score when the video is kept.
std::optional<double> scan_low_angle(const PoseVideo& video, const LowAngleOptions& options);

/// Accepted videos sorted by ascending score (ties by id).
std::vector<LowAngleResult> select_low_angle(const std::vector<PoseVideo>& videos, const LowAngleOptions& options = {});

// ---------------------------------------------------------------------------
// Hand-occlusion selection

using Polygon = std::vector<Point2>;

/// Convex hull in counter-clockwise order without collinear vertices.
Polygon convex_hull(std::vector<Point2> points);

/// Boundary-inclusive membership in a convex polygon given in either
/// orientation. Hulls with fewer than three non-collinear vertices contain
/// nothing.
bool point_in_hull(const Point2& p, const Polygon& hull);

/// Number of points inside at least one hull.
int count_occluded(const std::vector<Point2>& face_points, const std::vector<Polygon>& hulls);

struct OcclusionFrame {
  std::optional<std::vector<Point2>> face;            // nullopt: no face detected
  std::optional<std::vector<std::vector<Point2>>> hands;  // one landmark set per hand
};

struct OcclusionVideo {
  std::string id;
  std::vector<OcclusionFrame> frames;
};

struct OcclusionOptions {
  int threshold = 30;
  int frame_step = 10;
  int early_stop_total = 100;
};

struct OcclusionRecord {
  std::string id;
  int total_occlusion = 0;
  int max_occlusion = 0;
  int processed_frames = 0;  // sampled frames visited before the scan ended
  bool accepted = false;
};

OcclusionRecord scan_occlusion(const OcclusionVideo& video, const OcclusionOptions& options);

/// Accepted records in input order.
std::vector<OcclusionRecord> select_occluded(const std::vector<OcclusionVideo>& videos,
                                             const OcclusionOptions& options = {});

// ---------------------------------------------------------------------------
// Stream files

/// Pose stream: "duration <seconds>" then one line per frame, either
/// "<pitch> <yaw> <roll>" or "none".
void write_pose_stream(std::ostream& os, const PoseVideo& video);
PoseVideo read_pose_stream(std::istream& is, const std::string& id);

/// Occlusion stream: one "frame" line per frame, followed by an optional
/// "face x y x y ..." line (absent: no face) and zero or more
/// "hand x y x y ..." lines.
void write_occlusion_stream(std::ostream& os, const OcclusionVideo& video);
OcclusionVideo read_occlusion_stream(std::istream& is, const std::string& id);

void write_low_angle_results(std::ostream& os, const std::vector<LowAngleResult>& results);
void write_occlusion_records(std::ostream& os, const std::vector<OcclusionRecord>& records);

// ---------------------------------------------------------------------------
// Control-video corruption

/// Pixel rectangle [x, x + width) x [y, y + height).
struct PixelBox {
  int x = 0, y = 0, width = 0, height = 0;
};

struct CorruptionOptions {
  int lead_frames = 15;
  int tail_frames = 5;
  int span = 25;                      // frames sharing one pasted crop
  int source_offset = 25;             // crop taken this many frames earlier, wrapping
  double noise_std = 20.0 / 127.5;    // 20 grey levels in [-1, 1] units
};

/// Frame whose crop is pasted onto frame t (t inside the active window).
int corruption_source_frame(int t, int frames, const CorruptionOptions& options = {});

/// Pastes a 180-degree rotated mouth crop from another frame plus Gaussian
/// noise over the mouth box, leaving the lead and tail frames untouched.
/// Results are clamped to [-1, 1].
Clip corrupt_clip(const Clip& clip, const PixelBox& mouth_box, std::uint64_t seed,
                  const CorruptionOptions& options = {});

}  // namespace edidub
