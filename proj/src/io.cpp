#include "edidub/io.hpp"

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "edidub/kv.hpp"

namespace edidub {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& p, bool binary = false) {
  std::ifstream is(p, binary ? std::ios::binary : std::ios::in);
  if (!is) throw DataError("cannot open " + p.string());
  return is;
}

std::ofstream open_out(const fs::path& p, bool binary = false) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, binary ? std::ios::binary : std::ios::out);
  if (!os) throw DataError("cannot write " + p.string());
  return os;
}

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05d.bin", t);
  return buf;
}

}  // namespace

void write_clip(const fs::path& dir, const Clip& clip, int fps) {
  fs::create_directories(dir);
  {
    auto os = open_out(dir / "manifest.txt");
    os << "frames " << clip.frames() << "\nheight " << clip.height() << "\nwidth " << clip.width()
       << "\nchannels " << clip.channels() << "\nfps " << fps << "\nformat float32le\n";
  }
  for (int t = 0; t < clip.frames(); ++t) {
    auto os = open_out(dir / frame_name(t), true);
    os.write(reinterpret_cast<const char*>(clip.frame_data(t)), std::streamsize(clip.frame_size() * sizeof(float)));
    if (!os) throw DataError("failed writing frame " + std::to_string(t) + " of " + dir.string());
  }
}

Clip read_clip(const fs::path& dir) {
  auto ms = open_in(dir / "manifest.txt");
  Shape4 shape{0, 0, 0, 0};
  for (const auto& [key, values] : read_key_values(ms)) {
    if (key == "frames") shape.frames = kv_int(key, values);
    else if (key == "height") shape.height = kv_int(key, values);
    else if (key == "width") shape.width = kv_int(key, values);
    else if (key == "channels") shape.channels = kv_int(key, values);
    else if (key == "fps") continue;
    else if (key == "format") {
      if (kv_single(key, values) != "float32le") throw DataError("unsupported clip format in " + dir.string());
    } else {
      throw DataError("unknown clip manifest key '" + key + "' in " + dir.string());
    }
  }
  if (shape.frames <= 0 || shape.height <= 0 || shape.width <= 0 || shape.channels <= 0)
    throw DataError("incomplete clip manifest in " + dir.string());
  Clip clip(shape);
  for (int t = 0; t < shape.frames; ++t) {
    auto is = open_in(dir / frame_name(t), true);
    is.read(reinterpret_cast<char*>(clip.frame_data(t)), std::streamsize(clip.frame_size() * sizeof(float)));
    if (is.gcount() != std::streamsize(clip.frame_size() * sizeof(float)))
      throw DataError("frame " + std::to_string(t) + " of " + dir.string() + " is truncated");
  }
  return clip;
}

void write_mask(const fs::path& path, const RegionMask& mask) {
  auto os = open_out(path, true);
  const std::array<std::uint32_t, 3> dims{std::uint32_t(mask.frames()), std::uint32_t(mask.height()),
                                          std::uint32_t(mask.width())};
  os.write("EDMK", 4);
  os.write(reinterpret_cast<const char*>(dims.data()), sizeof dims);
  for (long v = 0; v < mask.voxels(); ++v) os.put(mask.at(v) ? 1 : 0);
  if (!os) throw DataError("failed writing " + path.string());
}

RegionMask read_mask(const fs::path& path) {
  auto is = open_in(path, true);
  char magic[4];
  std::array<std::uint32_t, 3> dims{};
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(dims.data()), sizeof dims);
  if (!is || std::string(magic, 4) != "EDMK") throw DataError(path.string() + " is not a mask file");
  RegionMask mask{int(dims[0]), int(dims[1]), int(dims[2])};
  for (long v = 0; v < mask.voxels(); ++v) {
    const int c = is.get();
    if (c != 0 && c != 1) throw DataError(path.string() + " is truncated or holds non-binary values");
    mask.set_at(v, c == 1);
  }
  return mask;
}

void write_units_file(const fs::path& path, const UnitSequence& units) {
  auto os = open_out(path);
  write_units(os, units);
}

UnitSequence read_units_file(const fs::path& path, int vocab) {
  auto is = open_in(path);
  return read_units(is, vocab);
}

void write_landmarks_file(const fs::path& path, const std::vector<LandmarkFrame>& frames) {
  auto os = open_out(path);
  write_landmarks(os, frames);
}

std::vector<LandmarkFrame> read_landmarks_file(const fs::path& path, const std::vector<int>& lip_indices) {
  auto is = open_in(path);
  return read_landmarks(is, lip_indices);
}

void write_blob_spec(const fs::path& path, const BlobSpec& s) {
  auto os = open_out(path);
  os.precision(17);
  os << "image_size " << s.image_size << "\nframes " << s.frames << "\nface " << s.face_cx << ' ' << s.face_cy << ' '
     << s.face_radius << "\nmouth " << s.mouth_cx << ' ' << s.mouth_cy << ' ' << s.mouth_half_width << ' '
     << s.mouth_max_half_height << "\nmask_top " << s.mask_top << "\nidentity_hue " << s.identity_hue
     << "\naperture_map";
  for (double a : s.aperture_map) os << ' ' << a;
  os << '\n';
}

BlobSpec read_blob_spec(const fs::path& path) {
  auto is = open_in(path);
  BlobSpec s;
  auto numbers = [](const std::string& key, const std::vector<std::string>& v, size_t n) {
    if (n && v.size() != n) throw ConfigError("key '" + key + "' expects " + std::to_string(n) + " values");
    std::vector<double> out;
    for (const auto& x : v) out.push_back(kv_double(key, {x}));
    return out;
  };
  for (const auto& [key, values] : read_key_values(is)) {
    if (key == "image_size") s.image_size = kv_int(key, values);
    else if (key == "frames") s.frames = kv_int(key, values);
    else if (key == "face") {
      const auto v = numbers(key, values, 3);
      s.face_cx = v[0], s.face_cy = v[1], s.face_radius = v[2];
    } else if (key == "mouth") {
      const auto v = numbers(key, values, 4);
      s.mouth_cx = v[0], s.mouth_cy = v[1], s.mouth_half_width = v[2], s.mouth_max_half_height = v[3];
    } else if (key == "mask_top") s.mask_top = kv_double(key, values);
    else if (key == "identity_hue") s.identity_hue = kv_double(key, values);
    else if (key == "aperture_map") s.aperture_map = numbers(key, values, 0);
    else throw ConfigError("unknown blob spec key '" + key + "' in " + path.string());
  }
  s.validate();
  return s;
}

std::vector<SampleFiles> read_dataset_manifest(const fs::path& root) {
  std::ifstream is(root / "dataset.txt");
  if (!is) throw ConfigError("dataset manifest " + (root / "dataset.txt").string() + " not found");
  std::vector<SampleFiles> out;
  for (std::string line; std::getline(is, line);) {
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name) || name[0] == '#') continue;
    out.push_back(SampleFiles{root / name});
  }
  if (out.empty()) throw ConfigError("dataset manifest in " + root.string() + " lists no samples");
  return out;
}

void write_dataset_manifest(const fs::path& root, const std::vector<std::string>& samples) {
  auto os = open_out(root / "dataset.txt");
  for (const auto& s : samples) os << s << '\n';
}

}  // namespace edidub
