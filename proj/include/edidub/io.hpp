#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "edidub/conditioning.hpp"
#include "edidub/synthetic.hpp"
#include "edidub/tensor.hpp"

namespace edidub {

/// Clip directory: manifest.txt ("frames", "height", "width", "channels",
/// "fps", "format float32le") plus frame_00000.bin ... each holding
/// height*width*channels little-endian float32 in row-major HWC order.
void write_clip(const std::filesystem::path& dir, const Clip& clip, int fps = 25);
Clip read_clip(const std::filesystem::path& dir);

/// Mask file: "EDMK", then frames, height, width as little-endian uint32,
/// then one byte (0 or 1) per voxel.
void write_mask(const std::filesystem::path& path, const RegionMask& mask);
RegionMask read_mask(const std::filesystem::path& path);

void write_units_file(const std::filesystem::path& path, const UnitSequence& units);
UnitSequence read_units_file(const std::filesystem::path& path, int vocab);

void write_landmarks_file(const std::filesystem::path& path, const std::vector<LandmarkFrame>& frames);
std::vector<LandmarkFrame> read_landmarks_file(const std::filesystem::path& path, const std::vector<int>& lip_indices);

/// Blob spec as key/value text (aperture_map lists one value per unit).
void write_blob_spec(const std::filesystem::path& path, const BlobSpec& spec);
BlobSpec read_blob_spec(const std::filesystem::path& path);

/// One synthetic sample directory:
///   clip/        low-resolution clip
///   hr/          optional high-resolution render of the same units
///   mask.bin, hr_mask.bin, landmarks.txt, units.txt, spec.txt
struct SampleFiles {
  std::filesystem::path dir;
  std::filesystem::path clip() const { return dir / "clip"; }
  std::filesystem::path hr() const { return dir / "hr"; }
  std::filesystem::path mask() const { return dir / "mask.bin"; }
  std::filesystem::path hr_mask() const { return dir / "hr_mask.bin"; }
  std::filesystem::path landmarks() const { return dir / "landmarks.txt"; }
  std::filesystem::path units() const { return dir / "units.txt"; }
  std::filesystem::path spec() const { return dir / "spec.txt"; }
};

/// Dataset manifest: dataset.txt listing one sample subdirectory per line.
std::vector<SampleFiles> read_dataset_manifest(const std::filesystem::path& root);
void write_dataset_manifest(const std::filesystem::path& root, const std::vector<std::string>& samples);

}  // namespace edidub
