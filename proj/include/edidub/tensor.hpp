#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "edidub/errors.hpp"

namespace edidub {

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

struct Shape4 {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;

  long voxels() const { return static_cast<long>(frames) * height * width; }
  long size() const { return voxels() * channels; }
  bool operator==(const Shape4&) const = default;
  std::string str() const {
    return "[" + std::to_string(frames) + "," + std::to_string(height) + "," +
           std::to_string(width) + "," + std::to_string(channels) + "]";
  }
};

/// Dense [T, H, W, C] tensor, channels-last, contiguous.
///
/// Values are held in a flat Eigen array so that element-wise arithmetic can be
/// written as array expressions; `matrix()` views the same storage as a
/// (T*H*W) x C row-major matrix, which is what the convolution and
/// normalization kernels consume.
template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using MatrixMap = Eigen::Map<RowMatrix<S>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<S>>;

  Tensor() = default;
  explicit Tensor(Shape4 shape) : shape_(shape), values_(ArrayX<S>::Zero(shape.size())) {
    require(shape.frames >= 0 && shape.height >= 0 && shape.width >= 0 && shape.channels >= 0,
            "negative tensor extent");
  }
  Tensor(int t, int h, int w, int c) : Tensor(Shape4{t, h, w, c}) {}

  static Tensor constant(Shape4 shape, S value) {
    Tensor out(shape);
    out.values_.setConstant(value);
    return out;
  }

  const Shape4& shape() const { return shape_; }
  int frames() const { return shape_.frames; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  long size() const { return shape_.size(); }
  long voxels() const { return shape_.voxels(); }

  ArrayX<S>& values() { return values_; }
  const ArrayX<S>& values() const { return values_; }
  S* data() { return values_.data(); }
  const S* data() const { return values_.data(); }

  MatrixMap matrix() { return MatrixMap(values_.data(), shape_.voxels(), shape_.channels); }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(values_.data(), shape_.voxels(), shape_.channels);
  }

  long index(int t, int y, int x, int c) const {
    return ((static_cast<long>(t) * shape_.height + y) * shape_.width + x) * shape_.channels + c;
  }
  S& operator()(int t, int y, int x, int c) { return values_[index(t, y, x, c)]; }
  S operator()(int t, int y, int x, int c) const { return values_[index(t, y, x, c)]; }

  long frame_size() const { return static_cast<long>(shape_.height) * shape_.width * shape_.channels; }
  S* frame_data(int t) { return values_.data() + t * frame_size(); }
  const S* frame_data(int t) const { return values_.data() + t * frame_size(); }

  /// Copy of frames [begin, end).
  Tensor slice_frames(int begin, int end) const {
    require(0 <= begin && begin <= end && end <= shape_.frames, "frame slice out of range");
    Tensor out(Shape4{end - begin, shape_.height, shape_.width, shape_.channels});
    std::copy(frame_data(begin), frame_data(begin) + (end - begin) * frame_size(), out.data());
    return out;
  }

  void set_frames(int begin, const Tensor& src) {
    require(src.height() == height() && src.width() == width() && src.channels() == channels(),
            "frame write shape mismatch");
    require(begin >= 0 && begin + src.frames() <= frames(), "frame write out of range");
    std::copy(src.data(), src.data() + src.size(), frame_data(begin));
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    out.values() = values_.template cast<T>();
    return out;
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && (values_ == o.values_).all();
  }

 private:
  Shape4 shape_{};
  ArrayX<S> values_;
};

/// Binary [T, H, W] mask marking the editable region; broadcast over channels.
class RegionMask {
 public:
  RegionMask() = default;
  RegionMask(int frames, int height, int width, bool value = false)
      : frames_(frames), height_(height), width_(width),
        bits_(static_cast<std::size_t>(frames) * height * width, value ? 1 : 0) {}

  static RegionMask ones(int t, int h, int w) { return RegionMask(t, h, w, true); }
  static RegionMask zeros(int t, int h, int w) { return RegionMask(t, h, w, false); }

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  long voxels() const { return static_cast<long>(bits_.size()); }

  bool operator()(int t, int y, int x) const { return bits_[index(t, y, x)] != 0; }
  void set(int t, int y, int x, bool v) { bits_[index(t, y, x)] = v ? 1 : 0; }
  bool at(long voxel) const { return bits_[voxel] != 0; }
  void set_at(long voxel, bool v) { bits_[voxel] = v ? 1 : 0; }

  long count() const {
    long n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  bool empty_region() const { return count() == 0; }

  void clear_frame(int t) {
    std::fill(bits_.begin() + t * frame_voxels(), bits_.begin() + (t + 1) * frame_voxels(), 0);
  }

  RegionMask slice_frames(int begin, int end) const {
    require(0 <= begin && begin <= end && end <= frames_, "mask slice out of range");
    RegionMask out(end - begin, height_, width_);
    std::copy(bits_.begin() + begin * frame_voxels(), bits_.begin() + end * frame_voxels(),
              out.bits_.begin());
    return out;
  }

  /// Mask values expanded over `channels` as a 0/1 array of scalar type.
  template <typename S>
  ArrayX<S> broadcast(int channels) const {
    ArrayX<S> out(voxels() * channels);
    for (long v = 0; v < voxels(); ++v)
      for (int c = 0; c < channels; ++c) out[v * channels + c] = bits_[v] ? S(1) : S(0);
    return out;
  }

  bool matches(const Shape4& s) const {
    return s.frames == frames_ && s.height == height_ && s.width == width_;
  }

  const std::vector<std::uint8_t>& bits() const { return bits_; }
  bool operator==(const RegionMask&) const = default;

 private:
  long frame_voxels() const { return static_cast<long>(height_) * width_; }
  long index(int t, int y, int x) const {
    return (static_cast<long>(t) * height_ + y) * width_ + x;
  }

  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

using Clip = Tensor<float>;

/// out = where(mask, inside, outside), mask broadcast over channels.
template <typename S>
Tensor<S> composite(const Tensor<S>& inside, const Tensor<S>& outside, const RegionMask& mask) {
  require(inside.shape() == outside.shape() && mask.matches(inside.shape()),
          "composite shape mismatch");
  Tensor<S> out = outside;
  const int c = inside.channels();
  for (long v = 0; v < mask.voxels(); ++v) {
    if (!mask.at(v)) continue;
    for (int k = 0; k < c; ++k) out.values()[v * c + k] = inside.values()[v * c + k];
  }
  return out;
}

/// Channel concatenation [.., Ca] ++ [.., Cb] -> [.., Ca+Cb].
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.frames() == b.frames() && a.height() == b.height() && a.width() == b.width(),
          "concat shape mismatch");
  Tensor<S> out(a.frames(), a.height(), a.width(), a.channels() + b.channels());
  out.matrix().leftCols(a.channels()) = a.matrix();
  out.matrix().rightCols(b.channels()) = b.matrix();
  return out;
}

/// Mirror along the width axis.
template <typename S>
Tensor<S> flip_horizontal(const Tensor<S>& x) {
  Tensor<S> out(x.shape());
  for (int t = 0; t < x.frames(); ++t)
    for (int y = 0; y < x.height(); ++y)
      for (int w = 0; w < x.width(); ++w)
        for (int c = 0; c < x.channels(); ++c) out(t, y, x.width() - 1 - w, c) = x(t, y, w, c);
  return out;
}

inline RegionMask flip_horizontal(const RegionMask& m) {
  RegionMask out(m.frames(), m.height(), m.width());
  for (int t = 0; t < m.frames(); ++t)
    for (int y = 0; y < m.height(); ++y)
      for (int w = 0; w < m.width(); ++w) out.set(t, y, m.width() - 1 - w, m(t, y, w));
  return out;
}

}  // namespace edidub
