#pragma once

#include <random>
#include <string>
#include <vector>

#include "edidub/tensor.hpp"

namespace edidub::nn {

struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  long offset = 0;
  long size = 0;
};

/// All trainable values of a model in one flat vector plus a manifest of
/// named views into it. Gradients, optimizer moments and EMA copies share
/// the same layout.
template <typename S>
class ParameterSet {
 public:
  /// Reserves a named block and returns its offset.
  long add(const std::string& name, std::vector<int> shape) {
    long n = 1;
    for (int d : shape) n *= d;
    const long offset = total_;
    entries_.push_back(ParamEntry{name, std::move(shape), offset, n});
    total_ += n;
    values_.conservativeResize(total_);
    values_.segment(offset, n).setZero();
    return offset;
  }

  long size() const { return total_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  Vector<S>& values() { return values_; }
  const Vector<S>& values() const { return values_; }
  const S* data() const { return values_.data(); }
  S* data() { return values_.data(); }

  const ParamEntry& entry(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e;
    throw ArgumentError("no parameter named " + name);
  }

  template <typename T>
  ParameterSet<T> cast() const {
    ParameterSet<T> out;
    for (const auto& e : entries_) out.add(e.name, e.shape);
    out.values() = values_.template cast<T>();
    return out;
  }

  bool same_layout(const ParameterSet& o) const {
    if (o.entries_.size() != entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name != o.entries_[i].name || entries_[i].shape != o.entries_[i].shape)
        return false;
    return true;
  }

 private:
  std::vector<ParamEntry> entries_;
  Vector<S> values_;
  long total_ = 0;
};

template <typename S>
void fill_normal(Vector<S>& v, long offset, long n, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (long i = 0; i < n; ++i) v[offset + i] = static_cast<S>(dist(rng));
}

}  // namespace edidub::nn
