#pragma once

#include <vector>

#include "edidub/nn/layers.hpp"

namespace edidub::nn {

template <typename S>
struct AttentionCache {
  NormCache<S> norm;
  RowMatrix<S> normed;            // N x C
  RowMatrix<S> qkv;               // N x 3C
  std::vector<RowMatrix<S>> probs;  // per head, N x N
  RowMatrix<S> heads;             // N x C, concatenated head outputs
};

/// Residual multi-head self-attention over all T*H*W positions jointly.
struct SpatioTemporalAttention {
  int channels = 0, heads = 4;
  GroupNorm norm;
  Linear qkv;
  Linear proj;

  template <typename S>
  static SpatioTemporalAttention make(ParameterSet<S>& ps, const std::string& name, int channels,
                                      int heads, int groups) {
    if (channels % heads != 0) throw ArgumentError("attention channels not divisible by heads");
    SpatioTemporalAttention a;
    a.channels = channels;
    a.heads = heads;
    a.norm = GroupNorm::make(ps, name + ".norm", channels, groups);
    a.qkv = Linear::make(ps, name + ".qkv", channels, 3 * channels);
    a.proj = Linear::make(ps, name + ".proj", channels, channels);
    return a;
  }

  template <typename S>
  void init(ParameterSet<S>& ps, std::mt19937_64& rng) const {
    norm.init(ps);
    qkv.init(ps, rng);
    // proj stays zero: the block starts as identity
  }

  template <typename S>
  Tensor<S> forward(const ParameterSet<S>& ps, const Tensor<S>& x, AttentionCache<S>* cache) const {
    const long n = x.voxels();
    const int dh = channels / heads;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    AttentionCache<S> local;
    AttentionCache<S>& c = cache ? *cache : local;

    Tensor<S> h = norm.forward(ps, x, &c.norm);
    c.normed = h.matrix();
    c.qkv = qkv.forward(ps, c.normed);
    c.heads.resize(n, channels);
    c.probs.assign(heads, RowMatrix<S>());
    for (int k = 0; k < heads; ++k) {
      auto q = c.qkv.middleCols(k * dh, dh);
      auto kk = c.qkv.middleCols(channels + k * dh, dh);
      auto v = c.qkv.middleCols(2 * channels + k * dh, dh);
      RowMatrix<S> logits = (q * kk.transpose()) * scale;
      Vector<S> row_max = logits.rowwise().maxCoeff();
      logits.colwise() -= row_max;
      logits = logits.array().exp().matrix();
      Vector<S> row_sum = logits.rowwise().sum();
      logits.array().colwise() /= row_sum.array();
      c.heads.middleCols(k * dh, dh).noalias() = logits * v;
      c.probs[k] = std::move(logits);
    }
    Tensor<S> y = x;
    y.matrix() += proj.forward(ps, c.heads);
    if (!cache) c.probs.clear();
    return y;
  }

  template <typename S>
  Tensor<S> backward(const ParameterSet<S>& ps, Vector<S>& grads, const AttentionCache<S>& c,
                     const Tensor<S>& dy) const {
    const long n = dy.voxels();
    const int dh = channels / heads;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    RowMatrix<S> dheads = proj.backward(ps, grads, c.heads, RowMatrix<S>(dy.matrix()));
    RowMatrix<S> dqkv(n, 3 * channels);
    for (int k = 0; k < heads; ++k) {
      auto q = c.qkv.middleCols(k * dh, dh);
      auto kk = c.qkv.middleCols(channels + k * dh, dh);
      auto v = c.qkv.middleCols(2 * channels + k * dh, dh);
      const RowMatrix<S>& p = c.probs[k];
      auto dout = dheads.middleCols(k * dh, dh);
      RowMatrix<S> dp = dout * v.transpose();
      dqkv.middleCols(2 * channels + k * dh, dh).noalias() = p.transpose() * dout;
      Vector<S> inner = (dp.array() * p.array()).rowwise().sum();
      RowMatrix<S> dlogits = (p.array() * (dp.array().colwise() - inner.array())).matrix() * scale;
      dqkv.middleCols(k * dh, dh).noalias() = dlogits * kk;
      dqkv.middleCols(channels + k * dh, dh).noalias() = dlogits.transpose() * q;
    }
    RowMatrix<S> dnormed = qkv.backward(ps, grads, c.normed, dqkv);
    Tensor<S> dh_t(dy.shape());
    dh_t.matrix() = dnormed;
    Tensor<S> dx = norm.backward(ps, grads, c.norm, dh_t);
    dx.values() += dy.values();
    return dx;
  }
};

}  // namespace edidub::nn
