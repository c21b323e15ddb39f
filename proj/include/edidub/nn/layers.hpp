#pragma once

#include <cmath>
#include <string>

#include "edidub/nn/parameters.hpp"

// Forward/backward kernels on [T,H,W,C] tensors. Every layer is a small
// descriptor holding offsets into a ParameterSet; forward() optionally
// records what backward() needs in a cache object owned by the caller.

namespace edidub::nn {

template <typename S>
using MatMap = Eigen::Map<RowMatrix<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMatrix<S>>;

template <typename S>
ConstMatMap<S> param_matrix(const ParameterSet<S>& ps, long offset, long rows, long cols) {
  return ConstMatMap<S>(ps.data() + offset, rows, cols);
}
template <typename S>
MatMap<S> grad_matrix(Vector<S>& g, long offset, long rows, long cols) {
  return MatMap<S>(g.data() + offset, rows, cols);
}

// ---------------------------------------------------------------------------
// Activation

template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  y.values() = x.values() / (S(1) + (-x.values()).exp());
  return y;
}

template <typename S>
Tensor<S> silu_backward(const Tensor<S>& x, const Tensor<S>& dy) {
  Tensor<S> dx(x.shape());
  const ArrayX<S> sig = S(1) / (S(1) + (-x.values()).exp());
  dx.values() = dy.values() * sig * (S(1) + x.values() * (S(1) - sig));
  return dx;
}

// ---------------------------------------------------------------------------
// 3D convolution, stride 1, zero "same" padding.

template <typename S>
struct Conv3dCache {
  RowMatrix<S> cols;  // im2col of the input (empty for 1x1x1 kernels)
  Tensor<S> input;    // kept for 1x1x1 kernels
};

struct Conv3d {
  int in_ch = 0, out_ch = 0;
  int kt = 3, kh = 3, kw = 3;
  long w_off = 0, b_off = 0;

  long taps() const { return static_cast<long>(kt) * kh * kw; }
  bool pointwise() const { return taps() == 1; }

  template <typename S>
  static Conv3d make(ParameterSet<S>& ps, const std::string& name, int in, int out, int kt = 3,
                     int kh = 3, int kw = 3) {
    Conv3d c;
    c.in_ch = in;
    c.out_ch = out;
    c.kt = kt;
    c.kh = kh;
    c.kw = kw;
    c.w_off = ps.add(name + ".weight", {kt, kh, kw, in, out});
    c.b_off = ps.add(name + ".bias", {out});
    return c;
  }

  template <typename S>
  void init(ParameterSet<S>& ps, std::mt19937_64& rng, double gain = 1.0) const {
    fill_normal(ps.values(), w_off, taps() * in_ch * out_ch, gain / std::sqrt(double(taps() * in_ch)), rng);
  }

  template <typename S>
  RowMatrix<S> im2col(const Tensor<S>& x) const {
    const int T = x.frames(), H = x.height(), W = x.width(), C = in_ch;
    RowMatrix<S> cols(x.voxels(), taps() * C);
    const int pt = kt / 2, ph = kh / 2, pw = kw / 2;
    long row = 0;
    for (int t = 0; t < T; ++t)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx, ++row) {
          S* dst = cols.row(row).data();
          for (int dt = 0; dt < kt; ++dt) {
            const int st = t + dt - pt;
            for (int dy = 0; dy < kh; ++dy) {
              const int sy = y + dy - ph;
              for (int dx = 0; dx < kw; ++dx, dst += C) {
                const int sx = xx + dx - pw;
                if (st < 0 || st >= T || sy < 0 || sy >= H || sx < 0 || sx >= W) {
                  std::fill(dst, dst + C, S(0));
                } else {
                  const S* src = x.data() + x.index(st, sy, sx, 0);
                  std::copy(src, src + C, dst);
                }
              }
            }
          }
        }
    return cols;
  }

  template <typename S>
  void col2im(const RowMatrix<S>& dcols, Tensor<S>& dx) const {
    const int T = dx.frames(), H = dx.height(), W = dx.width(), C = in_ch;
    const int pt = kt / 2, ph = kh / 2, pw = kw / 2;
    long row = 0;
    for (int t = 0; t < T; ++t)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx, ++row) {
          const S* src = dcols.row(row).data();
          for (int dt = 0; dt < kt; ++dt) {
            const int st = t + dt - pt;
            for (int dy = 0; dy < kh; ++dy) {
              const int sy = y + dy - ph;
              for (int ddx = 0; ddx < kw; ++ddx, src += C) {
                const int sx = xx + ddx - pw;
                if (st < 0 || st >= T || sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                S* dst = dx.data() + dx.index(st, sy, sx, 0);
                for (int c = 0; c < C; ++c) dst[c] += src[c];
              }
            }
          }
        }
  }

  template <typename S>
  Tensor<S> forward(const ParameterSet<S>& ps, const Tensor<S>& x, Conv3dCache<S>* cache) const {
    if (x.channels() != in_ch)
      throw ContractError("conv input has " + std::to_string(x.channels()) + " channels, expected " +
                          std::to_string(in_ch));
    Tensor<S> y(x.frames(), x.height(), x.width(), out_ch);
    const auto w = param_matrix(ps, w_off, taps() * in_ch, out_ch);
    const auto b = param_matrix(ps, b_off, 1, out_ch);
    if (pointwise()) {
      y.matrix().noalias() = x.matrix() * w;
      if (cache) cache->input = x;
    } else {
      RowMatrix<S> cols = im2col(x);
      y.matrix().noalias() = cols * w;
      if (cache) cache->cols = std::move(cols);
    }
    y.matrix().rowwise() += b.row(0);
    return y;
  }

  template <typename S>
  Tensor<S> backward(const ParameterSet<S>& ps, Vector<S>& grads, const Conv3dCache<S>& cache,
                     const Tensor<S>& dy) const {
    const auto w = param_matrix(ps, w_off, taps() * in_ch, out_ch);
    auto gw = grad_matrix(grads, w_off, taps() * in_ch, out_ch);
    auto gb = grad_matrix(grads, b_off, 1, out_ch);
    gb.row(0) += dy.matrix().colwise().sum();
    Tensor<S> dx(dy.frames(), dy.height(), dy.width(), in_ch);
    if (pointwise()) {
      gw.noalias() += cache.input.matrix().transpose() * dy.matrix();
      dx.matrix().noalias() = dy.matrix() * w.transpose();
    } else {
      gw.noalias() += cache.cols.transpose() * dy.matrix();
      RowMatrix<S> dcols = dy.matrix() * w.transpose();
      col2im(dcols, dx);
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Dense projection on row vectors.

struct Linear {
  int in = 0, out = 0;
  long w_off = 0, b_off = 0;

  template <typename S>
  static Linear make(ParameterSet<S>& ps, const std::string& name, int in, int out) {
    Linear l;
    l.in = in;
    l.out = out;
    l.w_off = ps.add(name + ".weight", {in, out});
    l.b_off = ps.add(name + ".bias", {out});
    return l;
  }

  template <typename S>
  void init(ParameterSet<S>& ps, std::mt19937_64& rng, double gain = 1.0) const {
    fill_normal(ps.values(), w_off, long(in) * out, gain / std::sqrt(double(in)), rng);
  }

  template <typename S>
  RowMatrix<S> forward(const ParameterSet<S>& ps, const RowMatrix<S>& x) const {
    RowMatrix<S> y = x * param_matrix(ps, w_off, in, out);
    y.rowwise() += param_matrix(ps, b_off, 1, out).row(0);
    return y;
  }

  template <typename S>
  RowMatrix<S> backward(const ParameterSet<S>& ps, Vector<S>& grads, const RowMatrix<S>& x,
                        const RowMatrix<S>& dy) const {
    grad_matrix(grads, w_off, in, out).noalias() += x.transpose() * dy;
    grad_matrix(grads, b_off, 1, out).row(0) += dy.colwise().sum();
    return dy * param_matrix(ps, w_off, in, out).transpose();
  }
};

// ---------------------------------------------------------------------------
// Per-frame normalization. Statistics are taken over (H, W, channels in group)
// separately for every frame, so no information crosses time here.

template <typename S>
struct NormCache {
  Tensor<S> normalized;   // x_hat
  RowMatrix<S> inv_std;   // [T, groups]
};

constexpr double kNormEpsilon = 1e-5;

template <typename S>
Tensor<S> normalize_per_frame(const Tensor<S>& x, int groups, NormCache<S>* cache) {
  const int T = x.frames(), C = x.channels();
  const long hw = static_cast<long>(x.height()) * x.width();
  const int cg = C / groups;
  Tensor<S> y(x.shape());
  RowMatrix<S> inv_std(T, groups);
  for (int t = 0; t < T; ++t) {
    ConstMatMap<S> xf(x.frame_data(t), hw, C);
    MatMap<S> yf(y.frame_data(t), hw, C);
    for (int g = 0; g < groups; ++g) {
      auto block = xf.middleCols(g * cg, cg);
      const S mean = block.mean();
      const S var = (block.array() - mean).square().mean();
      const S rstd = S(1) / std::sqrt(var + S(kNormEpsilon));
      yf.middleCols(g * cg, cg) = (block.array() - mean) * rstd;
      inv_std(t, g) = rstd;
    }
  }
  if (cache) {
    cache->normalized = y;
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename S>
Tensor<S> normalize_per_frame_backward(const NormCache<S>& cache, const Tensor<S>& dxhat, int groups) {
  const Tensor<S>& xhat = cache.normalized;
  const int T = xhat.frames(), C = xhat.channels();
  const long hw = static_cast<long>(xhat.height()) * xhat.width();
  const int cg = C / groups;
  const S n = static_cast<S>(hw * cg);
  Tensor<S> dx(xhat.shape());
  for (int t = 0; t < T; ++t) {
    ConstMatMap<S> xh(xhat.frame_data(t), hw, C);
    ConstMatMap<S> dh(dxhat.frame_data(t), hw, C);
    MatMap<S> out(dx.frame_data(t), hw, C);
    for (int g = 0; g < groups; ++g) {
      auto xb = xh.middleCols(g * cg, cg).array();
      auto db = dh.middleCols(g * cg, cg).array();
      const S sum_d = db.sum();
      const S sum_dx = (db * xb).sum();
      out.middleCols(g * cg, cg) = (cache.inv_std(t, g) / n) * (n * db - sum_d - xb * sum_dx);
    }
  }
  return dx;
}

/// GroupNorm with per-channel affine, statistics per frame.
struct GroupNorm {
  int channels = 0, groups = 1;
  long gamma_off = 0, beta_off = 0;

  template <typename S>
  static GroupNorm make(ParameterSet<S>& ps, const std::string& name, int channels, int groups) {
    GroupNorm n;
    n.channels = channels;
    n.groups = groups;
    n.gamma_off = ps.add(name + ".gamma", {channels});
    n.beta_off = ps.add(name + ".beta", {channels});
    return n;
  }

  template <typename S>
  void init(ParameterSet<S>& ps) const {
    ps.values().segment(gamma_off, channels).setOnes();
  }

  template <typename S>
  Tensor<S> forward(const ParameterSet<S>& ps, const Tensor<S>& x, NormCache<S>* cache) const {
    NormCache<S> local;
    Tensor<S> y = normalize_per_frame(x, groups, cache ? cache : &local);
    const auto gamma = param_matrix(ps, gamma_off, 1, channels).row(0).array();
    const auto beta = param_matrix(ps, beta_off, 1, channels).row(0).array();
    auto m = y.matrix();
    m.array().rowwise() *= gamma;
    m.array().rowwise() += beta;
    return y;
  }

  template <typename S>
  Tensor<S> backward(const ParameterSet<S>& ps, Vector<S>& grads, const NormCache<S>& cache,
                     const Tensor<S>& dy) const {
    auto gg = grad_matrix(grads, gamma_off, 1, channels);
    auto gb = grad_matrix(grads, beta_off, 1, channels);
    gg.row(0) += (dy.matrix().array() * cache.normalized.matrix().array()).colwise().sum().matrix();
    gb.row(0) += dy.matrix().colwise().sum();
    Tensor<S> dxhat = dy;
    dxhat.matrix().array().rowwise() *= param_matrix(ps, gamma_off, 1, channels).row(0).array();
    return normalize_per_frame_backward(cache, dxhat, groups);
  }
};

/// Scale/shift per (frame, channel): y = gamma[t,c] * x + beta[t,c].
template <typename S>
Tensor<S> modulate(const Tensor<S>& x, const RowMatrix<S>& gamma, const RowMatrix<S>& beta) {
  Tensor<S> y(x.shape());
  const long hw = static_cast<long>(x.height()) * x.width();
  const int C = x.channels();
  for (int t = 0; t < x.frames(); ++t) {
    ConstMatMap<S> xf(x.frame_data(t), hw, C);
    MatMap<S> yf(y.frame_data(t), hw, C);
    yf.array() = (xf.array().rowwise() * gamma.row(t).array()).rowwise() + beta.row(t).array();
  }
  return y;
}

// ---------------------------------------------------------------------------
// Spatial resampling (time untouched).

template <typename S>
Tensor<S> avg_pool2(const Tensor<S>& x) {
  require(x.height() % 2 == 0 && x.width() % 2 == 0, "pooling needs even spatial size");
  Tensor<S> y(x.frames(), x.height() / 2, x.width() / 2, x.channels());
  for (int t = 0; t < y.frames(); ++t)
    for (int i = 0; i < y.height(); ++i)
      for (int j = 0; j < y.width(); ++j)
        for (int c = 0; c < y.channels(); ++c)
          y(t, i, j, c) = S(0.25) * (x(t, 2 * i, 2 * j, c) + x(t, 2 * i + 1, 2 * j, c) +
                                     x(t, 2 * i, 2 * j + 1, c) + x(t, 2 * i + 1, 2 * j + 1, c));
  return y;
}

template <typename S>
Tensor<S> avg_pool2_backward(const Tensor<S>& dy) {
  Tensor<S> dx(dy.frames(), dy.height() * 2, dy.width() * 2, dy.channels());
  for (int t = 0; t < dx.frames(); ++t)
    for (int i = 0; i < dx.height(); ++i)
      for (int j = 0; j < dx.width(); ++j)
        for (int c = 0; c < dx.channels(); ++c) dx(t, i, j, c) = S(0.25) * dy(t, i / 2, j / 2, c);
  return dx;
}

template <typename S>
Tensor<S> upsample_nearest2(const Tensor<S>& x) {
  Tensor<S> y(x.frames(), x.height() * 2, x.width() * 2, x.channels());
  for (int t = 0; t < y.frames(); ++t)
    for (int i = 0; i < y.height(); ++i)
      for (int j = 0; j < y.width(); ++j)
        for (int c = 0; c < y.channels(); ++c) y(t, i, j, c) = x(t, i / 2, j / 2, c);
  return y;
}

template <typename S>
Tensor<S> upsample_nearest2_backward(const Tensor<S>& dy) {
  Tensor<S> dx(dy.frames(), dy.height() / 2, dy.width() / 2, dy.channels());
  for (int t = 0; t < dy.frames(); ++t)
    for (int i = 0; i < dy.height(); ++i)
      for (int j = 0; j < dy.width(); ++j)
        for (int c = 0; c < dy.channels(); ++c) dx(t, i / 2, j / 2, c) += dy(t, i, j, c);
  return dx;
}

}  // namespace edidub::nn
