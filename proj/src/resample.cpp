#include "edidub/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace edidub {

double keys_cubic(double x, double a) {
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

namespace {

struct Taps {
  std::vector<int> first;
  std::vector<std::vector<double>> weights;
};

Taps make_taps(int in_size, int out_size) {
  const double scale = double(in_size) / out_size;
  const double stretch = std::max(1.0, scale);
  const double support = 2.0 * stretch;
  Taps taps;
  taps.first.resize(out_size);
  taps.weights.resize(out_size);
  for (int o = 0; o < out_size; ++o) {
    const double centre = (o + 0.5) * scale;
    const int lo = std::max(0, int(std::floor(centre - support)));
    const int hi = std::min(in_size, int(std::ceil(centre + support)));
    std::vector<double> w;
    double total = 0.0;
    for (int i = lo; i < hi; ++i) {
      const double v = keys_cubic((i + 0.5 - centre) / stretch);
      w.push_back(v);
      total += v;
    }
    for (double& v : w) v /= total;
    taps.first[o] = lo;
    taps.weights[o] = std::move(w);
  }
  return taps;
}

}  // namespace

Clip resize_bicubic(const Clip& clip, int out_height, int out_width) {
  require(out_height > 0 && out_width > 0, "resize target must be positive");
  const int T = clip.frames(), H = clip.height(), W = clip.width(), C = clip.channels();
  if (H == out_height && W == out_width) return clip;
  const Taps ty = make_taps(H, out_height), tx = make_taps(W, out_width);
  Clip out(T, out_height, out_width, C);
  std::vector<double> rows(size_t(out_height) * W * C);
  for (int t = 0; t < T; ++t) {
    std::fill(rows.begin(), rows.end(), 0.0);
    for (int oy = 0; oy < out_height; ++oy)
      for (size_t k = 0; k < ty.weights[oy].size(); ++k) {
        const double w = ty.weights[oy][k];
        const int y = ty.first[oy] + int(k);
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < C; ++c) rows[(size_t(oy) * W + x) * C + c] += w * clip(t, y, x, c);
      }
    for (int oy = 0; oy < out_height; ++oy)
      for (int ox = 0; ox < out_width; ++ox)
        for (int c = 0; c < C; ++c) {
          double v = 0.0;
          for (size_t k = 0; k < tx.weights[ox].size(); ++k)
            v += tx.weights[ox][k] * rows[(size_t(oy) * W + tx.first[ox] + k) * C + c];
          out(t, oy, ox, c) = static_cast<float>(std::clamp(v, -1.0, 1.0));
        }
  }
  return out;
}

}  // namespace edidub
