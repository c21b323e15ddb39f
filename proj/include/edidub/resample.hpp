#pragma once

#include "edidub/tensor.hpp"

namespace edidub {

/// Separable bicubic resize (Keys kernel, a = -0.5) of every frame. When
/// shrinking, the kernel is stretched by the scale factor so the result is
/// antialiased; taps falling outside the image are dropped and the remaining
/// weights renormalized. Results are clamped to [-1, 1].
Clip resize_bicubic(const Clip& clip, int out_height, int out_width);

/// Cubic convolution kernel.
double keys_cubic(double x, double a = -0.5);

}  // namespace edidub
