#pragma once

// Pixel-aligned Gaussian initialization: one Gaussian per source pixel, placed by
// back-projecting the predicted depth along the pixel ray, plus a per-Gaussian
// feature query sampled from the encoder tokens for the downstream adapters.

#include <vector>

#include "gs/encoder.hpp"
#include "gs/gaussians.hpp"
#include "gs/scene.hpp"
#include "gs/tensor.hpp"

namespace gs {

struct InitConfig {
  double alpha0 = 0.5;      // initial opacity for every pixel-aligned Gaussian
  double scale_gain = 1.0;  // world scale = gain * depth / fx (one pixel footprint)
  double s_lo = 0.6;        // clamp bounds for the initial scale; strictly inside the
  double s_hi = 12.0;       // global [0.5, 15] range so delta decoding stays finite
  int64_t sh_dim = 12;      // dc (3) + one linear band (9)

  void validate() const;
};

// Builds the initial Gaussian set from posed views and their encodings: V*H*W
// pixel-aligned Gaussians, validated, with `queries` filled from the encoder
// tokens ([V*H*W, d_model], differentiable).
// mu = camera_center + depth * ray_dir (differentiable through depth),
// s is isotropic with a one-pixel footprint, r is identity, alpha = alpha0,
// dc matches the source pixel color exactly and the linear band starts at zero.
GaussianSet init_gaussians(const std::vector<View>& views, const EncodedViews& enc,
                           const InitConfig& cfg = {});

}  // namespace gs
