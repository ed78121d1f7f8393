#pragma once

#include "gs/camera.hpp"
#include "gs/gaussians.hpp"
#include "gs/tensor.hpp"
#include "gs/vecmath.hpp"

namespace gs {

// Differentiable tile-based splatting of a GaussianSet into an RGB image.
//
// Per pixel, splats are composited front to back in camera-depth order (ties
// broken by row index): w = min(alpha * exp(-0.5 d^T Sigma2d^-1 d), w_max),
// contributions with w < eps_alpha are skipped, C += T * w * color,
// T *= 1 - w, the walk stops once T < transmittance_stop, and the leftover
// transmittance lights the background.
struct RenderSettings {
  int tile_size = 16;
  Vec3 background{0.0, 0.0, 0.0};
  // Contribution floor. Tiles conservatively cull splats beyond sigma_cull
  // standard deviations; exp(-0.5 * sigma_cull^2) < eps_alpha, so tiling can
  // never drop a contribution the per-pixel floor would keep. The tiled and
  // dense walks therefore composite identical sequences, bit for bit.
  double eps_alpha = 1.0 / 255.0;
  double sigma_cull = 3.4;
  double w_max = 0.999;
  double transmittance_stop = 1e-4;
  double z_near = 1e-4;  // splats at or behind this camera depth are dropped
};

struct RenderOutput {
  Tensor image;  // [H,W,3] linear RGB, differentiable w.r.t. every field
  Tensor alpha;  // [H,W] accumulated opacity 1 - T_final, constant
};

// Tile-binned renderer; the production path.
RenderOutput render(const GaussianSet& g, const Camera& cam, const RenderSettings& st = {});

// Reference path: every pixel walks every visible splat with no tiles and no
// radius culling. It runs the same per-contribution arithmetic as render(),
// so the two must agree to the last bit; it exists as an oracle.
RenderOutput render_dense(const GaussianSet& g, const Camera& cam, const RenderSettings& st = {});

// Per-splat aggregation of a scalar per-pixel map, weighted by the splat's
// compositing weights w*T in this view. `weighted` is differentiable in
// score_map (the weights themselves are constants); `weight` is the constant
// total w*T mass each splat received (zero for invisible splats).
struct ScoreAggregate {
  Tensor weighted;  // [N,1]  sum_p w_ip T_ip score_p
  Tensor weight;    // [N,1]  sum_p w_ip T_ip
};
ScoreAggregate aggregate_scores(const GaussianSet& g, const Camera& cam, const Tensor& score_map,
                                const RenderSettings& st = {});

}  // namespace gs
