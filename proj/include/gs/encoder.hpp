#pragma once

#include <vector>

#include "gs/camera.hpp"
#include "gs/ops.hpp"
#include "gs/optim.hpp"
#include "gs/rng.hpp"
#include "gs/scene.hpp"

namespace gs {

// Multi-view feature encoder with cross-view attention and plane-sweep depth.
// Three conv stages take each view to quarter resolution, joint pre-LN
// self-attention mixes information across all views' tokens, and a per-view
// correlation volume over inverse-depth candidates becomes a full-resolution
// depth map through softmax expectation and bilinear upsampling.
struct EncoderConfig {
  int64_t base_width = 32;  // conv widths are {w, 2w, 4w}; tokens carry 4w
  int64_t attn_blocks = 2;
  int64_t attn_heads = 4;
  int64_t depth_planes = 32;
  double d_near = 1.0;
  double d_far = 10.0;

  int64_t d_model() const { return 4 * base_width; }
  void validate() const;
};

// One pre-LN transformer block: x += attn(LN(x)); x += mlp(LN(x)). The output
// projections start at zero, so a fresh block is the identity map.
struct AttnBlock {
  Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b, w1, b1, w2, b2;
};

struct Encoder {
  EncoderConfig cfg;
  // Two 3x3 convs per stage; stages 1 and 2 enter with stride 2.
  Tensor w00, b00, w01, b01, w10, b10, w11, b11, w20, b20, w21, b21;
  std::vector<AttnBlock> blocks;
  // Correlation regularizer, a residual whose last conv starts at zero.
  Tensor rw0, rb0, rw1, rb1;

  static Encoder init(const EncoderConfig& cfg, Rng& rng);
  NamedTensors params();

  // Quarter-resolution conv features of one [3,H,W] image as tokens [hw, d].
  Tensor conv_tokens(const Tensor& image) const;
  // Joint self-attention over the concatenation of every view's tokens;
  // returns per-view tokens of the same shapes.
  std::vector<Tensor> attend(const std::vector<Tensor>& tokens, int64_t qh, int64_t qw) const;
};

struct EncodedViews {
  std::vector<Tensor> tokens;     // per view [qh*qw, d], post-attention
  std::vector<Tensor> inv_depth;  // per view [H*W, 1], full resolution
  int64_t qh = 0, qw = 0;         // quarter-resolution extents
};

// Requires at least two views with matching extents divisible by 4.
EncodedViews encode_views(const Encoder& enc, const std::vector<View>& views);

// ---- building blocks, exposed so tests can pin them down ----

// Endpoint-inclusive candidates, ascending and uniform in inverse depth.
std::vector<double> inv_depth_candidates(double d_near, double d_far, int64_t n);

// Fixed 2D sinusoidal positional table, [h*w, d], values in [-1, 1].
Tensor positional_encoding(int64_t h, int64_t w, int64_t d);

// Constant [h*w, 2] map taking every pixel of cam_v through the plane at
// inverse depth zeta into cam_u's pixels. Points that land behind cam_u get
// coordinates far outside any image, so bilinear samples of them vanish.
Tensor sweep_points(const Camera& cam_v, const Camera& cam_u, double zeta);

// Correlation volume [hw, D] of view v against the mean of all other views,
// one column per inverse-depth candidate, scaled by 1/sqrt(d).
Tensor correlation_volume(const std::vector<Tensor>& tokens, const std::vector<Camera>& cams,
                          size_t v, const std::vector<double>& zetas, int64_t qh, int64_t qw);

// Constant [H*W, 2] grid mapping full-resolution pixel centers into a
// quarter-resolution map: (x + 0.5) / 4 - 0.5, clamped to the valid interior
// so border samples replicate the edge instead of fading to zero.
Tensor quarter_grid(int64_t H, int64_t W);

}  // namespace gs
