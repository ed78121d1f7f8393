#pragma once

// Iterative Gaussian Refiner: Gaussian queries attend to per-view feature maps
// at their projected centers (deformable attention), pass through residual
// refinement blocks, and decode back into bounded Gaussian parameter updates.
// Every residual path is zero-initialized, so a fresh refiner is the identity.

#include <vector>

#include "gs/camera.hpp"
#include "gs/encoder.hpp"
#include "gs/gaussians.hpp"
#include "gs/optim.hpp"
#include "gs/rng.hpp"
#include "gs/scene.hpp"
#include "gs/tensor.hpp"

namespace gs {

struct IgrConfig {
  int64_t blocks = 3;   // refinement blocks B
  int64_t heads = 4;    // attention heads splitting d_model
  int64_t points = 1;   // samples per reference point P (P-1 learned offsets)
  int64_t d_model = 128;
  int64_t hidden = 64;  // decode / MLP hidden width

  void validate() const;
};

// One deformable-attention instance: samples a [C,h,w] feature map at a
// query's reference point plus points-1 learned offsets (tanh-bounded to
// +-4 px), embeds the samples, softmaxes per-head dot products over the
// samples, and projects the weighted sum through a zero-initialized value
// layer (so a fresh instance contributes nothing).
struct DeformAttnParams {
  Tensor w_phi, b_phi;  // [C, d], [d] sample embedding
  Tensor w_off, b_off;  // [d, 2*(points-1)] offsets; undefined when points == 1
  Tensor w_val, b_val;  // [d, d], [d] value projection, zero-initialized

  static DeformAttnParams init(Rng& rng, int64_t channels, int64_t d, int64_t points);
  int64_t points() const { return w_off.defined() ? w_off.dim(1) / 2 + 1 : 1; }
};

// q [N,d], fmap [C,h,w], ref_pts [N,2] in fmap pixel coordinates, mask [N,1]
// in {0,1} (0 rows receive a zero update). Returns the [N,d] update.
Tensor deformable_attention(const Tensor& q, const Tensor& fmap, const Tensor& ref_pts,
                            const Tensor& mask, const DeformAttnParams& p, int64_t heads);

struct IgrBlockParams {
  DeformAttnParams da;
  Tensor ln_g, ln_b;          // pre-MLP layernorm
  Tensor w1, b1, w2, b2;      // MLP d -> hidden -> d, w2/b2 zero-initialized
};

struct IgrParams {
  IgrConfig cfg;
  Tensor embed_w1, embed_b1, embed_w2, embed_b2;  // (11+C) -> hidden -> d
  Tensor q_proj;                                  // [d_enc, d], zero-initialized
  std::vector<IgrBlockParams> blocks;
  Tensor dec_w1, dec_b1, dec_w2, dec_b2;          // d -> hidden -> (11+C), zero last

  static IgrParams init(const IgrConfig& cfg, int64_t sh_dim, int64_t d_enc, Rng& rng);
  NamedTensors params();
};

// Per-Gaussian queries: MLP of the parameter vector plus a zero-initialized
// projection of the encoder-token queries when the set carries them.
Tensor embed_gaussians(const GaussianSet& g, const IgrParams& p);

// Unconstrained decode head rows [N, 11+C] for decode_delta.
Tensor decode_head(const Tensor& q, const IgrParams& p);

// One refinement block: per-view deformable attention at the projected
// centers, combined with the view weights (alpha [V,1]), then a residual
// layernorm+MLP. Centers and cameras are at the feature-map resolution.
Tensor igr_block(const Tensor& q, const std::vector<Tensor>& fmaps,
                 const std::vector<Tensor>& ref_pts, const std::vector<Tensor>& masks,
                 const Tensor& view_alpha, const IgrBlockParams& bp, int64_t heads);

// Full refiner: embed -> B blocks (centers re-decoded between blocks) ->
// bounded decode against the input set as base. Count is preserved.
GaussianSet run_igr(const GaussianSet& g, const EncodedViews& enc,
                    const std::vector<Camera>& cams, const Tensor& view_alpha,
                    const IgrParams& p);

}  // namespace gs
