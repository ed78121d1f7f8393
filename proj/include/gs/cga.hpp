#pragma once

// Cascade adapter: a keypoint scorer produces per-view relevance maps, stage
// hypernetworks emit context-aware split/prune thresholds, and each stage
// splits high-scoring Gaussians (bounded children from a splitting network)
// and dampens or removes low-scoring ones.

#include <cmath>
#include <vector>

#include "gs/camera.hpp"
#include "gs/gaussians.hpp"
#include "gs/igr.hpp"
#include "gs/optim.hpp"
#include "gs/rng.hpp"
#include "gs/tensor.hpp"

namespace gs {

struct CgaConfig {
  int64_t stages = 3;         // K
  int64_t children = 1;       // M new Gaussians per split
  double gamma_alpha = 0.5;   // opacity reduction factor
  double gamma_s = 0.5;       // scale reduction factor
  double tau_alpha = 0.3;     // removal floor: dampened Gaussians at or below are dropped
  double temperature = 0.1;   // soft-gate temperature in train mode
  int64_t max_queries = 1024; // threshold hypernetwork subsample cap N_q
  // Overrides for fixed-threshold operation (rigid ablation, no-op tests).
  // NaN means "use the learned hypernetwork".
  double fixed_tau_low = NAN;
  double fixed_tau_high = NAN;

  bool has_fixed() const { return !std::isnan(fixed_tau_low) && !std::isnan(fixed_tau_high); }
  void validate() const;
};

enum class CgaMode { train, infer };

// Learned, content-dependent per-view mixing weights: alpha = softmax over
// views of a mean-pooled MLP of each view's tokens. Positive, sums to 1.
struct ViewWeights {
  Tensor alpha;  // [V,1]
};

struct Thresholds {
  Tensor tau_low, tau_high;  // [1,1] each; tau_low <= tau_high by construction
};

struct CgaParams {
  int64_t d_enc = 0;
  // View-weight MLP (d_enc -> hidden -> 1), final layer zero: uniform at init.
  Tensor vw_w1, vw_b1, vw_w2, vw_b2;
  // Score MLP (d_enc -> 64 -> 1), final layer zero: uniform maps at init.
  Tensor sm_w1, sm_b1, sm_w2, sm_b2;
  // Per-stage hypernetwork: parameter embed, deformable attention over score
  // maps, and the threshold MLP (zero-initialized: tau_low=0.5,
  // tau_high=0.5+softplus(0)).
  std::vector<Tensor> embed_w, embed_b;
  std::vector<DeformAttnParams> da;
  std::vector<Tensor> th_w1, th_b1, th_w2, th_b2;
  // Per-stage splitting network (11+C -> 64 -> M*(11+C)), final layer zero:
  // children start as copies of their parents.
  std::vector<Tensor> sp_w1, sp_b1, sp_w2, sp_b2;

  static CgaParams init(const CgaConfig& cfg, int64_t d_enc, int64_t sh_dim, Rng& rng);
  NamedTensors params();
};

ViewWeights compute_view_weights(const std::vector<Tensor>& tokens, const CgaParams& p);

// Per-view relevance maps at image resolution [H*W, 1]: per-location MLP of
// the view tokens fused with the alpha-weighted context, spatial softmax,
// rescaled and renormalized so the spatial mean is exactly 1.
std::vector<Tensor> score_maps(const std::vector<Tensor>& tokens, const ViewWeights& w,
                               const CgaParams& p, int64_t qh, int64_t qw, int64_t H, int64_t W);

// Per-Gaussian scores: alpha-weighted average of the score maps sampled at
// each center's projection, taken over the views that see the center
// (renormalized by the visible weight mass); exactly 0 where no view does.
Tensor gaussian_scores(const GaussianSet& g, const std::vector<Tensor>& maps,
                       const std::vector<Camera>& cams, const ViewWeights& w);

Thresholds compute_thresholds(const GaussianSet& g, const std::vector<Tensor>& maps,
                              const std::vector<Camera>& cams, const ViewWeights& w,
                              const CgaParams& p, const CgaConfig& cfg, int64_t stage);

// Gaussians with score > tau_high spawn M bounded children each (parents
// retained); in train mode child opacity is modulated by
// sigmoid((score - tau_high)/T).
GaussianSet split(const GaussianSet& g, const Tensor& scores, const Tensor& tau_high,
                  const CgaConfig& cfg, const CgaParams& p, int64_t stage, CgaMode mode);

// Gaussians with score < tau_low are dampened (alpha*gamma_alpha, s*gamma_s,
// scale floored at the global minimum) or removed outright when their opacity
// is already at or below tau_alpha. In train mode the reduction is modulated
// by sigmoid((tau_low - score)/T).
GaussianSet prune(const GaussianSet& g, const Tensor& scores, const Tensor& tau_low,
                  const CgaConfig& cfg, CgaMode mode);

struct CgaStageInfo {
  int64_t n_before = 0, n_split = 0, n_removed = 0, n_after = 0;
  double tau_low = 0, tau_high = 0;
};
struct CgaTrace {
  std::vector<CgaStageInfo> stages;
};

// K stages of {thresholds -> scores -> split -> prune}. Children created in a
// stage are exempt from that stage's prune. The count identity
// n_after = n_before + children*n_split - n_removed holds exactly per stage.
GaussianSet run_cga(const GaussianSet& g, const std::vector<Tensor>& maps,
                    const std::vector<Camera>& cams, const ViewWeights& w,
                    const CgaConfig& cfg, const CgaParams& p, CgaMode mode,
                    CgaTrace* trace = nullptr);

}  // namespace gs
