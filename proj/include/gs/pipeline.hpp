#pragma once

// Full image-to-Gaussians pipeline: multi-view encoding, pixel-aligned
// initialization, cascade adaptation, iterative refinement, and target-view
// rendering, plus the training loss and the ablation presets.

#include <map>
#include <string>
#include <vector>

#include "gs/cga.hpp"
#include "gs/encoder.hpp"
#include "gs/gaussians.hpp"
#include "gs/igr.hpp"
#include "gs/init_gaussians.hpp"
#include "gs/rasterizer.hpp"
#include "gs/scene.hpp"

namespace gs {

struct PipelineConfig {
  EncoderConfig encoder;
  InitConfig init;
  CgaConfig cga;
  IgrConfig igr;
  RenderSettings raster;
  // Ablation switches: the adapter and the refiner can each be bypassed.
  bool use_cga = true;
  bool use_igr = true;

  void validate() const;
};

// Named ablation presets:
//   "vanilla" - adapter and refiner both bypassed (pixel-aligned set only)
//   "rigid"   - adapter with fixed thresholds 0.2/0.8, refiner bypassed
//   "hyper"   - adapter with learned thresholds, refiner bypassed
//   "full"    - adapter with learned thresholds plus the refiner
PipelineConfig ablation_preset(const std::string& name, PipelineConfig base);
const std::vector<std::string>& ablation_names();  // canonical order

struct PipelineParams {
  Encoder enc;
  CgaParams cga;
  IgrParams igr;

  static PipelineParams init(const PipelineConfig& cfg, Rng& rng);
  // Every learnable tensor exactly once, under unique prefixed names.
  NamedTensors params();
};

// Copies checkpoint tensors into `p` by name; shapes must match and the name
// sets must be identical in both directions.
void load_params(PipelineParams& p, const std::map<std::string, Tensor>& src);

enum class RunMode { train, infer };

struct ForwardOutput {
  GaussianSet gaussians;        // final set (post adapter and refiner)
  std::vector<Tensor> renders;  // one [H,W,3] per target view of the sample
  CgaTrace trace;               // per-stage counts; empty when the adapter is bypassed
};

ForwardOutput forward_pipeline(const SceneSample& sample, const PipelineParams& p,
                               const PipelineConfig& cfg, RunMode mode);

// [3,H,W] -> [H,W,3]; differentiable.
Tensor chw_to_hwc(const Tensor& img);
Tensor hwc_to_chw(const Tensor& img);

// Mean squared error between two [H,W,3] images.
Tensor image_mse(const Tensor& a, const Tensor& b);
// Perceptual surrogate: mean squared difference of finite-difference image
// gradients, x and y directions summed. A pluggable stand-in for a learned
// perceptual metric.
Tensor image_grad_surrogate(const Tensor& a, const Tensor& b);
// mse + lambda_perc * surrogate (default weights 1 and 0.05).
Tensor image_loss(const Tensor& a, const Tensor& b, double lambda_perc = 0.05);

}  // namespace gs
