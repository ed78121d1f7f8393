// Pipeline assembly: forward pass, ablation presets, loss, parameter registry.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "gs/checkpoint.hpp"
#include "gs/ops.hpp"
#include "gs/pipeline.hpp"
#include "gs/scene_gen.hpp"
#include "testutil.hpp"

using namespace gs;
using gstest::gradcheck;
using gstest::rand_tensor;

namespace {

// Small-but-real configuration for fast fixtures.
PipelineConfig tiny_config() {
  PipelineConfig cfg;
  cfg.encoder.base_width = 8;
  cfg.encoder.attn_blocks = 1;
  cfg.encoder.depth_planes = 4;
  cfg.igr.d_model = 32;
  cfg.igr.heads = 2;
  cfg.igr.blocks = 2;
  return cfg;
}

SceneSample tiny_scene(int64_t res, uint64_t seed, int64_t n_targets = 1) {
  SceneGenConfig sg;
  sg.width = res;
  sg.height = res;
  sg.n_inputs = 2;
  sg.n_targets = n_targets;
  return generate_scene(sg, seed).sample;
}

}  // namespace

TEST_CASE("smoke: 2-view 64x64 forward produces finite renders and a valid set") {
  PipelineConfig cfg = tiny_config();
  Rng rng(11);
  PipelineParams p = PipelineParams::init(cfg, rng);
  SceneSample sample = tiny_scene(64, 5, 2);
  ForwardOutput out = forward_pipeline(sample, p, cfg, RunMode::infer);
  REQUIRE(out.renders.size() == 2);
  for (const Tensor& r : out.renders) {
    REQUIRE((r.dim(0) == 64 && r.dim(1) == 64 && r.dim(2) == 3));
    for (double v : r.data()) CHECK(std::isfinite(v));
  }
  CHECK_NOTHROW(out.gaussians.validate());
  // Fresh adapter: score maps carry a small spread around 1, so a few
  // Gaussians fall on either side of the fresh thresholds. The stage-by-stage
  // count identity must hold exactly from the two pixel grids onward.
  REQUIRE(out.trace.stages.size() == 3);
  int64_t n = 2 * 64 * 64;
  for (const CgaStageInfo& st : out.trace.stages) {
    CHECK(st.n_before == n);
    CHECK(st.n_after == st.n_before + st.n_split - st.n_removed);
    n = st.n_after;
  }
  CHECK(out.gaussians.count() == n);
}

TEST_CASE("vanilla preset renders the pixel-aligned initialization directly") {
  PipelineConfig cfg = ablation_preset("vanilla", tiny_config());
  Rng rng(12);
  PipelineParams p = PipelineParams::init(cfg, rng);
  SceneSample sample = tiny_scene(32, 6);

  ForwardOutput out = forward_pipeline(sample, p, cfg, RunMode::infer);
  CHECK(out.trace.stages.empty());

  // Reference: encoder + init + render, nothing else.
  EncodedViews ev = encode_views(p.enc, sample.inputs);
  GaussianSet g0 = init_gaussians(sample.inputs, ev, cfg.init);
  CHECK(out.gaussians.count() == g0.count());
  Tensor ref = render(g0, sample.targets[0].cam, cfg.raster).image;
  REQUIRE(out.renders[0].data().size() == ref.data().size());
  for (size_t i = 0; i < ref.data().size(); ++i)
    CHECK(out.renders[0].data()[i] == ref.data()[i]);
}

TEST_CASE("inference is deterministic: two forward passes agree bitwise") {
  PipelineConfig cfg = tiny_config();
  Rng rng(13);
  PipelineParams p = PipelineParams::init(cfg, rng);
  SceneSample sample = tiny_scene(32, 7);
  ForwardOutput a = forward_pipeline(sample, p, cfg, RunMode::infer);
  ForwardOutput b = forward_pipeline(sample, p, cfg, RunMode::infer);
  CHECK(a.gaussians.count() == b.gaussians.count());
  REQUIRE(a.renders.size() == b.renders.size());
  for (size_t t = 0; t < a.renders.size(); ++t)
    for (size_t i = 0; i < a.renders[t].data().size(); ++i)
      CHECK(a.renders[t].data()[i] == b.renders[t].data()[i]);
}

TEST_CASE("loss: identical images score exactly zero") {
  Rng rng(21);
  Tensor a = rand_tensor(rng, {6, 5, 3}, 0.0, 1.0, false);
  CHECK(image_loss(a, a, 0.05).item() == 0.0);
  CHECK(image_mse(a, a).item() == 0.0);
  CHECK(image_grad_surrogate(a, a).item() == 0.0);
}

TEST_CASE("loss: constant offset gives the closed-form mse and a vanishing surrogate") {
  Rng rng(22);
  const double c = 0.17;
  Tensor a = rand_tensor(rng, {8, 8, 3}, 0.0, 0.5, false);
  Tensor b = add(a, Tensor::full({1}, c));
  CHECK(image_loss(b, a, 0.0).item() == doctest::Approx(c * c).epsilon(1e-12));
  // The offset cancels in every finite difference.
  CHECK(image_grad_surrogate(b, a).item() < 1e-25);
}

TEST_CASE("loss: default weights combine mse and the gradient surrogate as 1 and 0.05") {
  Rng rng(23);
  Tensor a = rand_tensor(rng, {7, 6, 3}, 0.0, 1.0, false);
  Tensor b = rand_tensor(rng, {7, 6, 3}, 0.0, 1.0, false);
  const double mse = image_mse(a, b).item();
  const double surr = image_grad_surrogate(a, b).item();
  CHECK(surr > 0.0);
  CHECK(image_loss(a, b).item() == doctest::Approx(mse + 0.05 * surr).epsilon(1e-14));
  CHECK(image_loss(a, b, 0.3).item() == doctest::Approx(mse + 0.3 * surr).epsilon(1e-14));
}

TEST_CASE("loss: finite differences through mse and the gradient surrogate") {
  Rng rng(24);
  Tensor a = rand_tensor(rng, {4, 5, 3}, 0.0, 1.0, true);
  Tensor b = rand_tensor(rng, {4, 5, 3}, 0.0, 1.0, false);
  CHECK(gradcheck({a}, [&]() { return image_loss(a, b, 0.05); }) < 1e-6);
}

TEST_CASE("chw_to_hwc reorders exactly") {
  // img[c][y][x] = 100c + 10y + x on a 3x2x2 image.
  std::vector<double> v(12);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < 2; ++y)
      for (int64_t x = 0; x < 2; ++x) v[c * 4 + y * 2 + x] = 100.0 * c + 10.0 * y + x;
  Tensor hwc = chw_to_hwc(Tensor::from_data({3, 2, 2}, v));
  REQUIRE((hwc.dim(0) == 2 && hwc.dim(1) == 2 && hwc.dim(2) == 3));
  for (int64_t y = 0; y < 2; ++y)
    for (int64_t x = 0; x < 2; ++x)
      for (int64_t c = 0; c < 3; ++c)
        CHECK(hwc.data()[(y * 2 + x) * 3 + c] == 100.0 * c + 10.0 * y + x);
}

TEST_CASE("ablation presets: four canonical configurations") {
  REQUIRE(ablation_names().size() == 4);
  CHECK(ablation_names()[0] == "vanilla");
  CHECK(ablation_names()[1] == "rigid");
  CHECK(ablation_names()[2] == "hyper");
  CHECK(ablation_names()[3] == "full");

  PipelineConfig base = tiny_config();
  PipelineConfig v = ablation_preset("vanilla", base);
  CHECK((!v.use_cga && !v.use_igr));
  PipelineConfig r = ablation_preset("rigid", base);
  CHECK((r.use_cga && !r.use_igr));
  CHECK(r.cga.fixed_tau_low == 0.2);
  CHECK(r.cga.fixed_tau_high == 0.8);
  PipelineConfig h = ablation_preset("hyper", base);
  CHECK((h.use_cga && !h.use_igr));
  CHECK(std::isnan(h.cga.fixed_tau_low));
  PipelineConfig f = ablation_preset("full", base);
  CHECK((f.use_cga && f.use_igr));
  CHECK(std::isnan(f.cga.fixed_tau_high));
  CHECK_THROWS_AS(ablation_preset("bogus", base), std::runtime_error);
}

TEST_CASE("parameter registry is duplicate-free and checkpoints round-trip the forward pass") {
  PipelineConfig cfg = tiny_config();
  Rng rng(31);
  PipelineParams p = PipelineParams::init(cfg, rng);
  NamedTensors all = p.params();
  std::set<std::string> names;
  std::set<const void*> nodes;
  for (auto& [name, t] : all) {
    names.insert(name);
    nodes.insert(static_cast<const void*>(t.node().get()));
  }
  CHECK(names.size() == all.size());  // unique names
  CHECK(nodes.size() == all.size());  // every tensor exactly once

  SceneSample sample = tiny_scene(32, 8);
  ForwardOutput ref = forward_pipeline(sample, p, cfg, RunMode::infer);

  const std::string path =
      (std::filesystem::temp_directory_path() / "gs_test_pipeline_ckpt.gst").string();
  save_tensors(path, all);
  Rng rng2(999);  // deliberately different initialization
  PipelineParams q = PipelineParams::init(cfg, rng2);
  load_params(q, load_tensors(path));
  std::filesystem::remove(path);

  ForwardOutput got = forward_pipeline(sample, q, cfg, RunMode::infer);
  CHECK(got.gaussians.count() == ref.gaussians.count());
  for (size_t i = 0; i < ref.renders[0].data().size(); ++i)
    CHECK(got.renders[0].data()[i] == ref.renders[0].data()[i]);
}

TEST_CASE("loss shape mismatches are rejected") {
  Tensor a = Tensor::zeros({4, 4, 3});
  Tensor b = Tensor::zeros({4, 5, 3});
  CHECK_THROWS_AS(image_loss(a, b, 0.05), std::runtime_error);
  CHECK_THROWS_AS(image_mse(a, Tensor::zeros({4, 4})), std::runtime_error);
}
