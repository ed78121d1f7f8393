#include "gs/pipeline.hpp"

#include <map>

#include "gs/ops.hpp"

namespace gs {

void PipelineConfig::validate() const {
  encoder.validate();
  init.validate();
  cga.validate();
  igr.validate();
}

PipelineConfig ablation_preset(const std::string& name, PipelineConfig base) {
  base.cga.fixed_tau_low = NAN;
  base.cga.fixed_tau_high = NAN;
  if (name == "vanilla") {
    base.use_cga = false;
    base.use_igr = false;
  } else if (name == "rigid") {
    base.use_cga = true;
    base.use_igr = false;
    base.cga.fixed_tau_low = 0.2;
    base.cga.fixed_tau_high = 0.8;
  } else if (name == "hyper") {
    base.use_cga = true;
    base.use_igr = false;
  } else if (name == "full") {
    base.use_cga = true;
    base.use_igr = true;
  } else {
    fail("unknown ablation preset: " + name);
  }
  return base;
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"vanilla", "rigid", "hyper", "full"};
  return names;
}

PipelineParams PipelineParams::init(const PipelineConfig& cfg, Rng& rng) {
  cfg.validate();
  PipelineParams p;
  p.enc = Encoder::init(cfg.encoder, rng);
  p.cga = CgaParams::init(cfg.cga, cfg.encoder.d_model(), cfg.init.sh_dim, rng);
  p.igr = IgrParams::init(cfg.igr, cfg.init.sh_dim, cfg.encoder.d_model(), rng);
  return p;
}

NamedTensors PipelineParams::params() {
  NamedTensors all = enc.params();
  for (auto& nt : cga.params()) all.push_back(nt);
  for (auto& nt : igr.params()) all.push_back(nt);
  return all;
}

void load_params(PipelineParams& p, const std::map<std::string, Tensor>& src) {
  NamedTensors dst = p.params();
  GS_CHECK(dst.size() == src.size(), "load_params: checkpoint tensor count mismatch");
  for (auto& [name, t] : dst) {
    auto it = src.find(name);
    GS_CHECK(it != src.end(), "load_params: checkpoint is missing tensor " + name);
    GS_CHECK(it->second.shape() == t.shape(), "load_params: shape mismatch for " + name);
    t.data() = it->second.data();
  }
}

ForwardOutput forward_pipeline(const SceneSample& sample, const PipelineParams& p,
                               const PipelineConfig& cfg, RunMode mode) {
  cfg.validate();
  GS_CHECK(!sample.inputs.empty(), "pipeline: sample has no input views");
  const int64_t H = sample.inputs[0].image.dim(1);
  const int64_t W = sample.inputs[0].image.dim(2);

  EncodedViews ev = encode_views(p.enc, sample.inputs);
  GaussianSet g = init_gaussians(sample.inputs, ev, cfg.init);

  std::vector<Camera> cams;
  for (const View& v : sample.inputs) cams.push_back(v.cam);

  ForwardOutput out;
  if (cfg.use_cga || cfg.use_igr) {
    ViewWeights w = compute_view_weights(ev.tokens, p.cga);
    if (cfg.use_cga) {
      std::vector<Tensor> maps = score_maps(ev.tokens, w, p.cga, ev.qh, ev.qw, H, W);
      const CgaMode cm = (mode == RunMode::train) ? CgaMode::train : CgaMode::infer;
      g = run_cga(g, maps, cams, w, cfg.cga, p.cga, cm, &out.trace);
    }
    if (cfg.use_igr) g = run_igr(g, ev, cams, w.alpha, p.igr);
  }

  out.gaussians = g;
  for (const View& t : sample.targets)
    out.renders.push_back(render(g, t.cam, cfg.raster).image);
  return out;
}

Tensor chw_to_hwc(const Tensor& img) {
  GS_CHECK((img.ndim() == 3 && img.dim(0) == 3), "chw_to_hwc: expected [3,H,W]");
  const int64_t h = img.dim(1), w = img.dim(2);
  return reshape(transpose(reshape(img, {3, h * w})), {h, w, 3});
}

Tensor hwc_to_chw(const Tensor& img) {
  GS_CHECK((img.ndim() == 3 && img.dim(2) == 3), "hwc_to_chw: expected [H,W,3]");
  const int64_t h = img.dim(0), w = img.dim(1);
  return reshape(transpose(reshape(img, {h * w, 3})), {3, h, w});
}

namespace {

void check_hwc_pair(const Tensor& a, const Tensor& b, const char* who) {
  GS_CHECK((a.ndim() == 3 && a.dim(2) == 3), std::string(who) + ": expected [H,W,3]");
  GS_CHECK(a.shape() == b.shape(), std::string(who) + ": image shape mismatch");
}

}  // namespace

Tensor image_mse(const Tensor& a, const Tensor& b) {
  check_hwc_pair(a, b, "image_mse");
  const int64_t hw = a.dim(0) * a.dim(1);
  Tensor d = sub(reshape(a, {hw, 3}), reshape(b, {hw, 3}));
  return mean(mul(d, d));
}

Tensor image_grad_surrogate(const Tensor& a, const Tensor& b) {
  check_hwc_pair(a, b, "image_grad_surrogate");
  const int64_t h = a.dim(0), w = a.dim(1);
  Tensor af = reshape(a, {h * w, 3}), bf = reshape(b, {h * w, 3});
  std::vector<int64_t> xl, xr, yu, yd;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x + 1 < w; ++x) {
      xl.push_back(y * w + x);
      xr.push_back(y * w + x + 1);
    }
  for (int64_t y = 0; y + 1 < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      yu.push_back(y * w + x);
      yd.push_back((y + 1) * w + x);
    }
  auto gdiff = [](const Tensor& f, const std::vector<int64_t>& i0,
                  const std::vector<int64_t>& i1) {
    return sub(gather_rows(f, i1), gather_rows(f, i0));
  };
  Tensor dx = sub(gdiff(af, xl, xr), gdiff(bf, xl, xr));
  Tensor dy = sub(gdiff(af, yu, yd), gdiff(bf, yu, yd));
  return add(mean(mul(dx, dx)), mean(mul(dy, dy)));
}

Tensor image_loss(const Tensor& a, const Tensor& b, double lambda_perc) {
  Tensor l = image_mse(a, b);
  if (lambda_perc != 0.0) l = add(l, scale(image_grad_surrogate(a, b), lambda_perc));
  return l;
}

}  // namespace gs
