#include "gs/cga.hpp"

#include <algorithm>
#include <string>

#include "gs/gaussian_decode.hpp"
#include "gs/geometry.hpp"
#include "gs/ops.hpp"

namespace gs {
namespace {

constexpr double kExemptScore = 1e30;  // padded score for same-stage children

Tensor randn(Rng& rng, Shape shape, double std) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.data()) v = std * rng.normal();
  return t;
}

Tensor zeros_p(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor as_map(const Tensor& flat, int64_t h, int64_t w) {
  return reshape(transpose(flat), {flat.dim(1), h, w});
}

// mask [N,1]: usable projection (in front of the camera, within one pixel of
// the frame).
Tensor frame_mask(const ProjectedPoints& pp, int64_t w, int64_t h) {
  const int64_t n = pp.pix.dim(0);
  Tensor mask = Tensor::zeros({n, 1});
  const double* pix = pp.pix.data().data();
  const double* vis = pp.vis.data().data();
  for (int64_t i = 0; i < n; ++i) {
    const double x = pix[i * 2], y = pix[i * 2 + 1];
    const bool in_frame = (x > -1.0 && x < static_cast<double>(w) && y > -1.0 &&
                           y < static_cast<double>(h));
    mask.data()[i] = (vis[i] > 0.5 && in_frame) ? 1.0 : 0.0;
  }
  return mask;
}

}  // namespace

void CgaConfig::validate() const {
  GS_CHECK(stages >= 1, "cga: need at least one stage");
  GS_CHECK(children >= 1, "cga: need at least one split child");
  GS_CHECK((gamma_alpha > 0.0 && gamma_alpha < 1.0), "cga: gamma_alpha must lie in (0,1)");
  GS_CHECK((gamma_s > 0.0 && gamma_s < 1.0), "cga: gamma_s must lie in (0,1)");
  GS_CHECK((tau_alpha > 0.0 && tau_alpha < 1.0), "cga: tau_alpha must lie in (0,1)");
  GS_CHECK(temperature > 0.0, "cga: temperature must be positive");
  GS_CHECK(max_queries >= 1, "cga: max_queries must be positive");
  GS_CHECK(std::isnan(fixed_tau_low) == std::isnan(fixed_tau_high),
           "cga: fixed thresholds must be set together");
  if (has_fixed())
    GS_CHECK(fixed_tau_low <= fixed_tau_high, "cga: fixed thresholds must be ordered");
}

CgaParams CgaParams::init(const CgaConfig& cfg, int64_t d_enc, int64_t sh_dim, Rng& rng) {
  cfg.validate();
  GS_CHECK(d_enc >= 1, "cga: encoder width must be positive");
  const int64_t pdim = 11 + sh_dim, dq = 64;
  CgaParams p;
  p.d_enc = d_enc;
  p.vw_w1 = randn(rng, {d_enc, 32}, std::sqrt(2.0 / static_cast<double>(d_enc)));
  p.vw_b1 = zeros_p({32});
  p.vw_w2 = zeros_p({32, 1});  // uniform view weights at init
  p.vw_b2 = zeros_p({1});
  p.sm_w1 = randn(rng, {d_enc, 64}, std::sqrt(2.0 / static_cast<double>(d_enc)));
  p.sm_b1 = zeros_p({64});
  // Small but non-zero: a zero head would make every fresh score map exactly
  // uniform, so no Gaussian would ever enter a split/prune set and the scorer
  // and threshold networks would sit at an exact zero-gradient saddle. A
  // spread of a few percent around the mean puts a handful of Gaussians on
  // each side of the fresh thresholds, which is what lets training shape them.
  p.sm_w2 = randn(rng, {64, 1}, 0.05);
  p.sm_b2 = zeros_p({1});
  for (int64_t k = 0; k < cfg.stages; ++k) {
    p.embed_w.push_back(randn(rng, {pdim, dq}, std::sqrt(2.0 / static_cast<double>(pdim))));
    p.embed_b.push_back(zeros_p({dq}));
    p.da.push_back(DeformAttnParams::init(rng, 1, dq, 1));
    p.th_w1.push_back(randn(rng, {dq, 32}, std::sqrt(2.0 / static_cast<double>(dq))));
    p.th_b1.push_back(zeros_p({32}));
    p.th_w2.push_back(zeros_p({32, 2}));  // zero: tau_low = 0.5, tau_high = 0.5 + softplus(0)
    p.th_b2.push_back(zeros_p({2}));
    p.sp_w1.push_back(randn(rng, {pdim, 64}, std::sqrt(2.0 / static_cast<double>(pdim))));
    p.sp_b1.push_back(zeros_p({64}));
    p.sp_w2.push_back(zeros_p({64, cfg.children * pdim}));  // zero: children copy parents
    p.sp_b2.push_back(zeros_p({cfg.children * pdim}));
  }
  return p;
}

NamedTensors CgaParams::params() {
  NamedTensors out;
  auto put = [&](const std::string& name, Tensor& t) { out.emplace_back(name, t); };
  put("cga.vw.w1", vw_w1);
  put("cga.vw.b1", vw_b1);
  put("cga.vw.w2", vw_w2);
  put("cga.vw.b2", vw_b2);
  put("cga.sm.w1", sm_w1);
  put("cga.sm.b1", sm_b1);
  put("cga.sm.w2", sm_w2);
  put("cga.sm.b2", sm_b2);
  for (size_t k = 0; k < embed_w.size(); ++k) {
    const std::string pre = "cga.stage" + std::to_string(k) + ".";
    put(pre + "embed.w", embed_w[k]);
    put(pre + "embed.b", embed_b[k]);
    put(pre + "da.w_phi", da[k].w_phi);
    put(pre + "da.b_phi", da[k].b_phi);
    put(pre + "da.w_val", da[k].w_val);
    put(pre + "da.b_val", da[k].b_val);
    put(pre + "th.w1", th_w1[k]);
    put(pre + "th.b1", th_b1[k]);
    put(pre + "th.w2", th_w2[k]);
    put(pre + "th.b2", th_b2[k]);
    put(pre + "split.w1", sp_w1[k]);
    put(pre + "split.b1", sp_b1[k]);
    put(pre + "split.w2", sp_w2[k]);
    put(pre + "split.b2", sp_b2[k]);
  }
  return out;
}

ViewWeights compute_view_weights(const std::vector<Tensor>& tokens, const CgaParams& p) {
  GS_CHECK(!tokens.empty(), "view weights: need at least one view");
  Tensor beta;
  for (const Tensor& t : tokens) {
    Tensor pooled = mean_axis(t, 0, true);  // [1, d]
    Tensor b = add(matmul(gelu(add(matmul(pooled, p.vw_w1), p.vw_b1)), p.vw_w2), p.vw_b2);
    beta = beta.defined() ? concat(beta, b, 0) : b;
  }
  ViewWeights w;
  w.alpha = softmax(beta, 0);  // [V,1]
  return w;
}

std::vector<Tensor> score_maps(const std::vector<Tensor>& tokens, const ViewWeights& w,
                               const CgaParams& p, int64_t qh, int64_t qw, int64_t H,
                               int64_t W) {
  GS_CHECK(!tokens.empty(), "score_maps: need at least one view");
  const int64_t hw = qh * qw;
  Tensor fused;
  for (size_t v = 0; v < tokens.size(); ++v) {
    GS_CHECK((tokens[v].dim(0) == hw), "score_maps: token grid mismatch");
    Tensor part = mul(tokens[v], gather_rows(w.alpha, {static_cast<int64_t>(v)}));
    fused = fused.defined() ? add(fused, part) : part;
  }
  const Tensor grid = quarter_grid(H, W);
  std::vector<Tensor> maps;
  for (const Tensor& t : tokens) {
    Tensor x = add(t, fused);
    Tensor logits = add(matmul(gelu(add(matmul(x, p.sm_w1), p.sm_b1)), p.sm_w2), p.sm_b2);
    Tensor m = scale(softmax(logits, 0), static_cast<double>(hw));  // spatial mean 1
    Tensor up = bilinear_sample(as_map(m, qh, qw), grid);           // [H*W, 1]
    maps.push_back(div(up, mean(up)));  // border clamping skews the mean; renormalize
  }
  return maps;
}

Tensor gaussian_scores(const GaussianSet& g, const std::vector<Tensor>& maps,
                       const std::vector<Camera>& cams, const ViewWeights& w) {
  GS_CHECK((maps.size() == cams.size() && !maps.empty()), "gaussian_scores: view mismatch");
  // Projections are sampling locations, not a gradient path; centers get their
  // gradients through rendering.
  Tensor mu_c = detach(g.mu);
  Tensor total, seen;
  for (size_t v = 0; v < maps.size(); ++v) {
    const Camera& cam = cams[v];
    GS_CHECK(maps[v].dim(0) == cam.width * cam.height, "gaussian_scores: map size mismatch");
    ProjectedPoints pp = project_points(mu_c, cam);
    Tensor mask = frame_mask(pp, cam.width, cam.height);
    Tensor va = gather_rows(w.alpha, {static_cast<int64_t>(v)});
    Tensor sampled = bilinear_sample(as_map(maps[v], cam.height, cam.width), pp.pix);
    Tensor weighted = mul(mul(sampled, mask), va);
    Tensor vis_mass = mul(mask, va);
    total = total.defined() ? add(total, weighted) : weighted;
    seen = seen.defined() ? add(seen, vis_mass) : vis_mass;
  }
  // Average over the views that see the center: renormalizing by the visible
  // weight mass keeps a partially-visible Gaussian on the same scale as a
  // fully-visible one instead of biasing it toward the prune threshold. Rows
  // no view sees have a zero numerator, so the floor leaves them at exactly 0.
  return div(total, clamp(seen, 1e-30, 2.0));
}

Thresholds compute_thresholds(const GaussianSet& g, const std::vector<Tensor>& maps,
                              const std::vector<Camera>& cams, const ViewWeights& w,
                              const CgaParams& p, const CgaConfig& cfg, int64_t stage) {
  const int64_t n = g.count();
  GS_CHECK(n > 0, "compute_thresholds: empty set");
  GS_CHECK((stage >= 0 && stage < static_cast<int64_t>(p.embed_w.size())),
           "compute_thresholds: stage out of range");
  const size_t k = static_cast<size_t>(stage);

  // Deterministic strided subsample capped at max_queries.
  const int64_t stride = (n + cfg.max_queries - 1) / cfg.max_queries;
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < n; i += stride) idx.push_back(i);
  GaussianSet sub = g.take(idx);

  Tensor q_r = gelu(add(matmul(sub.params(), p.embed_w[k]), p.embed_b[k]));
  Tensor mu_c = detach(sub.mu);
  Tensor agg;
  for (size_t v = 0; v < maps.size(); ++v) {
    const Camera& cam = cams[v];
    ProjectedPoints pp = project_points(mu_c, cam);
    Tensor mask = frame_mask(pp, cam.width, cam.height);
    Tensor u = deformable_attention(q_r, as_map(maps[v], cam.height, cam.width),
                                    detach(pp.pix), mask, p.da[k], /*heads=*/1);
    Tensor weighted = mul(u, gather_rows(w.alpha, {static_cast<int64_t>(v)}));
    agg = agg.defined() ? add(agg, weighted) : weighted;
  }
  Tensor pooled = mean_axis(add(q_r, agg), 0, true);  // [1, dq]
  Tensor ab = add(matmul(gelu(add(matmul(pooled, p.th_w1[k]), p.th_b1[k])), p.th_w2[k]),
                  p.th_b2[k]);  // [1,2]
  Thresholds t;
  t.tau_low = sigmoid(slice_cols(ab, 0, 1));
  t.tau_high = add(t.tau_low, softplus(slice_cols(ab, 1, 2)));
  return t;
}

GaussianSet split(const GaussianSet& g, const Tensor& scores, const Tensor& tau_high,
                  const CgaConfig& cfg, const CgaParams& p, int64_t stage, CgaMode mode) {
  const int64_t n = g.count();
  GS_CHECK((scores.dim(0) == n && scores.dim(1) == 1), "split: score shape mismatch");
  const double th = tau_high.data()[0];
  std::vector<int64_t> par_idx;
  const double* sv = scores.data().data();
  for (int64_t i = 0; i < n; ++i)
    if (sv[i] > th) par_idx.push_back(i);
  if (par_idx.empty()) return g;

  const size_t k = static_cast<size_t>(stage);
  const int64_t pdim = 11 + g.sh_dim();
  GaussianSet parents = g.take(par_idx);
  Tensor head = add(matmul(gelu(add(matmul(parents.params(), p.sp_w1[k]), p.sp_b1[k])),
                           p.sp_w2[k]),
                    p.sp_b2[k]);  // [P, children*pdim]

  Tensor gate;
  if (mode == CgaMode::train) {
    Tensor s_par = gather_rows(scores, par_idx);
    gate = sigmoid(scale(sub(s_par, tau_high), 1.0 / cfg.temperature));
  }

  std::vector<Tensor> mu{g.mu}, s{g.s}, r{g.r}, a{g.alpha}, sh{g.sh}, qs;
  if (g.queries.defined()) qs.push_back(g.queries);
  for (int64_t m = 0; m < cfg.children; ++m) {
    GaussianSet child = decode_delta(parents, slice_cols(head, m * pdim, (m + 1) * pdim));
    if (gate.defined()) child.alpha = mul(child.alpha, gate);
    mu.push_back(child.mu);
    s.push_back(child.s);
    r.push_back(child.r);
    a.push_back(child.alpha);
    sh.push_back(child.sh);
    if (child.queries.defined()) qs.push_back(child.queries);
  }
  GaussianSet out;
  out.mu = concat_rows(mu);
  out.s = concat_rows(s);
  out.r = concat_rows(r);
  out.alpha = concat_rows(a);
  out.sh = concat_rows(sh);
  if (qs.size() == mu.size()) out.queries = concat_rows(qs);
  return out;
}

GaussianSet prune(const GaussianSet& g, const Tensor& scores, const Tensor& tau_low,
                  const CgaConfig& cfg, CgaMode mode) {
  const int64_t n = g.count();
  GS_CHECK((scores.dim(0) == n && scores.dim(1) == 1), "prune: score shape mismatch");
  const double tl = tau_low.data()[0];
  const double* sv = scores.data().data();
  const double* av = g.alpha.data().data();

  std::vector<int64_t> keep;
  std::vector<double> damp;  // 1.0 where the kept row is dampened
  for (int64_t i = 0; i < n; ++i) {
    const bool low = sv[i] < tl;
    if (low && av[i] <= cfg.tau_alpha) continue;  // removed outright
    keep.push_back(i);
    damp.push_back(low ? 1.0 : 0.0);
  }
  if (keep.empty()) {
    // A set must never empty out mid-cascade; retain the single best-scoring
    // Gaussian untouched.
    int64_t best = 0;
    for (int64_t i = 1; i < n; ++i)
      if (sv[i] > sv[best]) best = i;
    keep.push_back(best);
    damp.push_back(0.0);
  }

  GaussianSet out = (static_cast<int64_t>(keep.size()) == n) ? g : g.take(keep);
  const bool any_damp = std::any_of(damp.begin(), damp.end(), [](double d) { return d > 0; });
  if (!any_damp) return out;

  Tensor mask = Tensor::from_data({static_cast<int64_t>(damp.size()), 1}, damp);
  Tensor reduction;  // per-row multiplier deficit: mask * gate * (1 - gamma)
  if (mode == CgaMode::train) {
    Tensor s_keep = gather_rows(scores, keep);
    Tensor gate = sigmoid(scale(sub(tau_low, s_keep), 1.0 / cfg.temperature));
    reduction = mul(mask, gate);
  } else {
    reduction = mask;
  }
  Tensor one = Tensor::full({1, 1}, 1.0);
  Tensor f_alpha = sub(one, scale(reduction, 1.0 - cfg.gamma_alpha));
  Tensor f_s = sub(one, scale(reduction, 1.0 - cfg.gamma_s));
  out.alpha = mul(out.alpha, f_alpha);
  out.s = clamp(mul(out.s, f_s), kScaleMin, kScaleMax);
  return out;
}

GaussianSet run_cga(const GaussianSet& g, const std::vector<Tensor>& maps,
                    const std::vector<Camera>& cams, const ViewWeights& w,
                    const CgaConfig& cfg, const CgaParams& p, CgaMode mode, CgaTrace* trace) {
  cfg.validate();
  GaussianSet cur = g;
  for (int64_t k = 0; k < cfg.stages; ++k) {
    Thresholds t;
    if (cfg.has_fixed()) {
      t.tau_low = Tensor::full({1, 1}, cfg.fixed_tau_low);
      t.tau_high = Tensor::full({1, 1}, cfg.fixed_tau_high);
    } else {
      t = compute_thresholds(cur, maps, cams, w, p, cfg, k);
    }
    const int64_t n_before = cur.count();
    Tensor scores = gaussian_scores(cur, maps, cams, w);
    GaussianSet post_split = split(cur, scores, t.tau_high, cfg, p, k, mode);
    const int64_t n_children = post_split.count() - n_before;
    Tensor padded = scores;
    if (n_children > 0)
      padded = concat_rows({scores, Tensor::full({n_children, 1}, kExemptScore)});
    GaussianSet post_prune = prune(post_split, padded, t.tau_low, cfg, mode);
    if (trace) {
      CgaStageInfo info;
      info.n_before = n_before;
      info.n_split = n_children / cfg.children;
      info.n_removed = post_split.count() - post_prune.count();
      info.n_after = post_prune.count();
      info.tau_low = t.tau_low.data()[0];
      info.tau_high = t.tau_high.data()[0];
      trace->stages.push_back(info);
    }
    cur = post_prune;
  }
  return cur;
}

}  // namespace gs
