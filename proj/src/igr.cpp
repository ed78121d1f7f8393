#include "gs/igr.hpp"

#include <cmath>
#include <string>

#include "gs/gaussian_decode.hpp"
#include "gs/geometry.hpp"
#include "gs/ops.hpp"

namespace gs {
namespace {

Tensor randn(Rng& rng, Shape shape, double std) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.data()) v = std * rng.normal();
  return t;
}

Tensor zeros_p(Shape shape) { return Tensor::zeros(std::move(shape), true); }

// mask [N,1]: 1 where the projection is usable (in front of the camera and
// within one pixel of the map), 0 elsewhere.
Tensor sample_mask(const ProjectedPoints& pp, int64_t w, int64_t h) {
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

void IgrConfig::validate() const {
  GS_CHECK(blocks >= 1, "igr: need at least one block");
  GS_CHECK((heads >= 1 && d_model % heads == 0), "igr: heads must divide d_model");
  GS_CHECK(points >= 1, "igr: need at least one sampling point");
  GS_CHECK(hidden >= 1, "igr: hidden width must be positive");
}

DeformAttnParams DeformAttnParams::init(Rng& rng, int64_t channels, int64_t d, int64_t points) {
  DeformAttnParams p;
  p.w_phi = randn(rng, {channels, d}, std::sqrt(1.0 / static_cast<double>(channels)));
  p.b_phi = zeros_p({d});
  if (points > 1) {
    p.w_off = zeros_p({d, 2 * (points - 1)});  // offsets start at the reference point
    p.b_off = zeros_p({2 * (points - 1)});
  }
  p.w_val = zeros_p({d, d});  // zero value path: fresh attention is a no-op
  p.b_val = zeros_p({d});
  return p;
}

Tensor deformable_attention(const Tensor& q, const Tensor& fmap, const Tensor& ref_pts,
                            const Tensor& mask, const DeformAttnParams& p, int64_t heads) {
  const int64_t n = q.dim(0), d = q.dim(1);
  GS_CHECK((fmap.ndim() == 3 && p.w_phi.dim(0) == fmap.dim(0)),
           "deformable_attention: feature map channels mismatch");
  GS_CHECK((ref_pts.dim(0) == n && mask.dim(0) == n), "deformable_attention: row mismatch");
  GS_CHECK(d % heads == 0, "deformable_attention: heads must divide d");
  const int64_t P = p.points();
  const int64_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Tensor> phis;
  for (int64_t s = 0; s < P; ++s) {
    Tensor pts = ref_pts;
    if (s > 0) {
      Tensor off = scale(tanh(add(matmul(q, slice_cols(p.w_off, 2 * (s - 1), 2 * s)),
                                  slice_cols(reshape(p.b_off, {1, 2 * (P - 1)}), 2 * (s - 1),
                                             2 * s))),
                         4.0);
      pts = add(ref_pts, off);
    }
    phis.push_back(add(matmul(bilinear_sample(fmap, pts), p.w_phi), p.b_phi));
  }

  Tensor out;
  if (P == 1) {
    out = phis[0];
  } else {
    // Per-head softmax over the P samples.
    std::vector<Tensor> logits;  // each [N, heads]
    for (int64_t s = 0; s < P; ++s) {
      Tensor l;
      for (int64_t h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor ph = slice_cols(phis[s], h * dh, (h + 1) * dh);
        Tensor dot = scale(sum_axis(mul(qh, ph), 1, true), inv_sqrt);
        l = l.defined() ? concat(l, dot, 1) : dot;
      }
      logits.push_back(l);
    }
    // softmax over samples: stack as [N, P] per head via interleaved concat.
    std::vector<Tensor> weights(static_cast<size_t>(P));
    for (int64_t h = 0; h < heads; ++h) {
      Tensor col;
      for (int64_t s = 0; s < P; ++s) {
        Tensor lh = slice_cols(logits[static_cast<size_t>(s)], h, h + 1);
        col = col.defined() ? concat(col, lh, 1) : lh;
      }
      Tensor w = softmax(col, 1);  // [N, P]
      for (int64_t s = 0; s < P; ++s) {
        Tensor ws = slice_cols(w, s, s + 1);
        Tensor& acc = weights[static_cast<size_t>(s)];
        acc = acc.defined() ? concat(acc, ws, 1) : ws;  // [N, heads]
      }
    }
    for (int64_t s = 0; s < P; ++s) {
      Tensor contrib;
      for (int64_t h = 0; h < heads; ++h) {
        Tensor ph = slice_cols(phis[static_cast<size_t>(s)], h * dh, (h + 1) * dh);
        Tensor wh = slice_cols(weights[static_cast<size_t>(s)], h, h + 1);
        Tensor c = mul(ph, wh);
        contrib = contrib.defined() ? concat(contrib, c, 1) : c;
      }
      out = out.defined() ? add(out, contrib) : contrib;
    }
  }
  return mul(add(matmul(out, p.w_val), p.b_val), mask);
}

IgrParams IgrParams::init(const IgrConfig& cfg, int64_t sh_dim, int64_t d_enc, Rng& rng) {
  cfg.validate();
  const int64_t d = cfg.d_model, hid = cfg.hidden, pdim = 11 + sh_dim;
  IgrParams p;
  p.cfg = cfg;
  p.embed_w1 = randn(rng, {pdim, hid}, std::sqrt(2.0 / static_cast<double>(pdim)));
  p.embed_b1 = zeros_p({hid});
  p.embed_w2 = randn(rng, {hid, d}, std::sqrt(2.0 / static_cast<double>(hid)));
  p.embed_b2 = zeros_p({d});
  p.q_proj = zeros_p({d_enc, d});
  for (int64_t b = 0; b < cfg.blocks; ++b) {
    IgrBlockParams bp;
    bp.da = DeformAttnParams::init(rng, d_enc, d, cfg.points);
    bp.ln_g = Tensor::full({d}, 1.0, true);
    bp.ln_b = zeros_p({d});
    bp.w1 = randn(rng, {d, hid}, std::sqrt(2.0 / static_cast<double>(d)));
    bp.b1 = zeros_p({hid});
    bp.w2 = zeros_p({hid, d});
    bp.b2 = zeros_p({d});
    p.blocks.push_back(bp);
  }
  p.dec_w1 = randn(rng, {d, hid}, std::sqrt(2.0 / static_cast<double>(d)));
  p.dec_b1 = zeros_p({hid});
  p.dec_w2 = zeros_p({hid, pdim});  // zero decode: fresh refiner reproduces the base
  p.dec_b2 = zeros_p({pdim});
  return p;
}

NamedTensors IgrParams::params() {
  NamedTensors out;
  auto put = [&](const std::string& name, Tensor& t) { out.emplace_back(name, t); };
  put("igr.embed.w1", embed_w1);
  put("igr.embed.b1", embed_b1);
  put("igr.embed.w2", embed_w2);
  put("igr.embed.b2", embed_b2);
  put("igr.q_proj", q_proj);
  for (size_t b = 0; b < blocks.size(); ++b) {
    IgrBlockParams& bp = blocks[b];
    const std::string pre = "igr.blk" + std::to_string(b) + ".";
    put(pre + "da.w_phi", bp.da.w_phi);
    put(pre + "da.b_phi", bp.da.b_phi);
    if (bp.da.w_off.defined()) {
      put(pre + "da.w_off", bp.da.w_off);
      put(pre + "da.b_off", bp.da.b_off);
    }
    put(pre + "da.w_val", bp.da.w_val);
    put(pre + "da.b_val", bp.da.b_val);
    put(pre + "ln.g", bp.ln_g);
    put(pre + "ln.b", bp.ln_b);
    put(pre + "mlp.w1", bp.w1);
    put(pre + "mlp.b1", bp.b1);
    put(pre + "mlp.w2", bp.w2);
    put(pre + "mlp.b2", bp.b2);
  }
  put("igr.dec.w1", dec_w1);
  put("igr.dec.b1", dec_b1);
  put("igr.dec.w2", dec_w2);
  put("igr.dec.b2", dec_b2);
  return out;
}

Tensor embed_gaussians(const GaussianSet& g, const IgrParams& p) {
  GS_CHECK(g.count() > 0, "embed_gaussians: empty set");
  Tensor q = add(matmul(gelu(add(matmul(g.params(), p.embed_w1), p.embed_b1)), p.embed_w2),
                 p.embed_b2);
  if (g.queries.defined()) q = add(q, matmul(g.queries, p.q_proj));
  return q;
}

Tensor decode_head(const Tensor& q, const IgrParams& p) {
  return add(matmul(gelu(add(matmul(q, p.dec_w1), p.dec_b1)), p.dec_w2), p.dec_b2);
}

Tensor igr_block(const Tensor& q, const std::vector<Tensor>& fmaps,
                 const std::vector<Tensor>& ref_pts, const std::vector<Tensor>& masks,
                 const Tensor& view_alpha, const IgrBlockParams& bp, int64_t heads) {
  GS_CHECK((fmaps.size() == ref_pts.size() && fmaps.size() == masks.size()),
           "igr_block: per-view input mismatch");
  Tensor attn;
  for (size_t v = 0; v < fmaps.size(); ++v) {
    Tensor u = deformable_attention(q, fmaps[v], ref_pts[v], masks[v], bp.da, heads);
    Tensor weighted = mul(u, gather_rows(view_alpha, {static_cast<int64_t>(v)}));
    attn = attn.defined() ? add(attn, weighted) : weighted;
  }
  Tensor x = add(q, attn);
  Tensor h = layernorm(x, bp.ln_g, bp.ln_b);
  return add(x, add(matmul(gelu(add(matmul(h, bp.w1), bp.b1)), bp.w2), bp.b2));
}

GaussianSet run_igr(const GaussianSet& g, const EncodedViews& enc,
                    const std::vector<Camera>& cams, const Tensor& view_alpha,
                    const IgrParams& p) {
  GS_CHECK(enc.tokens.size() == cams.size(), "run_igr: view count mismatch");
  const size_t V = cams.size();
  std::vector<Tensor> fmaps;
  std::vector<Camera> qcams;
  for (size_t v = 0; v < V; ++v) {
    fmaps.push_back(reshape(transpose(enc.tokens[v]), {enc.tokens[v].dim(1), enc.qh, enc.qw}));
    qcams.push_back(cams[v].downscaled(4));
  }

  // The base for every decode is the input set; blocks move only the queries.
  GaussianSet base_c;  // constant copy for the between-block center re-decode
  base_c.mu = detach(g.mu);
  base_c.s = detach(g.s);
  base_c.r = detach(g.r);
  base_c.alpha = detach(g.alpha);
  base_c.sh = detach(g.sh);

  Tensor q = embed_gaussians(g, p);
  Tensor mu_ref = detach(g.mu);
  GaussianSet out;
  for (int64_t b = 0; b < p.cfg.blocks; ++b) {
    std::vector<Tensor> pts, masks;
    for (size_t v = 0; v < V; ++v) {
      ProjectedPoints pp = project_points(mu_ref, qcams[v]);
      masks.push_back(sample_mask(pp, qcams[v].width, qcams[v].height));
      pts.push_back(detach(pp.pix));
    }
    q = igr_block(q, fmaps, pts, masks, view_alpha, p.blocks[static_cast<size_t>(b)],
                  p.cfg.heads);
    if (b + 1 < p.cfg.blocks) {
      // Reference points for the next block come from the current decode,
      // computed off-tape: they steer sampling but are not a gradient path.
      mu_ref = decode_delta(base_c, detach(decode_head(q, p))).mu;
    }
  }
  out = decode_delta(g, decode_head(q, p));
  return out;
}

}  // namespace gs
