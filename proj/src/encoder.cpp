#include "gs/encoder.hpp"

#include <cmath>
#include <string>

#include "gs/geometry.hpp"

namespace gs {
namespace {

Tensor randn(Rng& rng, Shape shape, double std) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.data()) v = std * rng.normal();
  return t;
}

Tensor zeros_p(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor ones_p(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

// [hw, d] tokens as a [d, h, w] feature map.
Tensor as_map(const Tensor& tokens, int64_t h, int64_t w) {
  return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

}  // namespace

void EncoderConfig::validate() const {
  GS_CHECK(base_width >= 2, "encoder: base_width must be at least 2");
  GS_CHECK(attn_blocks >= 0, "encoder: attn_blocks must be non-negative");
  GS_CHECK((attn_heads >= 1 && d_model() % attn_heads == 0),
           "encoder: heads must divide the model width");
  GS_CHECK(d_model() % 4 == 0, "encoder: model width must be divisible by 4");
  GS_CHECK(depth_planes >= 2, "encoder: need at least two depth candidates");
  GS_CHECK((d_near > 0.0 && d_far > d_near), "encoder: need 0 < d_near < d_far");
}

Encoder Encoder::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const int64_t w = cfg.base_width, d = cfg.d_model(), D = cfg.depth_planes;
  Encoder e;
  e.cfg = cfg;
  auto conv = [&](int64_t cin, int64_t cout) { return randn(rng, {cout, cin, 3, 3},
                                                            std::sqrt(2.0 / (9.0 * cin))); };
  e.w00 = conv(3, w);
  e.b00 = zeros_p({w});
  e.w01 = conv(w, w);
  e.b01 = zeros_p({w});
  e.w10 = conv(w, 2 * w);
  e.b10 = zeros_p({2 * w});
  e.w11 = conv(2 * w, 2 * w);
  e.b11 = zeros_p({2 * w});
  e.w20 = conv(2 * w, d);
  e.b20 = zeros_p({d});
  e.w21 = conv(d, d);
  e.b21 = zeros_p({d});
  for (int64_t b = 0; b < cfg.attn_blocks; ++b) {
    AttnBlock blk;
    blk.ln1_g = ones_p({d});
    blk.ln1_b = zeros_p({d});
    blk.wq = randn(rng, {d, d}, std::sqrt(1.0 / d));
    blk.bq = zeros_p({d});
    blk.wk = randn(rng, {d, d}, std::sqrt(1.0 / d));
    blk.bk = zeros_p({d});
    blk.wv = randn(rng, {d, d}, std::sqrt(1.0 / d));
    blk.bv = zeros_p({d});
    blk.wo = zeros_p({d, d});  // zero output projection: block starts as identity
    blk.bo = zeros_p({d});
    blk.ln2_g = ones_p({d});
    blk.ln2_b = zeros_p({d});
    blk.w1 = randn(rng, {d, 2 * d}, std::sqrt(2.0 / d));
    blk.b1 = zeros_p({2 * d});
    blk.w2 = zeros_p({2 * d, d});
    blk.b2 = zeros_p({d});
    e.blocks.push_back(blk);
  }
  e.rw0 = randn(rng, {2 * D, D, 3, 3}, std::sqrt(2.0 / (9.0 * D)));
  e.rb0 = zeros_p({2 * D});
  e.rw1 = zeros_p({D, 2 * D, 3, 3});  // zero residual: raw correlation at init
  e.rb1 = zeros_p({D});
  return e;
}

NamedTensors Encoder::params() {
  NamedTensors p;
  auto put = [&](const std::string& name, Tensor& t) { p.emplace_back(name, t); };
  put("enc.conv00.w", w00);
  put("enc.conv00.b", b00);
  put("enc.conv01.w", w01);
  put("enc.conv01.b", b01);
  put("enc.conv10.w", w10);
  put("enc.conv10.b", b10);
  put("enc.conv11.w", w11);
  put("enc.conv11.b", b11);
  put("enc.conv20.w", w20);
  put("enc.conv20.b", b20);
  put("enc.conv21.w", w21);
  put("enc.conv21.b", b21);
  for (size_t i = 0; i < blocks.size(); ++i) {
    AttnBlock& b = blocks[i];
    const std::string pre = "enc.blk" + std::to_string(i) + ".";
    put(pre + "ln1.g", b.ln1_g);
    put(pre + "ln1.b", b.ln1_b);
    put(pre + "wq", b.wq);
    put(pre + "bq", b.bq);
    put(pre + "wk", b.wk);
    put(pre + "bk", b.bk);
    put(pre + "wv", b.wv);
    put(pre + "bv", b.bv);
    put(pre + "wo", b.wo);
    put(pre + "bo", b.bo);
    put(pre + "ln2.g", b.ln2_g);
    put(pre + "ln2.b", b.ln2_b);
    put(pre + "mlp.w1", b.w1);
    put(pre + "mlp.b1", b.b1);
    put(pre + "mlp.w2", b.w2);
    put(pre + "mlp.b2", b.b2);
  }
  put("enc.reg0.w", rw0);
  put("enc.reg0.b", rb0);
  put("enc.reg1.w", rw1);
  put("enc.reg1.b", rb1);
  return p;
}

Tensor Encoder::conv_tokens(const Tensor& image) const {
  GS_CHECK((image.ndim() == 3 && image.dim(0) == 3), "conv_tokens: image must be [3,H,W]");
  Tensor x = gelu(conv2d(image, w00, b00, 1));
  x = gelu(conv2d(x, w01, b01, 1));
  x = gelu(conv2d(x, w10, b10, 2));
  x = gelu(conv2d(x, w11, b11, 1));
  x = gelu(conv2d(x, w20, b20, 2));
  x = gelu(conv2d(x, w21, b21, 1));
  const int64_t d = x.dim(0), hw = x.dim(1) * x.dim(2);
  return transpose(reshape(x, {d, hw}));
}

std::vector<Tensor> Encoder::attend(const std::vector<Tensor>& tokens, int64_t qh,
                                    int64_t qw) const {
  const size_t V = tokens.size();
  const int64_t d = cfg.d_model(), hw = qh * qw;
  const Tensor pe = positional_encoding(qh, qw, d);
  std::vector<Tensor> with_pe;
  for (const Tensor& t : tokens) {
    GS_CHECK((t.dim(0) == hw && t.dim(1) == d), "attend: token shape mismatch");
    with_pe.push_back(add(t, pe));
  }
  Tensor x = concat_rows(with_pe);

  const int64_t dh = d / cfg.attn_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const AttnBlock& b : blocks) {
    Tensor h = layernorm(x, b.ln1_g, b.ln1_b);
    Tensor q = add(matmul(h, b.wq), b.bq);
    Tensor k = add(matmul(h, b.wk), b.bk);
    Tensor v = add(matmul(h, b.wv), b.bv);
    Tensor heads;
    for (int64_t hd = 0; hd < cfg.attn_heads; ++hd) {
      Tensor qh_ = slice_cols(q, hd * dh, (hd + 1) * dh);
      Tensor kh_ = slice_cols(k, hd * dh, (hd + 1) * dh);
      Tensor vh_ = slice_cols(v, hd * dh, (hd + 1) * dh);
      Tensor attn = softmax(scale(matmul(qh_, transpose(kh_)), inv_sqrt), 1);
      Tensor oh = matmul(attn, vh_);
      heads = heads.defined() ? concat(heads, oh, 1) : oh;
    }
    x = add(x, add(matmul(heads, b.wo), b.bo));
    Tensor h2 = layernorm(x, b.ln2_g, b.ln2_b);
    x = add(x, add(matmul(gelu(add(matmul(h2, b.w1), b.b1)), b.w2), b.b2));
  }

  std::vector<Tensor> out;
  for (size_t v = 0; v < V; ++v) {
    std::vector<int64_t> idx(static_cast<size_t>(hw));
    for (int64_t i = 0; i < hw; ++i) idx[static_cast<size_t>(i)] = static_cast<int64_t>(v) * hw + i;
    out.push_back(gather_rows(x, std::move(idx)));
  }
  return out;
}

std::vector<double> inv_depth_candidates(double d_near, double d_far, int64_t n) {
  GS_CHECK((n >= 2 && d_near > 0.0 && d_far > d_near), "inv_depth_candidates: bad range");
  const double z0 = 1.0 / d_far, z1 = 1.0 / d_near;
  std::vector<double> z(static_cast<size_t>(n));
  for (int64_t k = 0; k < n; ++k)
    z[static_cast<size_t>(k)] = z0 + (z1 - z0) * static_cast<double>(k) /
                                         static_cast<double>(n - 1);
  return z;
}

Tensor positional_encoding(int64_t h, int64_t w, int64_t d) {
  GS_CHECK(d % 4 == 0, "positional_encoding: width must be divisible by 4");
  const int64_t bands = d / 4;
  Tensor pe = Tensor::zeros({h * w, d});
  double* p = pe.data().data();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double* row = p + (y * w + x) * d;
      for (int64_t i = 0; i < bands; ++i) {
        const double fx = M_PI * std::pow(2.0, static_cast<double>(i)) /
                          std::max<double>(static_cast<double>(w - 1), 1.0);
        const double fy = M_PI * std::pow(2.0, static_cast<double>(i)) /
                          std::max<double>(static_cast<double>(h - 1), 1.0);
        row[4 * i + 0] = std::sin(fx * static_cast<double>(x));
        row[4 * i + 1] = std::cos(fx * static_cast<double>(x));
        row[4 * i + 2] = std::sin(fy * static_cast<double>(y));
        row[4 * i + 3] = std::cos(fy * static_cast<double>(y));
      }
    }
  }
  return pe;
}

Tensor sweep_points(const Camera& cam_v, const Camera& cam_u, double zeta) {
  GS_CHECK(zeta > 0.0, "sweep_points: inverse depth must be positive");
  const int64_t h = cam_v.height, w = cam_v.width;
  Tensor pts = Tensor::zeros({h * w, 2});
  double* p = pts.data().data();
  const double depth = 1.0 / zeta;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const Vec3 X = unproject({static_cast<double>(x), static_cast<double>(y)}, depth, cam_v);
      const PointProjection pp = project_point(X, cam_u);
      double* row = p + (y * w + x) * 2;
      row[0] = pp.visible ? pp.pix.x : -1e6;
      row[1] = pp.visible ? pp.pix.y : -1e6;
    }
  }
  return pts;
}

Tensor correlation_volume(const std::vector<Tensor>& tokens, const std::vector<Camera>& cams,
                          size_t v, const std::vector<double>& zetas, int64_t qh, int64_t qw) {
  const size_t V = tokens.size();
  GS_CHECK((V >= 2 && cams.size() == V && v < V), "correlation_volume: need matching views");
  const int64_t d = tokens[v].dim(1);
  const double norm = 1.0 / (static_cast<double>(V - 1) * std::sqrt(static_cast<double>(d)));

  std::vector<Tensor> maps(V);
  for (size_t u = 0; u < V; ++u)
    if (u != v) maps[u] = as_map(tokens[u], qh, qw);

  Tensor vol;
  for (double zeta : zetas) {
    Tensor acc;
    for (size_t u = 0; u < V; ++u) {
      if (u == v) continue;
      Tensor pts = sweep_points(cams[v], cams[u], zeta);
      Tensor samp = bilinear_sample(maps[u], pts);
      Tensor dot = sum_axis(mul(tokens[v], samp), 1, true);
      acc = acc.defined() ? add(acc, dot) : dot;
    }
    Tensor col = scale(acc, norm);
    vol = vol.defined() ? concat(vol, col, 1) : col;
  }
  return vol;
}

Tensor quarter_grid(int64_t H, int64_t W) {
  const int64_t qh = H / 4, qw = W / 4;
  Tensor pts = Tensor::zeros({H * W, 2});
  double* p = pts.data().data();
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      double* row = p + (y * W + x) * 2;
      const double qx = (static_cast<double>(x) + 0.5) / 4.0 - 0.5;
      const double qy = (static_cast<double>(y) + 0.5) / 4.0 - 0.5;
      row[0] = std::clamp(qx, 0.0, static_cast<double>(qw - 1));
      row[1] = std::clamp(qy, 0.0, static_cast<double>(qh - 1));
    }
  }
  return pts;
}

EncodedViews encode_views(const Encoder& enc, const std::vector<View>& views) {
  GS_CHECK(views.size() >= 2, "encode_views: need at least two views");
  const int64_t H = views[0].image.dim(1), W = views[0].image.dim(2);
  GS_CHECK((H % 4 == 0 && W % 4 == 0), "encode_views: extents must be divisible by 4");
  for (const View& v : views) {
    GS_CHECK((v.image.dim(1) == H && v.image.dim(2) == W), "encode_views: mixed image sizes");
    GS_CHECK((v.cam.height == H && v.cam.width == W), "encode_views: camera/image mismatch");
  }
  const int64_t qh = H / 4, qw = W / 4;
  const int64_t D = enc.cfg.depth_planes;

  std::vector<Tensor> conv_toks;
  std::vector<Camera> qcams;
  for (const View& v : views) {
    conv_toks.push_back(enc.conv_tokens(v.image));
    qcams.push_back(v.cam.downscaled(4));
  }

  EncodedViews out;
  out.qh = qh;
  out.qw = qw;
  out.tokens = enc.attend(conv_toks, qh, qw);

  const std::vector<double> zetas = inv_depth_candidates(enc.cfg.d_near, enc.cfg.d_far, D);
  Tensor zcol = Tensor::from_data({D, 1}, std::vector<double>(zetas.begin(), zetas.end()));
  const Tensor grid = quarter_grid(H, W);

  for (size_t v = 0; v < views.size(); ++v) {
    Tensor corr = correlation_volume(conv_toks, qcams, v, zetas, qh, qw);
    Tensor y = reshape(transpose(corr), {D, qh, qw});
    y = gelu(conv2d(y, enc.rw0, enc.rb0, 1));
    y = conv2d(y, enc.rw1, enc.rb1, 1);
    Tensor vol = add(corr, transpose(reshape(y, {D, qh * qw})));
    Tensor zq = matmul(softmax(vol, 1), zcol);  // [qh*qw, 1]
    Tensor zfull = bilinear_sample(reshape(transpose(zq), {1, qh, qw}), grid);
    out.inv_depth.push_back(zfull);
  }
  return out;
}

}  // namespace gs
