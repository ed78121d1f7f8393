#include "gs/init_gaussians.hpp"

#include <cmath>

#include "gs/geometry.hpp"
#include "gs/ops.hpp"

namespace gs {
namespace {

// [d, qh, qw] feature map from [hw, d] tokens.
Tensor token_map(const Tensor& tokens, int64_t qh, int64_t qw) {
  return reshape(transpose(tokens), {tokens.dim(1), qh, qw});
}

}  // namespace

void InitConfig::validate() const {
  GS_CHECK((alpha0 > 0.0 && alpha0 < 1.0), "init: alpha0 must lie strictly in (0,1)");
  GS_CHECK(scale_gain > 0.0, "init: scale_gain must be positive");
  GS_CHECK((s_lo > kScaleMin && s_hi < kScaleMax && s_lo < s_hi),
           "init: scale clamp must sit strictly inside the global scale bounds");
  GS_CHECK((sh_dim == 3 || sh_dim == 12), "init: sh_dim must be 3 or 12");
}

GaussianSet init_gaussians(const std::vector<View>& views, const EncodedViews& enc,
                           const InitConfig& cfg) {
  cfg.validate();
  GS_CHECK(views.size() >= 1, "init: need at least one view");
  GS_CHECK(enc.inv_depth.size() == views.size(), "init: encoder output count mismatch");
  GS_CHECK(enc.tokens.size() == views.size(), "init: encoder token count mismatch");

  std::vector<Tensor> mu_v, s_v, r_v, a_v, sh_v, q_v;
  for (size_t v = 0; v < views.size(); ++v) {
    const Camera& cam = views[v].cam;
    const int64_t H = cam.height, W = cam.width, HW = H * W;
    GS_CHECK((enc.inv_depth[v].dim(0) == HW && enc.inv_depth[v].dim(1) == 1),
             "init: inverse-depth shape mismatch");

    // Constant per-pixel ray directions R^T * K^{-1} [x, y, 1] and camera center.
    Tensor dirs = Tensor::zeros({HW, 3});
    double* dp = dirs.data().data();
    const Mat3 rt = cam.rotation().transposed();
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const Vec3 d_cam{(static_cast<double>(x) - cam.cx) / cam.fx,
                         (static_cast<double>(y) - cam.cy) / cam.fy, 1.0};
        const Vec3 d_world = rt.mul(d_cam);
        double* row = dp + (y * W + x) * 3;
        row[0] = d_world.x;
        row[1] = d_world.y;
        row[2] = d_world.z;
      }
    }
    const Vec3 c = cam.center();
    Tensor center = Tensor::from_data({3}, {c.x, c.y, c.z});

    Tensor depth = div(Tensor::full({1, 1}, 1.0), enc.inv_depth[v]);  // [HW,1]
    mu_v.push_back(add(mul(depth, dirs), center));

    Tensor s_iso = clamp(scale(depth, cfg.scale_gain / cam.fx), cfg.s_lo, cfg.s_hi);
    s_v.push_back(mul(s_iso, Tensor::full({1, 3}, 1.0)));

    Tensor rq = Tensor::zeros({HW, 4});
    double* rp = rq.data().data();
    for (int64_t i = 0; i < HW; ++i) rp[i * 4] = 1.0;
    r_v.push_back(rq);

    a_v.push_back(Tensor::full({HW, 1}, cfg.alpha0));

    // dc matches the pixel exactly: color = 0.5 + C0 * dc, so dc = (rgb - 0.5) / C0.
    Tensor sh = Tensor::zeros({HW, cfg.sh_dim});
    double* shp = sh.data().data();
    const double* img = views[v].image.data().data();  // [3, H, W]
    for (int64_t i = 0; i < HW; ++i)
      for (int64_t ch = 0; ch < 3; ++ch)
        shp[i * cfg.sh_dim + ch] = (img[ch * HW + i] - 0.5) / kShC0;
    sh_v.push_back(sh);

    q_v.push_back(bilinear_sample(token_map(enc.tokens[v], enc.qh, enc.qw), quarter_grid(H, W)));
  }

  GaussianSet g;
  g.mu = concat_rows(mu_v);
  g.s = concat_rows(s_v);
  g.r = concat_rows(r_v);
  g.alpha = concat_rows(a_v);
  g.sh = concat_rows(sh_v);
  g.queries = concat_rows(q_v);
  g.validate();
  return g;
}

}  // namespace gs
