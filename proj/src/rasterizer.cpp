#include "gs/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "gs/geometry.hpp"

namespace gs {
namespace {

bool tape_wants(std::initializer_list<const Tensor*> ins) {
  if (!active_tape()) return false;
  for (const Tensor* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

// Everything the per-pixel walk and the analytic backward need, precomputed
// once per visible Gaussian. Recomputed (not stored) by the tape closure.
struct Splat {
  int64_t id = 0;               // row in the input set
  Vec2 pix;                     // projected center, pixel coordinates
  double depth = 0;             // camera-space z
  double conic[3] = {0, 0, 0};  // inverse screen covariance (a, b, c)
  double radius = 0;            // sigma_cull * sqrt(max eigenvalue of cov2)
  double alpha = 0;
  Vec3 color;   // view-dependent radiance, clamped at zero
  Vec3 raw;     // radiance before the clamp, for the subgradient mask
  Vec3 dir;     // unit direction from the camera center to the mean
  Vec3 p_cam;   // mean in camera coordinates
  Mat3 cov3;    // world covariance
};

struct Frame {
  std::vector<Splat> splats;                // visible splats in depth order
  int64_t tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<int32_t>> tiles;  // per tile: indices into splats
};

void check_inputs(const GaussianSet& g, const Camera& cam) {
  const int64_t n = g.count();
  GS_CHECK((g.mu.ndim() == 2 && g.mu.dim(1) == 3), "render: mu must be [N,3]");
  GS_CHECK((g.s.ndim() == 2 && g.s.dim(0) == n && g.s.dim(1) == 3), "render: s must be [N,3]");
  GS_CHECK((g.r.ndim() == 2 && g.r.dim(0) == n && g.r.dim(1) == 4), "render: r must be [N,4]");
  GS_CHECK((g.alpha.ndim() == 2 && g.alpha.dim(0) == n && g.alpha.dim(1) == 1),
           "render: alpha must be [N,1]");
  GS_CHECK((g.sh.ndim() == 2 && g.sh.dim(0) == n && (g.sh.dim(1) == 3 || g.sh.dim(1) == 12)),
           "render: sh must be [N,3] or [N,12]");
  GS_CHECK(cam.width > 0 && cam.height > 0, "render: camera has no image plane");
}

void preprocess(const GaussianSet& g, const Camera& cam, const RenderSettings& st, bool bin_tiles,
                Frame& fr) {
  const int64_t n = g.count();
  const int64_t c_dim = g.sh_dim();
  const double* mu = g.mu.data().data();
  const double* sc = g.s.data().data();
  const double* rq = g.r.data().data();
  const double* al = g.alpha.data().data();
  const double* sh = g.sh.data().data();

  const Mat3 R = cam.rotation();
  const Vec3 t = cam.translation();
  const Vec3 c0 = cam.center();

  std::vector<Splat> all(static_cast<size_t>(n));
  std::vector<char> keep(static_cast<size_t>(n), 0);

#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const Vec3 m{mu[i * 3 + 0], mu[i * 3 + 1], mu[i * 3 + 2]};
    const Vec3 pc = R.mul(m) + t;
    if (!(pc.z > st.z_near)) continue;

    Splat sp;
    sp.id = i;
    sp.p_cam = pc;
    sp.depth = pc.z;
    sp.pix = {cam.fx * pc.x / pc.z + cam.cx, cam.fy * pc.y / pc.z + cam.cy};

    const Vec3 s{sc[i * 3 + 0], sc[i * 3 + 1], sc[i * 3 + 2]};
    const Vec4 q{rq[i * 4 + 0], rq[i * 4 + 1], rq[i * 4 + 2], rq[i * 4 + 3]};
    sp.cov3 = covariance_from(s, q);
    const Mat2 cov2 = project_covariance(sp.cov3, pc, cam);
    const double a = cov2.m[0], b = cov2.m[1], c = cov2.m[3];
    const double det = a * c - b * b;
    if (!(det > 0.0)) continue;  // dilation keeps this from firing in practice
    sp.conic[0] = c / det;
    sp.conic[1] = -b / det;
    sp.conic[2] = a / det;
    const double lam_max = 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    sp.radius = st.sigma_cull * std::sqrt(lam_max);

    sp.alpha = al[i];
    sp.dir = (m - c0).normalized();
    double rgb[3];
    eval_sh_color(sh + i * c_dim, c_dim, sp.dir, rgb);
    sp.raw = {rgb[0], rgb[1], rgb[2]};
    sp.color = {std::max(rgb[0], 0.0), std::max(rgb[1], 0.0), std::max(rgb[2], 0.0)};
    all[static_cast<size_t>(i)] = sp;
    keep[static_cast<size_t>(i)] = 1;
  }

  fr.splats.clear();
  fr.splats.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    if (keep[static_cast<size_t>(i)]) fr.splats.push_back(all[static_cast<size_t>(i)]);
  std::sort(fr.splats.begin(), fr.splats.end(), [](const Splat& x, const Splat& y) {
    return x.depth != y.depth ? x.depth < y.depth : x.id < y.id;
  });

  if (!bin_tiles) return;
  const int64_t ts = st.tile_size;
  fr.tiles_x = (cam.width + ts - 1) / ts;
  fr.tiles_y = (cam.height + ts - 1) / ts;
  fr.tiles.assign(static_cast<size_t>(fr.tiles_x * fr.tiles_y), {});
  const double w_edge = static_cast<double>(cam.width) - 0.5;
  const double h_edge = static_cast<double>(cam.height) - 0.5;
  for (size_t v = 0; v < fr.splats.size(); ++v) {
    const Splat& sp = fr.splats[v];
    const double x_lo = sp.pix.x - sp.radius, x_hi = sp.pix.x + sp.radius;
    const double y_lo = sp.pix.y - sp.radius, y_hi = sp.pix.y + sp.radius;
    if (x_hi < -0.5 || x_lo > w_edge || y_hi < -0.5 || y_lo > h_edge) continue;
    const int64_t tx0 = std::clamp<int64_t>(
        static_cast<int64_t>(std::floor((x_lo + 0.5) / static_cast<double>(ts))), 0,
        fr.tiles_x - 1);
    const int64_t tx1 = std::clamp<int64_t>(
        static_cast<int64_t>(std::floor((x_hi + 0.5) / static_cast<double>(ts))), 0,
        fr.tiles_x - 1);
    const int64_t ty0 = std::clamp<int64_t>(
        static_cast<int64_t>(std::floor((y_lo + 0.5) / static_cast<double>(ts))), 0,
        fr.tiles_y - 1);
    const int64_t ty1 = std::clamp<int64_t>(
        static_cast<int64_t>(std::floor((y_hi + 0.5) / static_cast<double>(ts))), 0,
        fr.tiles_y - 1);
    for (int64_t ty = ty0; ty <= ty1; ++ty)
      for (int64_t tx = tx0; tx <= tx1; ++tx)
        fr.tiles[static_cast<size_t>(ty * fr.tiles_x + tx)].push_back(static_cast<int32_t>(v));
  }
}

// One contribution's weight at a pixel. Shared verbatim between the tiled and
// dense paths (and between forward and backward) so they agree bit for bit.
inline bool weight_at(const Splat& sp, double px, double py, const RenderSettings& st, double& w,
                      bool& clamped) {
  const double dx = px - sp.pix.x, dy = py - sp.pix.y;
  const double q = sp.conic[0] * dx * dx + 2.0 * sp.conic[1] * dx * dy + sp.conic[2] * dy * dy;
  w = sp.alpha * std::exp(-0.5 * q);
  clamped = w > st.w_max;
  if (clamped) w = st.w_max;
  return w >= st.eps_alpha;
}

// Front-to-back composite of one pixel; rgb is premultiplied foreground only,
// the caller adds T_final * background. Returns T_final.
inline double walk_pixel(const std::vector<Splat>& splats, const int32_t* list, size_t len,
                         double px, double py, const RenderSettings& st, double* rgb) {
  double T = 1.0;
  rgb[0] = rgb[1] = rgb[2] = 0.0;
  for (size_t k = 0; k < len; ++k) {
    const Splat& sp = splats[static_cast<size_t>(list[k])];
    double w;
    bool cl;
    if (!weight_at(sp, px, py, st, w, cl)) continue;
    rgb[0] += T * w * sp.color.x;
    rgb[1] += T * w * sp.color.y;
    rgb[2] += T * w * sp.color.z;
    T *= 1.0 - w;
    if (T < st.transmittance_stop) break;
  }
  return T;
}

struct Contrib {
  int32_t li;    // position in the walk list
  double w;      // clamped weight
  double t;      // transmittance in front of this contribution
  bool clamped;  // weight hit w_max (gates alpha/position gradients)
};

// Per-splat gradient accumulator layout, 9 doubles per splat:
// [0,1] d/d pix, [2,3,4] d/d conic (a, b_total, c), [5,6,7] d/d color,
// [8] d/d alpha.
constexpr int kAccStride = 9;

// Backward for one pixel: replays the forward walk, then unwinds it back to
// front. For contribution i with transmittance T_i and suffix radiance S
// (everything behind i, background included):
//   dC/dw_i = color_i * T_i - S / (1 - w_i),
//   dC/dcolor_i = w_i * T_i.
// acc is indexed by walk-list position (lists are per tile, or global when
// dense). scratch is a reusable buffer.
inline void pixel_backward(const std::vector<Splat>& splats, const int32_t* list, size_t len,
                           double px, double py, const RenderSettings& st, const double* u,
                           double* acc, std::vector<Contrib>& scratch) {
  scratch.clear();
  double T = 1.0;
  for (size_t k = 0; k < len; ++k) {
    const Splat& sp = splats[static_cast<size_t>(list[k])];
    double w;
    bool cl;
    if (!weight_at(sp, px, py, st, w, cl)) continue;
    scratch.push_back({static_cast<int32_t>(k), w, T, cl});
    T *= 1.0 - w;
    if (T < st.transmittance_stop) break;
  }
  double S0 = T * st.background.x, S1 = T * st.background.y, S2 = T * st.background.z;
  for (size_t j = scratch.size(); j-- > 0;) {
    const Contrib& c = scratch[j];
    const Splat& sp = splats[static_cast<size_t>(list[c.li])];
    double* a = acc + static_cast<size_t>(c.li) * kAccStride;
    const double wT = c.w * c.t;
    a[5] += u[0] * wT;
    a[6] += u[1] * wT;
    a[7] += u[2] * wT;
    const double inv = 1.0 / (1.0 - c.w);
    const double dw = u[0] * (sp.color.x * c.t - S0 * inv) + u[1] * (sp.color.y * c.t - S1 * inv) +
                      u[2] * (sp.color.z * c.t - S2 * inv);
    if (!c.clamped) {
      const double dx = px - sp.pix.x, dy = py - sp.pix.y;
      const double q = sp.conic[0] * dx * dx + 2.0 * sp.conic[1] * dx * dy + sp.conic[2] * dy * dy;
      const double G = std::exp(-0.5 * q);
      a[8] += dw * G;
      const double dq = -0.5 * c.w * dw;  // dL/dq through w = alpha * exp(-q/2)
      const double lx = sp.conic[0] * dx + sp.conic[1] * dy;
      const double ly = sp.conic[1] * dx + sp.conic[2] * dy;
      a[0] += -2.0 * dq * lx;  // d = p - pix, so dq/dpix = -2 conic d
      a[1] += -2.0 * dq * ly;
      a[2] += dq * dx * dx;
      a[3] += dq * 2.0 * dx * dy;  // total over both off-diagonal entries
      a[4] += dq * dy * dy;
    }
    S0 += wT * sp.color.x;
    S1 += wT * sp.color.y;
    S2 += wT * sp.color.z;
  }
}

// Converts accumulated screen-space gradients (acc, one slot per visible
// splat) into gradients on the Gaussian parameter rows. Rows are disjoint
// across splats, so the loop parallelizes without races.
void scatter_grads(const GaussianSet& g, const Camera& cam, const Frame& fr,
                   const std::vector<double>& acc) {
  const int64_t n_vis = static_cast<int64_t>(fr.splats.size());
  const int64_t c_dim = g.sh_dim();
  Node* mu_n = g.mu.node().get();
  Node* s_n = g.s.node().get();
  Node* r_n = g.r.node().get();
  Node* al_n = g.alpha.node().get();
  Node* sh_n = g.sh.node().get();
  const bool want_mu = mu_n->requires_grad;
  const bool want_s = s_n->requires_grad;
  const bool want_r = r_n->requires_grad;
  const bool want_al = al_n->requires_grad;
  const bool want_sh = sh_n->requires_grad;
  const Mat3 Rt = cam.rotation().transposed();
  const Vec3 c0 = cam.center();

#pragma omp parallel for schedule(static)
  for (int64_t v = 0; v < n_vis; ++v) {
    const Splat& sp = fr.splats[static_cast<size_t>(v)];
    const double* a = acc.data() + static_cast<size_t>(v) * kAccStride;
    const int64_t i = sp.id;

    // Radiance: clamp mask, then the shared-basis expansion and, for band 1,
    // the view-direction path back to the mean.
    const double grgb[3] = {sp.raw.x > 0.0 ? a[5] : 0.0, sp.raw.y > 0.0 ? a[6] : 0.0,
                            sp.raw.z > 0.0 ? a[7] : 0.0};
    Vec3 g_mu{0, 0, 0};
    if (want_sh || want_mu) {
      double basis[4];
      sh_basis_deg1(sp.dir, basis);
      double* gsh = want_sh ? sh_n->grad.data() + i * c_dim : nullptr;
      Vec3 g_dir{0, 0, 0};
      for (int ch = 0; ch < 3; ++ch) {
        if (gsh) gsh[ch] += basis[0] * grgb[ch];
        if (c_dim == 12) {
          const double* co = g.sh.data().data() + i * c_dim + 3 + ch * 3;
          if (gsh) {
            gsh[3 + ch * 3 + 0] += basis[1] * grgb[ch];
            gsh[3 + ch * 3 + 1] += basis[2] * grgb[ch];
            gsh[3 + ch * 3 + 2] += basis[3] * grgb[ch];
          }
          g_dir.y += -kShC1 * co[0] * grgb[ch];
          g_dir.z += kShC1 * co[1] * grgb[ch];
          g_dir.x += -kShC1 * co[2] * grgb[ch];
        }
      }
      if (c_dim == 12 && want_mu) {
        const double* mrow = g.mu.data().data() + i * 3;
        const Vec3 vcd = {mrow[0] - c0.x, mrow[1] - c0.y, mrow[2] - c0.z};
        const double nrm = vcd.norm();
        const double dd = sp.dir.dot(g_dir);
        g_mu = g_mu + Vec3{(g_dir.x - sp.dir.x * dd) / nrm, (g_dir.y - sp.dir.y * dd) / nrm,
                           (g_dir.z - sp.dir.z * dd) / nrm};
      }
    }

    if (want_al) al_n->grad[static_cast<size_t>(i)] += a[8];

    if (want_mu || want_s || want_r) {
      // Conic -> screen covariance: full-matrix inverse rule
      // d Sigma2 = -Lambda (dL/dLambda) Lambda with the off-diagonal total
      // a[3] split evenly between the two symmetric entries.
      const double la = sp.conic[0], lb = sp.conic[1], lc = sp.conic[2];
      const double ga = a[2], gb = 0.5 * a[3], gc = a[4];
      // M = Lambda * G
      const double m00 = la * ga + lb * gb, m01 = la * gb + lb * gc;
      const double m10 = lb * ga + lc * gb, m11 = lb * gb + lc * gc;
      Mat2 g_cov2{{-(m00 * la + m01 * lb), -(m00 * lb + m01 * lc), -(m10 * la + m11 * lb),
                   -(m10 * lb + m11 * lc)}};

      Mat3 g_cov3{};
      Vec3 g_pcam{0, 0, 0};
      project_covariance_backward(sp.cov3, sp.p_cam, cam, g_cov2, g_cov3, g_pcam);

      if (want_s || want_r) {
        const double* srow = g.s.data().data() + i * 3;
        const double* qrow = g.r.data().data() + i * 4;
        Vec3 gs{0, 0, 0};
        Vec4 gq{0, 0, 0, 0};
        covariance_from_backward({srow[0], srow[1], srow[2]}, {qrow[0], qrow[1], qrow[2], qrow[3]},
                                 g_cov3, gs, gq);
        if (want_s) {
          double* out = s_n->grad.data() + i * 3;
          out[0] += gs.x;
          out[1] += gs.y;
          out[2] += gs.z;
        }
        if (want_r) {
          double* out = r_n->grad.data() + i * 4;
          out[0] += gq.w;
          out[1] += gq.x;
          out[2] += gq.y;
          out[3] += gq.z;
        }
      }

      if (want_mu) {
        const double iz = 1.0 / sp.p_cam.z;
        g_pcam.x += a[0] * cam.fx * iz;
        g_pcam.y += a[1] * cam.fy * iz;
        g_pcam.z += -a[0] * cam.fx * sp.p_cam.x * iz * iz - a[1] * cam.fy * sp.p_cam.y * iz * iz;
        const Vec3 gw = Rt.mul(g_pcam);
        double* out = mu_n->grad.data() + i * 3;
        out[0] += gw.x + g_mu.x;
        out[1] += gw.y + g_mu.y;
        out[2] += gw.z + g_mu.z;
      }
    }
  }
}

// Walks every pixel and accumulates screen-space gradients into acc (one slot
// per visible splat). Tiled: tiles run in parallel into per-tile buffers that
// merge serially in tile order, so results are identical for any thread
// count. Dense: one serial pass, used by the oracle path.
void backward_accumulate(const Frame& fr, const Camera& cam, const RenderSettings& st, bool dense,
                         const double* g_img, std::vector<double>& acc) {
  const int64_t H = cam.height, W = cam.width;
  if (dense) {
    std::vector<int32_t> list(fr.splats.size());
    for (size_t k = 0; k < list.size(); ++k) list[k] = static_cast<int32_t>(k);
    std::vector<Contrib> scratch;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        pixel_backward(fr.splats, list.data(), list.size(), static_cast<double>(x),
                       static_cast<double>(y), st, g_img + (y * W + x) * 3, acc.data(), scratch);
    return;
  }
  const int64_t n_tiles = fr.tiles_x * fr.tiles_y;
  std::vector<std::vector<double>> tile_acc(static_cast<size_t>(n_tiles));
#pragma omp parallel for schedule(static)
  for (int64_t ti = 0; ti < n_tiles; ++ti) {
    const std::vector<int32_t>& list = fr.tiles[static_cast<size_t>(ti)];
    if (list.empty()) continue;
    std::vector<double>& local = tile_acc[static_cast<size_t>(ti)];
    local.assign(list.size() * kAccStride, 0.0);
    std::vector<Contrib> scratch;
    const int64_t ts = st.tile_size;
    const int64_t x0 = (ti % fr.tiles_x) * ts, x1 = std::min(x0 + ts, W);
    const int64_t y0 = (ti / fr.tiles_x) * ts, y1 = std::min(y0 + ts, H);
    for (int64_t y = y0; y < y1; ++y)
      for (int64_t x = x0; x < x1; ++x)
        pixel_backward(fr.splats, list.data(), list.size(), static_cast<double>(x),
                       static_cast<double>(y), st, g_img + (y * W + x) * 3, local.data(), scratch);
  }
  for (int64_t ti = 0; ti < n_tiles; ++ti) {
    const std::vector<int32_t>& list = fr.tiles[static_cast<size_t>(ti)];
    const std::vector<double>& local = tile_acc[static_cast<size_t>(ti)];
    for (size_t k = 0; k < list.size(); ++k) {
      double* dst = acc.data() + static_cast<size_t>(list[k]) * kAccStride;
      const double* src = local.data() + k * kAccStride;
      for (int j = 0; j < kAccStride; ++j) dst[j] += src[j];
    }
  }
}

RenderOutput render_impl(const GaussianSet& g, const Camera& cam, const RenderSettings& st,
                         bool dense) {
  check_inputs(g, cam);
  GS_CHECK(st.tile_size >= 4, "render: tile_size must be at least 4");
  GS_CHECK(st.w_max > 0.0 && st.w_max < 1.0, "render: w_max must sit inside (0,1)");
  if (!dense) {
    GS_CHECK(std::exp(-0.5 * st.sigma_cull * st.sigma_cull) <= st.eps_alpha,
             "render: sigma_cull too tight for eps_alpha; tiles could drop visible splats");
  }

  const int64_t H = cam.height, W = cam.width;
  const bool rg = tape_wants({&g.mu, &g.s, &g.r, &g.alpha, &g.sh});
  Tensor image = Tensor::zeros({H, W, 3}, rg);
  Tensor amap = Tensor::zeros({H, W}, false);

  Frame fr;
  preprocess(g, cam, st, !dense, fr);

  double* img = image.data().data();
  double* am = amap.data().data();
  const Vec3 bg = st.background;
  if (fr.splats.empty()) {
    for (int64_t p = 0; p < H * W; ++p) {
      img[p * 3 + 0] = bg.x;
      img[p * 3 + 1] = bg.y;
      img[p * 3 + 2] = bg.z;
    }
    return {image, amap};
  }

  if (dense) {
    std::vector<int32_t> list(fr.splats.size());
    for (size_t k = 0; k < list.size(); ++k) list[k] = static_cast<int32_t>(k);
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        double rgb[3];
        const double T = walk_pixel(fr.splats, list.data(), list.size(), static_cast<double>(x),
                                    static_cast<double>(y), st, rgb);
        double* px = img + (y * W + x) * 3;
        px[0] = rgb[0] + T * bg.x;
        px[1] = rgb[1] + T * bg.y;
        px[2] = rgb[2] + T * bg.z;
        am[y * W + x] = 1.0 - T;
      }
    }
  } else {
    const int64_t n_tiles = fr.tiles_x * fr.tiles_y;
#pragma omp parallel for schedule(static)
    for (int64_t ti = 0; ti < n_tiles; ++ti) {
      const std::vector<int32_t>& list = fr.tiles[static_cast<size_t>(ti)];
      const int64_t ts = st.tile_size;
      const int64_t x0 = (ti % fr.tiles_x) * ts, x1 = std::min(x0 + ts, W);
      const int64_t y0 = (ti / fr.tiles_x) * ts, y1 = std::min(y0 + ts, H);
      for (int64_t y = y0; y < y1; ++y) {
        for (int64_t x = x0; x < x1; ++x) {
          double rgb[3];
          const double T = walk_pixel(fr.splats, list.data(), list.size(), static_cast<double>(x),
                                      static_cast<double>(y), st, rgb);
          double* px = img + (y * W + x) * 3;
          px[0] = rgb[0] + T * bg.x;
          px[1] = rgb[1] + T * bg.y;
          px[2] = rgb[2] + T * bg.z;
          am[y * W + x] = 1.0 - T;
        }
      }
    }
  }

  if (rg) {
    active_tape()->record([mn = g.mu.node(), sn = g.s.node(), rn = g.r.node(),
                           an = g.alpha.node(), shn = g.sh.node(), on = image.node(), cam, st,
                           dense] {
      GaussianSet gg;
      gg.mu = Tensor::wrap(mn);
      gg.s = Tensor::wrap(sn);
      gg.r = Tensor::wrap(rn);
      gg.alpha = Tensor::wrap(an);
      gg.sh = Tensor::wrap(shn);
      Frame fb;
      preprocess(gg, cam, st, !dense, fb);
      std::vector<double> acc(fb.splats.size() * kAccStride, 0.0);
      backward_accumulate(fb, cam, st, dense, on->grad.data(), acc);
      scatter_grads(gg, cam, fb, acc);
    });
  }
  return {image, amap};
}

}  // namespace

RenderOutput render(const GaussianSet& g, const Camera& cam, const RenderSettings& st) {
  return render_impl(g, cam, st, false);
}

RenderOutput render_dense(const GaussianSet& g, const Camera& cam, const RenderSettings& st) {
  return render_impl(g, cam, st, true);
}

ScoreAggregate aggregate_scores(const GaussianSet& g, const Camera& cam, const Tensor& score_map,
                                const RenderSettings& st) {
  check_inputs(g, cam);
  const int64_t H = cam.height, W = cam.width;
  GS_CHECK(score_map.numel() == H * W, "aggregate_scores: map must have one value per pixel");
  GS_CHECK(std::exp(-0.5 * st.sigma_cull * st.sigma_cull) <= st.eps_alpha,
           "aggregate_scores: sigma_cull too tight for eps_alpha");

  const int64_t n = g.count();
  const bool rg = tape_wants({&score_map});
  Tensor weighted = Tensor::zeros({n, 1}, rg);
  Tensor weight = Tensor::zeros({n, 1}, false);
  if (n == 0) return {weighted, weight};

  Frame fr;
  preprocess(g, cam, st, true, fr);
  const double* map = score_map.data().data();
  double* num = weighted.data().data();
  double* den = weight.data().data();

  const int64_t n_tiles = fr.tiles_x * fr.tiles_y;
  std::vector<std::vector<double>> tile_acc(static_cast<size_t>(n_tiles));
#pragma omp parallel for schedule(static)
  for (int64_t ti = 0; ti < n_tiles; ++ti) {
    const std::vector<int32_t>& list = fr.tiles[static_cast<size_t>(ti)];
    if (list.empty()) continue;
    std::vector<double>& local = tile_acc[static_cast<size_t>(ti)];
    local.assign(list.size() * 2, 0.0);
    const int64_t ts = st.tile_size;
    const int64_t x0 = (ti % fr.tiles_x) * ts, x1 = std::min(x0 + ts, W);
    const int64_t y0 = (ti / fr.tiles_x) * ts, y1 = std::min(y0 + ts, H);
    for (int64_t y = y0; y < y1; ++y) {
      for (int64_t x = x0; x < x1; ++x) {
        const double sv = map[y * W + x];
        double T = 1.0;
        for (size_t k = 0; k < list.size(); ++k) {
          const Splat& sp = fr.splats[static_cast<size_t>(list[k])];
          double w;
          bool cl;
          if (!weight_at(sp, static_cast<double>(x), static_cast<double>(y), st, w, cl)) continue;
          local[k * 2 + 0] += w * T * sv;
          local[k * 2 + 1] += w * T;
          T *= 1.0 - w;
          if (T < st.transmittance_stop) break;
        }
      }
    }
  }
  for (int64_t ti = 0; ti < n_tiles; ++ti) {
    const std::vector<int32_t>& list = fr.tiles[static_cast<size_t>(ti)];
    const std::vector<double>& local = tile_acc[static_cast<size_t>(ti)];
    for (size_t k = 0; k < list.size(); ++k) {
      const int64_t id = fr.splats[static_cast<size_t>(list[k])].id;
      num[id] += local[k * 2 + 0];
      den[id] += local[k * 2 + 1];
    }
  }

  if (rg) {
    active_tape()->record([mn = g.mu.node(), sn = g.s.node(), rn = g.r.node(),
                           an = g.alpha.node(), shn = g.sh.node(), mapn = score_map.node(),
                           on = weighted.node(), cam, st] {
      if (!mapn->requires_grad) return;
      GaussianSet gg;
      gg.mu = Tensor::wrap(mn);
      gg.s = Tensor::wrap(sn);
      gg.r = Tensor::wrap(rn);
      gg.alpha = Tensor::wrap(an);
      gg.sh = Tensor::wrap(shn);
      Frame fb;
      preprocess(gg, cam, st, true, fb);
      const double* go = on->grad.data();
      double* gm = mapn->grad.data();
      const int64_t Wd = cam.width, Hd = cam.height;
      const int64_t nt = fb.tiles_x * fb.tiles_y;
#pragma omp parallel for schedule(static)
      for (int64_t ti = 0; ti < nt; ++ti) {
        const std::vector<int32_t>& list = fb.tiles[static_cast<size_t>(ti)];
        if (list.empty()) continue;
        const int64_t ts = st.tile_size;
        const int64_t x0 = (ti % fb.tiles_x) * ts, x1 = std::min(x0 + ts, Wd);
        const int64_t y0 = (ti / fb.tiles_x) * ts, y1 = std::min(y0 + ts, Hd);
        for (int64_t y = y0; y < y1; ++y) {
          for (int64_t x = x0; x < x1; ++x) {
            double gpix = 0.0;
            double T = 1.0;
            for (size_t k = 0; k < list.size(); ++k) {
              const Splat& sp = fb.splats[static_cast<size_t>(list[k])];
              double w;
              bool cl;
              if (!weight_at(sp, static_cast<double>(x), static_cast<double>(y), st, w, cl))
                continue;
              gpix += w * T * go[sp.id];
              T *= 1.0 - w;
              if (T < st.transmittance_stop) break;
            }
            gm[y * Wd + x] += gpix;
          }
        }
      }
    });
  }
  return {weighted, weight};
}

}  // namespace gs
