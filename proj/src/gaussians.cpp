#include "gs/gaussians.hpp"

#include <cmath>

#include "gs/ops.hpp"

namespace gs {

int sh_degree_from_dim(int64_t c) {
  if (c == 3) return 0;
  if (c == 12) return 1;
  fail("unsupported sh dimension " + std::to_string(c) + " (expected 3 or 12)");
}

void GaussianSet::validate() const {
  int64_t n = count();
  GS_CHECK(mu.defined() && mu.ndim() == 2 && mu.dim(1) == 3, "gaussians: mu must be [N,3]");
  GS_CHECK(s.defined() && (s.shape() == Shape{n, 3}), "gaussians: s must be [N,3]");
  GS_CHECK(r.defined() && (r.shape() == Shape{n, 4}), "gaussians: r must be [N,4]");
  GS_CHECK(alpha.defined() && (alpha.shape() == Shape{n, 1}), "gaussians: alpha must be [N,1]");
  GS_CHECK(sh.defined() && sh.ndim() == 2 && sh.dim(0) == n, "gaussians: sh must be [N,C]");
  int64_t c_dim = sh.dim(1);
  sh_degree_from_dim(c_dim);
  const double* ps = s.data().data();
  const double* pr = r.data().data();
  const double* pa = alpha.data().data();
  const double* pc = sh.data().data();
  const double* pm = mu.data().data();
  for (int64_t i = 0; i < n * 3; ++i)
    GS_CHECK(std::isfinite(pm[i]), "gaussians: non-finite position");
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < 3; ++k) {
      double v = ps[i * 3 + k];
      GS_CHECK(std::isfinite(v) && v >= kScaleMin && v <= kScaleMax,
               "gaussians: scale out of [" + std::to_string(kScaleMin) + ", " +
                   std::to_string(kScaleMax) + "] at row " + std::to_string(i));
    }
    double nq = std::sqrt(pr[i * 4] * pr[i * 4] + pr[i * 4 + 1] * pr[i * 4 + 1] +
                          pr[i * 4 + 2] * pr[i * 4 + 2] + pr[i * 4 + 3] * pr[i * 4 + 3]);
    GS_CHECK(std::fabs(nq - 1.0) < 1e-9,
             "gaussians: quaternion not unit at row " + std::to_string(i));
    GS_CHECK(pa[i] >= 0.0 && pa[i] <= 1.0,
             "gaussians: opacity out of [0,1] at row " + std::to_string(i));
    if (c_dim == 12) {
      for (int ch = 0; ch < 3; ++ch) {
        double dc = std::fabs(pc[i * 12 + ch]);
        for (int k = 0; k < 3; ++k) {
          double b1 = std::fabs(pc[i * 12 + 3 + ch * 3 + k]);
          GS_CHECK(b1 <= dc + 1e-12,
                   "gaussians: sh band 1 exceeds band 0 at row " + std::to_string(i));
        }
      }
    }
    for (int64_t k = 0; k < c_dim; ++k)
      GS_CHECK(std::isfinite(pc[i * c_dim + k]), "gaussians: non-finite sh");
  }
}

Tensor GaussianSet::params() const {
  Tensor out = concat(mu, s, 1);
  out = concat(out, r, 1);
  out = concat(out, alpha, 1);
  return concat(out, sh, 1);
}

GaussianSet GaussianSet::take(const std::vector<int64_t>& idx) const {
  GaussianSet out;
  out.mu = gather_rows(mu, idx);
  out.s = gather_rows(s, idx);
  out.r = gather_rows(r, idx);
  out.alpha = gather_rows(alpha, idx);
  out.sh = gather_rows(sh, idx);
  if (queries.defined()) out.queries = gather_rows(queries, idx);
  return out;
}

void eval_sh_color(const double* sh_row, int64_t c_dim, const Vec3& unit_dir, double* rgb) {
  if (c_dim == 3) {
    for (int ch = 0; ch < 3; ++ch) rgb[ch] = 0.5 + kShC0 * sh_row[ch];
    return;
  }
  GS_CHECK(c_dim == 12, "eval_sh_color: unsupported sh dimension");
  double basis[4];
  sh_basis_deg1(unit_dir, basis);
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0.5 + basis[0] * sh_row[ch];
    for (int k = 0; k < 3; ++k) acc += basis[1 + k] * sh_row[3 + ch * 3 + k];
    rgb[ch] = acc;
  }
}

}  // namespace gs
