#pragma once

#include "gs/tensor.hpp"
#include "gs/vecmath.hpp"

namespace gs {

constexpr double kShC0 = 0.28209479177387814;
constexpr double kShC1 = 0.4886025119029199;
constexpr double kScaleMin = 0.5;
constexpr double kScaleMax = 15.0;

// A set of anisotropic 3D Gaussians. Parameter bounds are hard invariants
// enforced by validate(): scales in [0.5, 15], unit quaternions (w,x,y,z),
// opacity in [0,1], and per-channel spherical-harmonic magnitudes that decay
// with band order.
struct GaussianSet {
  Tensor mu;      // [N,3] world positions
  Tensor s;       // [N,3] principal scales
  Tensor r;       // [N,4] unit quaternions, w first
  Tensor alpha;   // [N,1] opacity
  Tensor sh;      // [N,C] colors; C=3 (band 0) or 12 (bands 0-1)
  Tensor queries; // optional [N,D] refinement queries

  int64_t count() const { return mu.defined() ? mu.dim(0) : 0; }
  int64_t sh_dim() const { return sh.dim(1); }

  // Throws on the first violated invariant. Quaternion tolerance 1e-9.
  void validate() const;

  // [N, 11+C] concatenation in (mu, s, r, alpha, sh) column order.
  // Differentiable: recorded on the tape when fields require grad.
  Tensor params() const;

  // Rows listed in idx, in order. Carries queries along when present.
  GaussianSet take(const std::vector<int64_t>& idx) const;
};

// SH column layout: [dc_r, dc_g, dc_b] then band-1 channel-major
// [r1 r2 r3, g1 g2 g3, b1 b2 b3].
int sh_degree_from_dim(int64_t c);

// Weights for (dc, b1, b2, b3) at a unit view direction; color is
// 0.5 + sum_k basis[k] * coeff[channel][k], unclamped.
inline void sh_basis_deg1(const Vec3& d, double* basis) {
  basis[0] = kShC0;
  basis[1] = -kShC1 * d.y;
  basis[2] = kShC1 * d.z;
  basis[3] = -kShC1 * d.x;
}

void eval_sh_color(const double* sh_row, int64_t c_dim, const Vec3& unit_dir, double* rgb);

}  // namespace gs
