#include "gs/gaussian_decode.hpp"

#include "gs/ops.hpp"

namespace gs {
namespace {

constexpr double kInterior = 1e-9;   // keeps logit/atanh of boundary bases finite
constexpr double kRatioCap = 1e-6;   // band-1/band-0 ratio kept off +-1
constexpr double kDcFloor = 1e-12;   // band-0 magnitude floor for the ratio only

// log(x / (1-x)) for x already clamped inside (0,1).
Tensor logit(const Tensor& x) { return sub(log(x), log(sub(Tensor::full({1}, 1.0), x))); }

}  // namespace

GaussianSet decode_delta(const GaussianSet& base, const Tensor& head) {
  const int64_t n = base.count();
  const int64_t c_dim = base.sh_dim();
  GS_CHECK((head.ndim() == 2 && head.dim(0) == n && head.dim(1) == 11 + c_dim),
           "decode_delta: head must be [N, 11+C]");

  GaussianSet out;
  out.mu = add(base.mu, mul(tanh(slice_cols(head, 0, 3)), base.s));

  const double lo = kScaleMin, hi = kScaleMax;
  Tensor s_frac = clamp(affine(base.s, 1.0 / (hi - lo), -lo / (hi - lo)), kInterior,
                        1.0 - kInterior);
  out.s = affine(sigmoid(add(slice_cols(head, 3, 6), logit(s_frac))), hi - lo, lo);

  Tensor q = add(base.r, slice_cols(head, 6, 10));
  Tensor q_norm = sqrt(clamp(sum_axis(mul(q, q), 1, true), 1e-18, 1e18));
  out.r = div(q, q_norm);

  Tensor a_base = clamp(base.alpha, kInterior, 1.0 - kInterior);
  out.alpha = sigmoid(add(slice_cols(head, 10, 11), logit(a_base)));

  if (c_dim == 3) {
    out.sh = add(base.sh, slice_cols(head, 11, 14));
  } else {
    Tensor dc = add(slice_cols(base.sh, 0, 3), slice_cols(head, 11, 14));
    Tensor dc_abs = abs(dc);
    Tensor dc_abs_base = clamp(abs(slice_cols(base.sh, 0, 3)), kDcFloor, 1e18);
    Tensor sh_out = dc;
    for (int64_t ch = 0; ch < 3; ++ch) {
      Tensor b1_base = slice_cols(base.sh, 3 + ch * 3, 6 + ch * 3);
      Tensor rho = clamp(div(b1_base, slice_cols(dc_abs_base, ch, ch + 1)), -1.0 + kRatioCap,
                         1.0 - kRatioCap);
      // atanh(rho) = 0.5 * log((1+rho)/(1-rho))
      Tensor at = scale(sub(log(addc(rho, 1.0)), log(sub(Tensor::full({1}, 1.0), rho))), 0.5);
      Tensor delta = slice_cols(head, 14 + ch * 3, 17 + ch * 3);
      Tensor b1 = mul(slice_cols(dc_abs, ch, ch + 1), tanh(add(delta, at)));
      sh_out = concat(sh_out, b1, 1);
    }
    out.sh = sh_out;
  }

  out.queries = base.queries;
  return out;
}

}  // namespace gs
