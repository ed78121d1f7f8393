#include "gs/ops.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace gs {

namespace {

bool tape_wants(std::initializer_list<const Tensor*> ins) {
  if (!active_tape()) return false;
  for (const Tensor* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

// Broadcast plan: output shape plus per-input element strides, 0 where the
// input dim is stretched. Shapes are aligned on trailing dims.
struct BcPlan {
  Shape out;
  std::vector<int64_t> sa, sb;  // strides per output dim
  bool same = false;
};

BcPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  BcPlan p;
  size_t nd = std::max(a.size(), b.size());
  p.out.resize(nd);
  p.sa.resize(nd);
  p.sb.resize(nd);
  for (size_t i = 0; i < nd; ++i) {
    size_t ia = a.size() + i, ib = b.size() + i;
    int64_t da = ia >= nd ? a[ia - nd] : 1;
    int64_t db = ib >= nd ? b[ib - nd] : 1;
    GS_CHECK(da == db || da == 1 || db == 1,
             std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                 " do not broadcast");
    p.out[i] = std::max(da, db);
  }
  int64_t ra = 1, rb = 1;
  for (size_t i = nd; i > 0; --i) {
    size_t k = i - 1;
    size_t ia = a.size() + k, ib = b.size() + k;
    int64_t da = ia >= nd ? a[ia - nd] : 1;
    int64_t db = ib >= nd ? b[ib - nd] : 1;
    p.sa[k] = da == 1 ? 0 : ra;
    p.sb[k] = db == 1 ? 0 : rb;
    ra *= da;
    rb *= db;
  }
  p.same = (a == b);
  return p;
}

// Walks the broadcast index space calling fn(out_index, a_offset, b_offset).
template <class F>
void bc_walk(const BcPlan& p, F&& fn) {
  size_t nd = p.out.size();
  int64_t total = shape_numel(p.out);
  std::vector<int64_t> ctr(nd, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t i = 0; i < total; ++i) {
    fn(i, oa, ob);
    for (size_t d = nd; d > 0; --d) {
      size_t k = d - 1;
      ctr[k]++;
      oa += p.sa[k];
      ob += p.sb[k];
      if (ctr[k] < p.out[k]) break;
      oa -= p.sa[k] * p.out[k];
      ob -= p.sb[k] * p.out[k];
      ctr[k] = 0;
    }
  }
}

constexpr int64_t kParGrain = 1 << 14;

template <class F>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F&& fwd,
                 std::function<void(const double*, const double*, const double*, double*, double*,
                                    const BcPlan&, int64_t)>
                     bwd) {
  GS_CHECK(a.defined() && b.defined(), std::string(name) + ": undefined input");
  BcPlan plan = broadcast_plan(a.shape(), b.shape(), name);
  bool rg = tape_wants({&a, &b});
  Tensor out = Tensor::zeros(plan.out, rg);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  int64_t n = out.numel();
  if (plan.same) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  } else {
    bc_walk(plan, [&](int64_t i, int64_t oa, int64_t ob) { po[i] = fwd(pa[oa], pb[ob]); });
  }
  if (rg) {
    active_tape()->record([an = a.node(), bn = b.node(), on = out.node(), plan,
                           bwd = std::move(bwd)] {
      double* ga = an->requires_grad ? an->grad.data() : nullptr;
      double* gb = bn->requires_grad ? bn->grad.data() : nullptr;
      bwd(an->data.data(), bn->data.data(), on->grad.data(), ga, gb, plan, on->numel());
    });
  }
  return out;
}

template <class FV, class FD>
Tensor unary_op(const Tensor& x, const char* name, FV&& val, FD&& dv) {
  GS_CHECK(x.defined(), std::string(name) + ": undefined input");
  bool rg = tape_wants({&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  const double* px = x.data().data();
  double* po = out.data().data();
  int64_t n = x.numel();
#pragma omp parallel for schedule(static) if (n > kParGrain)
  for (int64_t i = 0; i < n; ++i) po[i] = val(px[i]);
  if (rg) {
    active_tape()->record([xn = x.node(), on = out.node(), dv]() {
      const double* px = xn->data.data();
      const double* py = on->data.data();
      const double* go = on->grad.data();
      double* gx = xn->grad.data();
      int64_t n = xn->numel();
#pragma omp parallel for schedule(static) if (n > kParGrain)
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * dv(px[i], py[i]);
    });
  }
  return out;
}

// dA[M,K] accumulate A[M,N] * B[K,N]^T, i.e. C[i,j] += dot(A row i, B row j)
void mm_acc_nt(const double* A, const double* B, double* C, int64_t M, int64_t N, int64_t K) {
#pragma omp parallel for schedule(static) if (M * N * K > kParGrain)
  for (int64_t i = 0; i < M; ++i) {
    const double* ai = A + i * N;
    for (int64_t j = 0; j < K; ++j) {
      const double* bj = B + j * N;
      double s = 0.0;
      for (int64_t k = 0; k < N; ++k) s += ai[k] * bj[k];
      C[i * K + j] += s;
    }
  }
}

// C[M,N] accumulate A[M,K] * B[K,N]
void mm_acc_nn(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
#pragma omp parallel for schedule(static) if (M * K * N > kParGrain)
  for (int64_t i = 0; i < M; ++i) {
    double* ci = C + i * N;
    const double* ai = A + i * K;
    for (int64_t k = 0; k < K; ++k) {
      double a = ai[k];
      const double* bk = B + k * N;
      for (int64_t j = 0; j < N; ++j) ci[j] += a * bk[j];
    }
  }
}

// C[K,N] accumulate A[M,K]^T * B[M,N]
void mm_acc_tn(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
#pragma omp parallel for schedule(static) if (M * K * N > kParGrain)
  for (int64_t k = 0; k < K; ++k) {
    double* ck = C + k * N;
    for (int64_t i = 0; i < M; ++i) {
      double a = A[i * K + k];
      const double* bi = B + i * N;
      for (int64_t j = 0; j < N; ++j) ck[j] += a * bi[j];
    }
  }
}

}  // namespace

void set_num_threads(int n) {
  GS_CHECK(n >= 1, "set_num_threads: need n >= 1");
  omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

void assert_finite(const Tensor& x, const char* what) {
  for (double v : x.data())
    GS_CHECK(std::isfinite(v), std::string(what) + ": non-finite value");
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](const double*, const double*, const double* go, double* ga, double* gb,
         const BcPlan& p, int64_t n) {
        if (p.same) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
          for (int64_t i = 0; i < n; ++i) {
            if (ga) ga[i] += go[i];
            if (gb) gb[i] += go[i];
          }
        } else {
          bc_walk(p, [&](int64_t i, int64_t oa, int64_t ob) {
            if (ga) ga[oa] += go[i];
            if (gb) gb[ob] += go[i];
          });
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](const double*, const double*, const double* go, double* ga, double* gb,
         const BcPlan& p, int64_t n) {
        if (p.same) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
          for (int64_t i = 0; i < n; ++i) {
            if (ga) ga[i] += go[i];
            if (gb) gb[i] -= go[i];
          }
        } else {
          bc_walk(p, [&](int64_t i, int64_t oa, int64_t ob) {
            if (ga) ga[oa] += go[i];
            if (gb) gb[ob] -= go[i];
          });
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](const double* pa, const double* pb, const double* go, double* ga, double* gb,
         const BcPlan& p, int64_t n) {
        if (p.same) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
          for (int64_t i = 0; i < n; ++i) {
            if (ga) ga[i] += go[i] * pb[i];
            if (gb) gb[i] += go[i] * pa[i];
          }
        } else {
          bc_walk(p, [&](int64_t i, int64_t oa, int64_t ob) {
            if (ga) ga[oa] += go[i] * pb[ob];
            if (gb) gb[ob] += go[i] * pa[oa];
          });
        }
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  if (strict_mode()) {
    for (double v : b.data()) GS_CHECK(v != 0.0, "div: division by zero");
  }
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](const double* pa, const double* pb, const double* go, double* ga, double* gb,
         const BcPlan& p, int64_t n) {
        if (p.same) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
          for (int64_t i = 0; i < n; ++i) {
            double inv = 1.0 / pb[i];
            if (ga) ga[i] += go[i] * inv;
            if (gb) gb[i] -= go[i] * pa[i] * inv * inv;
          }
        } else {
          bc_walk(p, [&](int64_t i, int64_t oa, int64_t ob) {
            double inv = 1.0 / pb[ob];
            if (ga) ga[oa] += go[i] * inv;
            if (gb) gb[ob] -= go[i] * pa[oa] * inv * inv;
          });
        }
      });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); },
      [](double v, double) {
        double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
        return cdf + v * pdf;
      });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  if (strict_mode()) {
    for (double v : x.data()) GS_CHECK(v > 0.0, "log: non-positive input");
  }
  return unary_op(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      x, "softplus", [](double v) { return std::log1p(std::exp(-std::fabs(v))) + std::max(v, 0.0); },
      [](double v, double) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sqrt(const Tensor& x) {
  if (strict_mode()) {
    for (double v : x.data()) GS_CHECK(v >= 0.0, "sqrt: negative input");
  }
  return unary_op(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  GS_CHECK(lo <= hi, "clamp: lo > hi");
  return unary_op(
      x, "clamp", [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor affine(const Tensor& x, double scale_c, double shift_c) {
  return unary_op(
      x, "affine", [scale_c, shift_c](double v) { return v * scale_c + shift_c; },
      [scale_c](double, double) { return scale_c; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  GS_CHECK(a.ndim() == 2 && b.ndim() == 2, "matmul: rank-2 inputs required");
  GS_CHECK(a.dim(1) == b.dim(0), "matmul: inner dims " + shape_str(a.shape()) + " x " +
                                     shape_str(b.shape()) + " mismatch");
  int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  bool rg = tape_wants({&a, &b});
  Tensor out = Tensor::zeros({M, N}, rg);
  mm_acc_nn(a.data().data(), b.data().data(), out.data().data(), M, K, N);
  if (rg) {
    active_tape()->record([an = a.node(), bn = b.node(), on = out.node(), M, K, N] {
      if (an->requires_grad)
        mm_acc_nt(on->grad.data(), bn->data.data(), an->grad.data(), M, N, K);
      if (bn->requires_grad)
        mm_acc_tn(an->data.data(), on->grad.data(), bn->grad.data(), M, K, N);
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  GS_CHECK(x.ndim() == 2, "transpose: rank-2 input required");
  int64_t R = x.dim(0), C = x.dim(1);
  bool rg = tape_wants({&x});
  Tensor out = Tensor::zeros({C, R}, rg);
  const double* px = x.data().data();
  double* po = out.data().data();
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) po[c * R + r] = px[r * C + c];
  if (rg) {
    active_tape()->record([xn = x.node(), on = out.node(), R, C] {
      const double* go = on->grad.data();
      double* gx = xn->grad.data();
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) gx[r * C + c] += go[c * R + r];
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride) {
  GS_CHECK(x.ndim() == 3, "conv2d: input must be [C,H,W]");
  GS_CHECK(w.ndim() == 4 && w.dim(2) == 3 && w.dim(3) == 3, "conv2d: weight must be [Co,Ci,3,3]");
  GS_CHECK(w.dim(1) == x.dim(0), "conv2d: channel mismatch");
  GS_CHECK(bias.ndim() == 1 && bias.dim(0) == w.dim(0), "conv2d: bias must be [Co]");
  GS_CHECK(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  int64_t Ci = x.dim(0), H = x.dim(1), W = x.dim(2), Co = w.dim(0);
  int64_t Ho = (H - 1) / stride + 1, Wo = (W - 1) / stride + 1;
  bool rg = tape_wants({&x, &w, &bias});
  Tensor out = Tensor::zeros({Co, Ho, Wo}, rg);
  const double* px = x.data().data();
  const double* pw = w.data().data();
  const double* pb = bias.data().data();
  double* po = out.data().data();
#pragma omp parallel for schedule(static) if (Co * Ho * Wo * Ci > kParGrain)
  for (int64_t co = 0; co < Co; ++co) {
    for (int64_t ho = 0; ho < Ho; ++ho) {
      for (int64_t wo = 0; wo < Wo; ++wo) {
        double acc = pb[co];
        for (int64_t ci = 0; ci < Ci; ++ci) {
          const double* xc = px + ci * H * W;
          const double* wc = pw + ((co * Ci + ci) * 9);
          for (int64_t kh = 0; kh < 3; ++kh) {
            int64_t h = ho * stride + kh - 1;
            if (h < 0 || h >= H) continue;
            for (int64_t kw = 0; kw < 3; ++kw) {
              int64_t ww = wo * stride + kw - 1;
              if (ww < 0 || ww >= W) continue;
              acc += xc[h * W + ww] * wc[kh * 3 + kw];
            }
          }
        }
        po[(co * Ho + ho) * Wo + wo] = acc;
      }
    }
  }
  if (rg) {
    active_tape()->record([xn = x.node(), wn = w.node(), bn = bias.node(), on = out.node(),
                           stride, Ci, H, W, Co, Ho, Wo] {
      const double* go = on->grad.data();
      if (xn->requires_grad) {
        double* gx = xn->grad.data();
        const double* pw = wn->data.data();
#pragma omp parallel for schedule(static) if (Ci * Co * Ho * Wo > kParGrain)
        for (int64_t ci = 0; ci < Ci; ++ci) {
          double* gxc = gx + ci * H * W;
          for (int64_t co = 0; co < Co; ++co) {
            const double* wc = pw + ((co * Ci + ci) * 9);
            const double* goc = go + co * Ho * Wo;
            for (int64_t ho = 0; ho < Ho; ++ho) {
              for (int64_t wo = 0; wo < Wo; ++wo) {
                double g = goc[ho * Wo + wo];
                for (int64_t kh = 0; kh < 3; ++kh) {
                  int64_t h = ho * stride + kh - 1;
                  if (h < 0 || h >= H) continue;
                  for (int64_t kw = 0; kw < 3; ++kw) {
                    int64_t ww = wo * stride + kw - 1;
                    if (ww < 0 || ww >= W) continue;
                    gxc[h * W + ww] += g * wc[kh * 3 + kw];
                  }
                }
              }
            }
          }
        }
      }
      if (wn->requires_grad) {
        double* gw = wn->grad.data();
        const double* px = xn->data.data();
#pragma omp parallel for schedule(static) if (Co * Ci * Ho * Wo > kParGrain)
        for (int64_t co = 0; co < Co; ++co) {
          const double* goc = go + co * Ho * Wo;
          for (int64_t ci = 0; ci < Ci; ++ci) {
            const double* xc = px + ci * H * W;
            double* gwc = gw + ((co * Ci + ci) * 9);
            for (int64_t kh = 0; kh < 3; ++kh) {
              for (int64_t kw = 0; kw < 3; ++kw) {
                double acc = 0.0;
                for (int64_t ho = 0; ho < Ho; ++ho) {
                  int64_t h = ho * stride + kh - 1;
                  if (h < 0 || h >= H) continue;
                  for (int64_t wo = 0; wo < Wo; ++wo) {
                    int64_t ww = wo * stride + kw - 1;
                    if (ww < 0 || ww >= W) continue;
                    acc += goc[ho * Wo + wo] * xc[h * W + ww];
                  }
                }
                gwc[kh * 3 + kw] += acc;
              }
            }
          }
        }
      }
      if (bn->requires_grad) {
        double* gb = bn->grad.data();
        for (int64_t co = 0; co < Co; ++co) {
          double acc = 0.0;
          const double* goc = go + co * Ho * Wo;
          for (int64_t i = 0; i < Ho * Wo; ++i) acc += goc[i];
          gb[co] += acc;
        }
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int64_t axis) {
  int64_t nd = x.ndim();
  if (axis < 0) axis += nd;
  GS_CHECK(axis >= 0 && axis < nd, "softmax: axis out of range");
  const Shape& s = x.shape();
  int64_t outer = 1, inner = 1, n = s[static_cast<size_t>(axis)];
  for (int64_t i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (int64_t i = axis + 1; i < nd; ++i) inner *= s[static_cast<size_t>(i)];
  bool rg = tape_wants({&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  const double* px = x.data().data();
  double* po = out.data().data();
#pragma omp parallel for schedule(static) collapse(2) if (outer * inner * n > kParGrain)
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      int64_t base = o * n * inner + in;
      double mx = px[base];
      for (int64_t k = 1; k < n; ++k) mx = std::max(mx, px[base + k * inner]);
      double sum = 0.0;
      for (int64_t k = 0; k < n; ++k) {
        double e = std::exp(px[base + k * inner] - mx);
        po[base + k * inner] = e;
        sum += e;
      }
      double inv = 1.0 / sum;
      for (int64_t k = 0; k < n; ++k) po[base + k * inner] *= inv;
    }
  }
  if (rg) {
    active_tape()->record([xn = x.node(), on = out.node(), outer, inner, n] {
      const double* py = on->data.data();
      const double* go = on->grad.data();
      double* gx = xn->grad.data();
#pragma omp parallel for schedule(static) collapse(2) if (outer * inner * n > kParGrain)
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
          int64_t base = o * n * inner + in;
          double dot = 0.0;
          for (int64_t k = 0; k < n; ++k) dot += go[base + k * inner] * py[base + k * inner];
          for (int64_t k = 0; k < n; ++k) {
            int64_t idx = base + k * inner;
            gx[idx] += py[idx] * (go[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  int64_t nd = x.ndim();
  GS_CHECK(nd >= 1, "layernorm: rank >= 1 required");
  int64_t d = x.dim(nd - 1);
  GS_CHECK(gain.ndim() == 1 && gain.dim(0) == d && bias.ndim() == 1 && bias.dim(0) == d,
           "layernorm: gain/bias must be [last_dim]");
  int64_t rows = x.numel() / d;
  bool rg = tape_wants({&x, &gain, &bias});
  Tensor out = Tensor::zeros(x.shape(), rg);
  const double* px = x.data().data();
  const double* pg = gain.data().data();
  const double* pb = bias.data().data();
  double* po = out.data().data();
#pragma omp parallel for schedule(static) if (rows * d > kParGrain)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = px + r * d;
    double* yr = po + r * d;
    double mu = 0.0;
    for (int64_t k = 0; k < d; ++k) mu += xr[k];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t k = 0; k < d; ++k) {
      double c = xr[k] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t k = 0; k < d; ++k) yr[k] = (xr[k] - mu) * inv * pg[k] + pb[k];
  }
  if (rg) {
    active_tape()->record([xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(),
                           rows, d, eps] {
      const double* px = xn->data.data();
      const double* pg = gn->data.data();
      const double* go = on->grad.data();
      std::vector<double> gg_acc, gb_acc;
      if (gn->requires_grad) gg_acc.assign(static_cast<size_t>(d), 0.0);
      if (bn->requires_grad) gb_acc.assign(static_cast<size_t>(d), 0.0);
      for (int64_t r = 0; r < rows; ++r) {
        const double* xr = px + r * d;
        const double* gor = go + r * d;
        double mu = 0.0;
        for (int64_t k = 0; k < d; ++k) mu += xr[k];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t k = 0; k < d; ++k) {
          double c = xr[k] - mu;
          var += c * c;
        }
        var /= static_cast<double>(d);
        double inv = 1.0 / std::sqrt(var + eps);
        if (xn->requires_grad) {
          double* gxr = xn->grad.data() + r * d;
          double m1 = 0.0, m2 = 0.0;
          for (int64_t k = 0; k < d; ++k) {
            double xh = (xr[k] - mu) * inv;
            double gy = gor[k] * pg[k];
            m1 += gy;
            m2 += gy * xh;
          }
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          for (int64_t k = 0; k < d; ++k) {
            double xh = (xr[k] - mu) * inv;
            gxr[k] += (gor[k] * pg[k] - m1 - xh * m2) * inv;
          }
        }
        for (int64_t k = 0; k < d; ++k) {
          double xh = (xr[k] - mu) * inv;
          if (!gg_acc.empty()) gg_acc[static_cast<size_t>(k)] += gor[k] * xh;
          if (!gb_acc.empty()) gb_acc[static_cast<size_t>(k)] += gor[k];
        }
      }
      if (!gg_acc.empty()) {
        double* gg = gn->grad.data();
        for (int64_t k = 0; k < d; ++k) gg[k] += gg_acc[static_cast<size_t>(k)];
      }
      if (!gb_acc.empty()) {
        double* gb = bn->grad.data();
        for (int64_t k = 0; k < d; ++k) gb[k] += gb_acc[static_cast<size_t>(k)];
      }
    });
  }
  return out;
}

Tensor bilinear_sample(const Tensor& f, const Tensor& pts) {
  GS_CHECK(f.ndim() == 3, "bilinear_sample: features must be [C,H,W]");
  GS_CHECK(pts.ndim() == 2 && pts.dim(1) == 2, "bilinear_sample: points must be [P,2]");
  int64_t C = f.dim(0), H = f.dim(1), W = f.dim(2), P = pts.dim(0);
  bool rg = tape_wants({&f, &pts});
  Tensor out = Tensor::zeros({P, C}, rg);
  const double* pf = f.data().data();
  const double* pp = pts.data().data();
  double* po = out.data().data();
#pragma omp parallel for schedule(static) if (P * C > kParGrain)
  for (int64_t p = 0; p < P; ++p) {
    double x = pp[p * 2 + 0], y = pp[p * 2 + 1];
    double x0 = std::floor(x), y0 = std::floor(y);
    double dx = x - x0, dy = y - y0;
    int64_t ix = static_cast<int64_t>(x0), iy = static_cast<int64_t>(y0);
    double* orow = po + p * C;
    for (int cy = 0; cy < 2; ++cy) {
      int64_t yy = iy + cy;
      if (yy < 0 || yy >= H) continue;
      double wy = cy ? dy : 1.0 - dy;
      if (wy == 0.0) continue;
      for (int cx = 0; cx < 2; ++cx) {
        int64_t xx = ix + cx;
        if (xx < 0 || xx >= W) continue;
        double wxy = wy * (cx ? dx : 1.0 - dx);
        if (wxy == 0.0) continue;
        const double* fc = pf + yy * W + xx;
        for (int64_t c = 0; c < C; ++c) orow[c] += wxy * fc[c * H * W];
      }
    }
  }
  if (rg) {
    active_tape()->record([fn = f.node(), pn = pts.node(), on = out.node(), C, H, W, P] {
      const double* pf = fn->data.data();
      const double* pp = pn->data.data();
      const double* go = on->grad.data();
      if (fn->requires_grad) {
        double* gf = fn->grad.data();
        for (int64_t p = 0; p < P; ++p) {
          double x = pp[p * 2 + 0], y = pp[p * 2 + 1];
          double x0 = std::floor(x), y0 = std::floor(y);
          double dx = x - x0, dy = y - y0;
          int64_t ix = static_cast<int64_t>(x0), iy = static_cast<int64_t>(y0);
          const double* gor = go + p * C;
          for (int cy = 0; cy < 2; ++cy) {
            int64_t yy = iy + cy;
            if (yy < 0 || yy >= H) continue;
            double wy = cy ? dy : 1.0 - dy;
            for (int cx = 0; cx < 2; ++cx) {
              int64_t xx = ix + cx;
              if (xx < 0 || xx >= W) continue;
              double wxy = wy * (cx ? dx : 1.0 - dx);
              if (wxy == 0.0) continue;
              double* fc = gf + yy * W + xx;
              for (int64_t c = 0; c < C; ++c) fc[c * H * W] += wxy * gor[c];
            }
          }
        }
      }
      if (pn->requires_grad) {
        double* gp = pn->grad.data();
#pragma omp parallel for schedule(static) if (P * C > kParGrain)
        for (int64_t p = 0; p < P; ++p) {
          double x = pp[p * 2 + 0], y = pp[p * 2 + 1];
          double x0 = std::floor(x), y0 = std::floor(y);
          double dx = x - x0, dy = y - y0;
          int64_t ix = static_cast<int64_t>(x0), iy = static_cast<int64_t>(y0);
          const double* gor = go + p * C;
          double gx = 0.0, gy = 0.0;
          for (int cy = 0; cy < 2; ++cy) {
            int64_t yy = iy + cy;
            if (yy < 0 || yy >= H) continue;
            double wy = cy ? dy : 1.0 - dy;
            double dwy = cy ? 1.0 : -1.0;
            for (int cx = 0; cx < 2; ++cx) {
              int64_t xx = ix + cx;
              if (xx < 0 || xx >= W) continue;
              double wx = cx ? dx : 1.0 - dx;
              double dwx = cx ? 1.0 : -1.0;
              const double* fc = pf + yy * W + xx;
              double dot = 0.0;
              for (int64_t c = 0; c < C; ++c) dot += gor[c] * fc[c * H * W];
              gx += dwx * wy * dot;
              gy += wx * dwy * dot;
            }
          }
          gp[p * 2 + 0] += gx;
          gp[p * 2 + 1] += gy;
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  bool rg = tape_wants({&x});
  Tensor out = Tensor::zeros({1}, rg);
  const double* px = x.data().data();
  double acc = 0.0;
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  out.data()[0] = acc;
  if (rg) {
    active_tape()->record([xn = x.node(), on = out.node()] {
      double g = on->grad[0];
      double* gx = xn->grad.data();
      int64_t n = xn->numel();
#pragma omp parallel for schedule(static) if (n > kParGrain)
      for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, int64_t axis, bool keepdim) {
  GS_CHECK(x.ndim() == 2, "sum_axis: rank-2 input required");
  GS_CHECK(axis == 0 || axis == 1, "sum_axis: axis must be 0 or 1");
  int64_t R = x.dim(0), C = x.dim(1);
  bool rg = tape_wants({&x});
  Shape os = axis == 0 ? (keepdim ? Shape{1, C} : Shape{C}) : (keepdim ? Shape{R, 1} : Shape{R});
  Tensor out = Tensor::zeros(os, rg);
  const double* px = x.data().data();
  double* po = out.data().data();
  if (axis == 0) {
    for (int64_t r = 0; r < R; ++r)
      for (int64_t c = 0; c < C; ++c) po[c] += px[r * C + c];
  } else {
#pragma omp parallel for schedule(static) if (R * C > kParGrain)
    for (int64_t r = 0; r < R; ++r) {
      double acc = 0.0;
      for (int64_t c = 0; c < C; ++c) acc += px[r * C + c];
      po[r] = acc;
    }
  }
  if (rg) {
    active_tape()->record([xn = x.node(), on = out.node(), R, C, axis] {
      const double* go = on->grad.data();
      double* gx = xn->grad.data();
#pragma omp parallel for schedule(static) if (R * C > kParGrain)
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) gx[r * C + c] += axis == 0 ? go[c] : go[r];
    });
  }
  return out;
}

Tensor mean_axis(const Tensor& x, int64_t axis, bool keepdim) {
  int64_t n = axis == 0 ? x.dim(0) : x.dim(1);
  return scale(sum_axis(x, axis, keepdim), 1.0 / static_cast<double>(n));
}

Tensor reshape(const Tensor& x, Shape shape) {
  GS_CHECK(shape_numel(shape) == x.numel(),
           "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes numel");
  bool rg = tape_wants({&x});
  Tensor out = Tensor::zeros(std::move(shape), rg);
  out.data() = x.data();
  if (rg) {
    active_tape()->record([xn = x.node(), on = out.node()] {
      const double* go = on->grad.data();
      double* gx = xn->grad.data();
      int64_t n = xn->numel();
#pragma omp parallel for schedule(static) if (n > kParGrain)
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) {
  GS_CHECK(x.ndim() == 2, "slice_cols: rank-2 input required");
  int64_t R = x.dim(0), C = x.dim(1);
  GS_CHECK(0 <= c0 && c0 < c1 && c1 <= C, "slice_cols: bad range");
  int64_t W = c1 - c0;
  bool rg = tape_wants({&x});
  Tensor out = Tensor::zeros({R, W}, rg);
  const double* px = x.data().data();
  double* po = out.data().data();
#pragma omp parallel for schedule(static) if (R * W > kParGrain)
  for (int64_t r = 0; r < R; ++r)
    std::memcpy(po + r * W, px + r * C + c0, static_cast<size_t>(W) * 8);
  if (rg) {
    active_tape()->record([xn = x.node(), on = out.node(), R, C, W, c0] {
      const double* go = on->grad.data();
      double* gx = xn->grad.data();
#pragma omp parallel for schedule(static) if (R * W > kParGrain)
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < W; ++c) gx[r * C + c0 + c] += go[r * W + c];
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, int64_t axis) {
  GS_CHECK(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  bool rg = tape_wants({&a, &b});
  if (axis == 0) {
    GS_CHECK(a.ndim() == b.ndim() && a.ndim() >= 1, "concat: rank mismatch");
    for (int64_t i = 1; i < a.ndim(); ++i)
      GS_CHECK(a.dim(i) == b.dim(i), "concat: trailing dims differ");
    Shape os = a.shape();
    os[0] += b.dim(0);
    Tensor out = Tensor::zeros(os, rg);
    std::memcpy(out.data().data(), a.data().data(), a.data().size() * 8);
    std::memcpy(out.data().data() + a.numel(), b.data().data(), b.data().size() * 8);
    if (rg) {
      active_tape()->record([an = a.node(), bn = b.node(), on = out.node()] {
        const double* go = on->grad.data();
        if (an->requires_grad) {
          double* ga = an->grad.data();
          for (int64_t i = 0; i < an->numel(); ++i) ga[i] += go[i];
        }
        if (bn->requires_grad) {
          double* gb = bn->grad.data();
          const double* go2 = go + an->numel();
          for (int64_t i = 0; i < bn->numel(); ++i) gb[i] += go2[i];
        }
      });
    }
    return out;
  }
  GS_CHECK(a.ndim() == 2 && b.ndim() == 2 && a.dim(0) == b.dim(0), "concat axis 1: rank-2, equal rows");
  int64_t R = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  Tensor out = Tensor::zeros({R, Ca + Cb}, rg);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (int64_t r = 0; r < R; ++r) {
    std::memcpy(po + r * (Ca + Cb), pa + r * Ca, static_cast<size_t>(Ca) * 8);
    std::memcpy(po + r * (Ca + Cb) + Ca, pb + r * Cb, static_cast<size_t>(Cb) * 8);
  }
  if (rg) {
    active_tape()->record([an = a.node(), bn = b.node(), on = out.node(), R, Ca, Cb] {
      const double* go = on->grad.data();
      for (int64_t r = 0; r < R; ++r) {
        if (an->requires_grad) {
          double* ga = an->grad.data() + r * Ca;
          const double* g = go + r * (Ca + Cb);
          for (int64_t c = 0; c < Ca; ++c) ga[c] += g[c];
        }
        if (bn->requires_grad) {
          double* gb = bn->grad.data() + r * Cb;
          const double* g = go + r * (Ca + Cb) + Ca;
          for (int64_t c = 0; c < Cb; ++c) gb[c] += g[c];
        }
      }
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  GS_CHECK(!xs.empty(), "concat_rows: empty list");
  Tensor out = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) out = concat(out, xs[i], 0);
  return out;
}

Tensor gather_rows(const Tensor& x, std::vector<int64_t> idx) {
  GS_CHECK(x.ndim() >= 2, "gather_rows: rank >= 2 required");
  int64_t R = x.dim(0);
  int64_t row = x.numel() / R;
  for (int64_t i : idx) GS_CHECK(i >= 0 && i < R, "gather_rows: index out of range");
  Shape os = x.shape();
  os[0] = static_cast<int64_t>(idx.size());
  GS_CHECK(os[0] > 0, "gather_rows: empty index list");
  bool rg = tape_wants({&x});
  Tensor out = Tensor::zeros(os, rg);
  const double* px = x.data().data();
  double* po = out.data().data();
  int64_t n = os[0];
#pragma omp parallel for schedule(static) if (n * row > kParGrain)
  for (int64_t i = 0; i < n; ++i)
    std::memcpy(po + i * row, px + idx[static_cast<size_t>(i)] * row, static_cast<size_t>(row) * 8);
  if (rg) {
    active_tape()->record([xn = x.node(), on = out.node(), idx = std::move(idx), row] {
      const double* go = on->grad.data();
      double* gx = xn->grad.data();
      for (size_t i = 0; i < idx.size(); ++i) {
        double* dst = gx + idx[i] * row;
        const double* src = go + static_cast<int64_t>(i) * row;
        for (int64_t k = 0; k < row; ++k) dst[k] += src[k];
      }
    });
  }
  return out;
}

Tensor detach(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), false);
  out.data() = x.data();
  return out;
}

}  // namespace gs
