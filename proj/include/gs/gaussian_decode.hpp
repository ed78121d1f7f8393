#pragma once

// Shared bounded decoding of Gaussian parameter updates. Both the splitting
// network and the refiner's decode head emit one unconstrained row per
// Gaussian; decode_delta maps those rows onto a base set so that every output
// satisfies the parameter-range invariants *by construction*:
//   mu    = base.mu + tanh(h_mu) * base.s          (stays inside the parent footprint)
//   s     = lo + (hi-lo) * sigmoid(h_s + logit((base.s-lo)/(hi-lo)))
//   r     = normalize(base.r + h_r)
//   alpha = sigmoid(h_a + logit(base.alpha))
//   dc    = base.dc + h_dc (free), band1 = |dc| * tanh(h_b1 + atanh(band1/|dc|))
// A zero head row therefore reproduces the base Gaussian exactly (up to the
// tiny interior clamps applied when a base value sits on a bound).

#include "gs/gaussians.hpp"
#include "gs/tensor.hpp"

namespace gs {

// head: [N, 11+C] columns (mu 3 | s 3 | r 4 | alpha 1 | sh C) matching
// GaussianSet::params() order. Queries are carried through from the base.
GaussianSet decode_delta(const GaussianSet& base, const Tensor& head);

}  // namespace gs
