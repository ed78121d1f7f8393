#pragma once

#include <functional>
#include <vector>

#include "gs/ops.hpp"
#include "gs/rng.hpp"
#include "gs/tensor.hpp"

namespace gstest {

inline gs::Tensor rand_tensor(gs::Rng& rng, gs::Shape shape, double lo, double hi,
                              bool requires_grad = true) {
  gs::Tensor t = gs::Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Max gradient error over every element of every leaf, comparing the tape''s
// analytic gradient against central finite differences of fn. fn must rebuild
// its graph from the leaves' current data on each call. Error is
// |analytic - fd| / max(|analytic|, |fd|, 1), so small gradients are measured
// absolutely and large ones relatively.
inline double gradcheck(const std::vector<gs::Tensor>& leaves,
                        const std::function<gs::Tensor()>& fn, double step = 1e-5) {
  gs::Tape tape;
  std::vector<std::vector<double>> analytic;
  {
    gs::TapeScope scope(tape);
    for (const gs::Tensor& l : leaves) const_cast<gs::Tensor&>(l).zero_grad();
    gs::Tensor loss = fn();
    tape.backward(loss);
  }
  for (const gs::Tensor& l : leaves) analytic.push_back(l.grad());

  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    gs::Tensor leaf = leaves[li];
    for (size_t i = 0; i < leaf.data().size(); ++i) {
      double saved = leaf.data()[i];
      leaf.data()[i] = saved + step;
      double up = fn().item();
      leaf.data()[i] = saved - step;
      double dn = fn().item();
      leaf.data()[i] = saved;
      double fd = (up - dn) / (2.0 * step);
      double a = analytic[li][i];
      double err = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1.0});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Random fixed projection so every output element influences the scalar.
inline gs::Tensor project_to_scalar(const gs::Tensor& y, uint64_t seed) {
  gs::Rng rng(seed);
  gs::Tensor w = gs::Tensor::zeros(y.shape());
  for (double& v : w.data()) v = rng.uniform(-1.0, 1.0);
  return gs::sum(gs::mul(y, w));
}

}  // namespace gstest
