#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gs/tensor.hpp"

namespace gs {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Adam with decoupled weight decay. Parameters keep their registration order;
// updates are elementwise, so the result is independent of thread count.
class Adam {
 public:
  Adam(NamedTensors params, double lr, double weight_decay, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t step_count() const { return t_; }

  const NamedTensors& params() const { return params_; }

  // Moment buffers and step counter as named tensors, for checkpointing.
  NamedTensors state() const;
  void load_state(const NamedTensors& state);

 private:
  NamedTensors params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, wd_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

// Cosine annealing from base_lr at step 0 to 0 at step total.
double cosine_lr(int64_t step, int64_t total, double base_lr);

}  // namespace gs
