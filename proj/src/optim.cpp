#include "gs/optim.hpp"

#include <cmath>
#include <map>

namespace gs {

Adam::Adam(NamedTensors params, double lr, double weight_decay, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (auto& [name, p] : params_) {
    GS_CHECK(p.requires_grad(), "optimizer parameter '" + name + "' does not require grad");
    m_.emplace_back(p.data().size(), 0.0);
    v_.emplace_back(p.data().size(), 0.0);
  }
}

void Adam::step() {
  t_ += 1;
  double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi].second;
    double* w = p.data().data();
    const double* g = p.grad().data();
    double* m = m_[pi].data();
    double* v = v_[pi].data();
    size_t n = p.data().size();
    for (size_t i = 0; i < n; ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      w[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * w[i]);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

NamedTensors Adam::state() const {
  NamedTensors out;
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    const Tensor& p = params_[pi].second;
    out.emplace_back("adam.m." + params_[pi].first,
                     Tensor::from_data(p.shape(), m_[pi]));
    out.emplace_back("adam.v." + params_[pi].first,
                     Tensor::from_data(p.shape(), v_[pi]));
  }
  out.emplace_back("adam.t", Tensor::scalar(static_cast<double>(t_)));
  return out;
}

void Adam::load_state(const NamedTensors& state) {
  std::map<std::string, Tensor> by_name;
  for (const auto& [name, t] : state) by_name[name] = t;
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    auto im = by_name.find("adam.m." + params_[pi].first);
    auto iv = by_name.find("adam.v." + params_[pi].first);
    GS_CHECK(im != by_name.end() && iv != by_name.end(),
             "optimizer state missing for '" + params_[pi].first + "'");
    GS_CHECK(im->second.numel() == static_cast<int64_t>(m_[pi].size()),
             "optimizer state size mismatch for '" + params_[pi].first + "'");
    m_[pi] = im->second.data();
    v_[pi] = iv->second.data();
  }
  auto it = by_name.find("adam.t");
  GS_CHECK(it != by_name.end(), "optimizer state missing step counter");
  t_ = static_cast<int64_t>(it->second.item());
}

double cosine_lr(int64_t step, int64_t total, double base_lr) {
  GS_CHECK(total > 0, "cosine_lr: total must be positive");
  if (step < 0) step = 0;
  if (step > total) step = total;
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total)));
}

}  // namespace gs
