#include "salsum/optimizer.hpp"

#include <cmath>

namespace salsum {

template <class Real>
AdamOptimizer<Real>::AdamOptimizer(std::vector<NamedParam<Real>> params,
                                   AdamHyper hyper)
    : params_(std::move(params)), hyper_(hyper) {
  slots_.reserve(params_.size());
  for (const auto& p : params_) {
    Slot s;
    s.name = p.name;
    s.m.assign(p.tensor.numel(), Real(0));
    s.v.assign(p.tensor.numel(), Real(0));
    slots_.push_back(std::move(s));
  }
}

template <class Real>
double AdamOptimizer<Real>::lr_at(int64_t t) const {
  if (hyper_.warmup_steps <= 0) return hyper_.lr;
  const double warm = std::min(1.0, double(t) / double(hyper_.warmup_steps));
  return hyper_.lr * warm;
}

template <class Real>
void AdamOptimizer<Real>::step() {
  ++t_;
  const double lr = lr_at(t_);
  const double bc1 = 1.0 - std::pow(hyper_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(hyper_.beta2, double(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    auto& value = p.raw_value();
    auto& grad = p.raw_grad();
    auto& m = slots_[i].m;
    auto& v = slots_[i].v;
    for (size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = Real(hyper_.beta1 * m[j] + (1.0 - hyper_.beta1) * g);
      v[j] = Real(hyper_.beta2 * v[j] + (1.0 - hyper_.beta2) * g * g);
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      value[j] -= Real(lr * m_hat / (std::sqrt(v_hat) + hyper_.eps));
    }
    p.clear_grad();
  }
}

template class AdamOptimizer<float>;
template class AdamOptimizer<double>;

}  // namespace salsum
