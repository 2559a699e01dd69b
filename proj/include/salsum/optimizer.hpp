#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "salsum/model.hpp"

namespace salsum {

struct AdamHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t warmup_steps = 100;  // linear warmup from 0
};

// Adam with linear warmup. step() consumes the gradients produced by the
// latest backward() and zeroes them; parameters without a gradient buffer
// are left untouched.
template <class Real>
class AdamOptimizer {
 public:
  struct Slot {
    std::string name;
    std::vector<Real> m, v;
  };

  explicit AdamOptimizer(std::vector<NamedParam<Real>> params,
                         AdamHyper hyper = {});

  void step();

  int64_t steps_taken() const { return t_; }
  void set_steps_taken(int64_t t) { t_ = t; }
  double lr_at(int64_t t) const;

  const std::vector<NamedParam<Real>>& params() const { return params_; }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  std::vector<NamedParam<Real>> params_;
  std::vector<Slot> slots_;
  AdamHyper hyper_;
  int64_t t_ = 0;
};

}  // namespace salsum
