#pragma once

#include "nets/params.h"

namespace tritex {

// Adam over a parameter store. Parameters whose requires_grad flag is off are
// skipped entirely (values and moments stay bitwise unchanged), which is how
// the stage freeze contracts are enforced at the optimizer level.
class AdamOptimizer {
 public:
  AdamOptimizer(ParamStore& ps, double lr, double beta1 = 0.9, double beta2 = 0.99,
                double eps = 1e-8, double grad_clip = 10.0);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void zero_grad();
  // Clips the global gradient norm over trainable parameters, then applies
  // one Adam update. Returns the pre-clip gradient norm.
  double step();

 private:
  ParamStore& ps_;
  double lr_, beta1_, beta2_, eps_, grad_clip_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace tritex
