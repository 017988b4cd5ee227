#pragma once

#include <cstdint>
#include <vector>

#include "ecgda/tensor.hpp"

namespace ecgda::ad {

struct AdamConfig {
  float lr = 0.001f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0005f;
};

// Adam with bias correction. Weight decay enters as an additive L2 term on the
// gradient (g <- g + wd*theta) before the moment updates.
class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg);

  void step();
  void zero_grad();
  int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Param*> params_;
  std::vector<std::vector<float>> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace ecgda::ad
