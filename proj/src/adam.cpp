#include "ecgda/adam.hpp"

#include <cmath>

namespace ecgda::ad {

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Param* p : params_) {
    m_.emplace_back(p->value.data.size(), 0.0f);
    v_.emplace_back(p->value.data.size(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Param& p = *params_[pi];
    float* th = p.value.data.data();
    const float* gr = p.grad.data.data();
    float* m = m_[pi].data();
    float* v = v_[pi].data();
    const size_t n = p.value.data.size();
    for (size_t i = 0; i < n; ++i) {
      const double g = static_cast<double>(gr[i]) + static_cast<double>(cfg_.weight_decay) * th[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      th[i] = static_cast<float>(th[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

}  // namespace ecgda::ad
