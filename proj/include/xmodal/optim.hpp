#pragma once

#include <cmath>
#include <vector>

#include "xmodal/autograd.hpp"

namespace xmodal {

struct AdamOptions {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. A parameter whose gradient has always been zero
/// keeps zero moments and is therefore left bitwise unchanged.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Parameter<S>*> params, AdamOptions options = {})
      : params_(std::move(params)), options_(options) {
    for (auto* p : params_) {
      m_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const S b1 = static_cast<S>(options_.beta1), b2 = static_cast<S>(options_.beta2);
    const S step = static_cast<S>(options_.learning_rate / c1);
    const S inv_c2 = static_cast<S>(1.0 / c2);
    const S eps = static_cast<S>(options_.epsilon);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      m_[i] = b1 * m_[i] + (S(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (S(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= step * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Parameter<S>*> params_;
  AdamOptions options_;
  std::vector<Matrix<S>> m_, v_;
  long t_ = 0;
};

}  // namespace xmodal
