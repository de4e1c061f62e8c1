// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pseudobound/nn.hpp"

namespace pseudobound {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias-corrected first and second moments.
template <typename T> class Adam {
public:
  Adam(std::vector<nn::Parameter<T> *> params, AdamOptions options)
      : params_(std::move(params)), options_(options) {
    for (auto *p : params_) {
      first_.emplace_back(p->value.shape());
      second_.emplace_back(p->value.shape());
    }
  }

  void zero_grad() {
    for (auto *p : params_)
      p->grad.fill(T(0));
  }

  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, double(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, double(steps_));
    const double lr = options_.learning_rate;
    const T b1 = T(options_.beta1), b2 = T(options_.beta2);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto &value = params_[k]->value;
      const auto &grad = params_[k]->grad;
      auto &m = first_[k];
      auto &v = second_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * grad[i];
        v[i] = b2 * v[i] + (T(1) - b2) * grad[i] * grad[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        value[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + options_.eps));
      }
    }
  }

  const AdamOptions &options() const noexcept { return options_; }
  std::uint64_t steps() const noexcept { return steps_; }

  // Moment buffers are exposed for checkpointing.
  std::vector<BasicTensor<T>> &first_moments() noexcept { return first_; }
  std::vector<BasicTensor<T>> &second_moments() noexcept { return second_; }
  const std::vector<BasicTensor<T>> &first_moments() const noexcept { return first_; }
  const std::vector<BasicTensor<T>> &second_moments() const noexcept { return second_; }
  void set_steps(std::uint64_t steps) noexcept { steps_ = steps; }

private:
  std::vector<nn::Parameter<T> *> params_;
  AdamOptions options_;
  std::vector<BasicTensor<T>> first_, second_;
  std::uint64_t steps_ = 0;
};

} // namespace pseudobound
