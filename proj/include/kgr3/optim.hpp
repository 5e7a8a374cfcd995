#pragma once
// Adamax with bias-corrected first moment, plus the warmup/linear-decay
// learning-rate curve.

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>

#include "kgr3/tensor.hpp"

namespace kgr3 {

struct AdamaxConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter state keyed by tensor name; step count shared.
template <typename T>
class Adamax {
 public:
  explicit Adamax(AdamaxConfig cfg = {}) : cfg_(cfg) {}

  // theta <- theta - (lr/(1-beta1^t)) * m/(u+eps)
  void step(std::map<std::string, Tensor<T>>& params,
            const std::map<std::string, Tensor<T>>& grads, double lr) {
    ++t_;
    const double bias = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    for (auto& [name, theta] : params) {
      auto git = grads.find(name);
      if (git == grads.end())
        throw std::invalid_argument("adamax: missing gradient for " + name);
      const Tensor<T>& g = git->second;
      if (!theta.same_shape(g))
        throw std::invalid_argument("adamax: shape mismatch for " + name);
      Tensor<T>& m = moment(first_, name, theta);
      Tensor<T>& u = moment(inf_norm_, name, theta);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m.data[i] = static_cast<T>(cfg_.beta1) * m.data[i] +
                    static_cast<T>(1.0 - cfg_.beta1) * g.data[i];
        u.data[i] = std::max(static_cast<T>(cfg_.beta2) * u.data[i],
                             std::abs(g.data[i]));
        theta.data[i] -= static_cast<T>(lr / bias) * m.data[i] /
                         (u.data[i] + static_cast<T>(cfg_.eps));
      }
    }
  }

  std::size_t step_count() const { return t_; }
  const AdamaxConfig& config() const { return cfg_; }

 private:
  Tensor<T>& moment(std::map<std::string, Tensor<T>>& store,
                    const std::string& name, const Tensor<T>& like) {
    auto it = store.find(name);
    if (it == store.end())
      it = store.emplace(name, Tensor<T>::zeros(like.rows, like.cols)).first;
    return it->second;
  }

  AdamaxConfig cfg_;
  std::map<std::string, Tensor<T>> first_;
  std::map<std::string, Tensor<T>> inf_norm_;
  std::size_t t_ = 0;
};

// 0 -> peak over the first ceil(0.1*total) steps, then peak -> 0 over the
// remainder. Continuous, piecewise linear, peak attained exactly once.
inline double lr_schedule(std::size_t step, std::size_t total_steps,
                          double peak) {
  if (step > total_steps)
    throw std::invalid_argument("lr_schedule: step > total_steps");
  if (total_steps == 0) return 0.0;
  const std::size_t warmup =
      (total_steps + 9) / 10;  // ceil(0.1 * total_steps)
  if (step <= warmup)
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  return peak * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

}  // namespace kgr3
