#pragma once

#include <cstddef>
#include <vector>

#include "facile/tensor.hpp"

namespace facile {

struct SgdConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t total_steps = 1;

  void validate() const;
};

// Cosine-annealed learning rate lr0 * (1 + cos(pi * t / total_steps)) / 2.
double cosine_lr(const SgdConfig& config, std::size_t step);

// SGD with heavy-ball momentum and L2 weight decay folded into the velocity:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr(t) * v
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, SgdConfig config);

  // Applies one update using the gradients currently stored on the params.
  // Throws ScheduleExhaustedError once step >= total_steps.
  void step(std::size_t step);
  void zero_grad();

  const SgdConfig& config() const { return config_; }
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  std::vector<Tensor> params_;
  SgdConfig config_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace facile
