#include "facile/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "facile/error.hpp"

namespace facile {

void SgdConfig::validate() const {
  if (!(lr0 >= 0.0)) throw ConfigError("sgd: lr0 must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("sgd: weight_decay must be >= 0");
  if (total_steps == 0) throw ConfigError("sgd: total_steps must be positive");
}

double cosine_lr(const SgdConfig& config, std::size_t step) {
  const double progress = static_cast<double>(step) / static_cast<double>(config.total_steps);
  return config.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Sgd::Sgd(std::vector<Tensor> params, SgdConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void Sgd::step(std::size_t step) {
  if (step >= config_.total_steps) {
    throw ScheduleExhaustedError("sgd: step " + std::to_string(step) +
                                 " is past the schedule of " +
                                 std::to_string(config_.total_steps) + " steps");
  }
  const double lr = cosine_lr(config_, step);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    auto& v = velocity_[i];
    auto w = p.mutable_data();
    const auto& g = p.impl()->grad;
    const bool has_grad = !g.empty();
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = config_.momentum * v[j] + (has_grad ? g[j] : 0.0) + config_.weight_decay * w[j];
      w[j] -= lr * v[j];
    }
  }
}

void Sgd::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace facile
