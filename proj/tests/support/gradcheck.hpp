#pragma once

// Central finite-difference gradient checks against the tape.

#include <functional>
#include <string>
#include <vector>

#include "facile/rng.hpp"
#include "facile/tensor.hpp"

namespace facile::testing {

struct GradCheckOptions {
  double h = 1e-5;
  double rtol = 1e-4;
  double atol = 1e-7;  // below this magnitude, errors are judged in absolute terms
};

struct GradCheckResult {
  bool ok = true;
  double worst_score = 0.0;  // |a - n| / max(|a|, |n|, atol / rtol); passes when <= rtol
  std::size_t checked = 0;
  std::string worst;  // "input i, element j: analytic a vs numeric n"
};

using ScalarFn = std::function<Tensor()>;

// `loss` is re-evaluated with each entry of each tensor in `wrt` nudged by +-h.
// The tensors must require gradients and be the ones `loss` reads from.
GradCheckResult gradcheck(const ScalarFn& loss, const std::vector<Tensor>& wrt,
                          const GradCheckOptions& options = {});

// Matrix with entries uniform in [lo, hi) that requires a gradient.
Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true);

// Like random_tensor but every |entry| >= margin, away from relu/abs kinks.
Tensor random_tensor_off_kink(Shape shape, Rng& rng, double margin = 1e-2);

// Random rows normalized to unit length (no gradient).
Tensor random_unit_rows(std::size_t rows, std::size_t dim, Rng& rng);

}  // namespace facile::testing
