#include "facile/losses.hpp"

#include <cmath>
#include <string>

#include "facile/error.hpp"

namespace facile {

namespace {

// Added to the self-similarity logits so exp() of the diagonal underflows to exactly 0.
constexpr double kMaskedLogit = -1e9;

void require_temperature(double temperature, const char* op) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ContractError(std::string(op) + ": temperature must be positive, got " +
                        std::to_string(temperature));
  }
}

// log( exp(s_ij) / sum_{a != i} exp(s_ia) ) for every (i, j), s = z z^T / tau.
Tensor masked_log_prob(const Tensor& z, double temperature) {
  const std::size_t rows = z.dim(0);
  const Tensor logits = scale(matmul(z, transpose(z)), 1.0 / temperature);
  std::vector<double> mask(rows * rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) mask[i * rows + i] = kMaskedLogit;
  return log_softmax(add(logits, Tensor::from({rows, rows}, std::move(mask))), 1);
}

// -sum_ij weights_ij * log_prob_ij, divided by `anchors` for the mean.
Tensor weighted_nll(const Tensor& log_prob, std::vector<double> weights, std::size_t anchors,
                    Reduction reduction) {
  const Tensor w = Tensor::from(log_prob.shape(), std::move(weights));
  const Tensor total = scale(sum_all(mul(log_prob, w)), -1.0);
  if (reduction == Reduction::sum) return total;
  return scale(total, 1.0 / static_cast<double>(anchors));
}

void require_pairs(const Tensor& z, const char* op) {
  if (z.rank() != 2 || z.dim(0) < 2 || z.dim(0) % 2 != 0) {
    throw DimensionError(std::string(op) + ": expected 2N x d interleaved views, got " +
                         shape_str(z.shape()));
  }
}

}  // namespace

void require_unit_rows(const Tensor& z, const char* op, double tol) {
  if (z.rank() != 2) {
    throw DimensionError(std::string(op) + ": projections must be a matrix, got " +
                         shape_str(z.shape()));
  }
  const std::size_t d = z.dim(1);
  const auto v = z.data();
  for (std::size_t r = 0; r < z.dim(0); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += v[r * d + c] * v[r * d + c];
    if (std::abs(std::sqrt(sq) - 1.0) > tol) {
      throw ContractError(std::string(op) + ": row " + std::to_string(r) + " has norm " +
                          std::to_string(std::sqrt(sq)) + ", expected unit norm");
    }
  }
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy_loss: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<double> one_hot(batch * classes, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ContractError("cross_entropy_loss: label " + std::to_string(labels[i]) +
                          " outside [0, " + std::to_string(classes) + ")");
    }
    one_hot[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return weighted_nll(log_softmax(logits, 1), std::move(one_hot), batch, Reduction::mean);
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("l1_loss: incompatible shapes " + shape_str(pred.shape()) + " and " +
                         shape_str(target.shape()));
  }
  return mean_all(abs(sub(pred, target)));
}

Tensor simclr_loss(const Tensor& z, double temperature, Reduction reduction) {
  require_pairs(z, "simclr_loss");
  require_temperature(temperature, "simclr_loss");
  require_unit_rows(z, "simclr_loss");
  const std::size_t rows = z.dim(0);
  std::vector<double> weights(rows * rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) weights[i * rows + (i ^ 1U)] = 1.0;
  return weighted_nll(masked_log_prob(z, temperature), std::move(weights), rows, reduction);
}

Tensor supcon_loss_rows(const Tensor& z, std::span<const int> row_labels, double temperature,
                        Reduction reduction) {
  if (z.rank() != 2 || z.dim(0) != row_labels.size()) {
    throw DimensionError("supcon_loss: projections " + shape_str(z.shape()) + " vs " +
                         std::to_string(row_labels.size()) + " labels");
  }
  require_temperature(temperature, "supcon_loss");
  require_unit_rows(z, "supcon_loss");
  const std::size_t rows = z.dim(0);
  std::vector<double> weights(rows * rows, 0.0);
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t positives = 0;
    for (std::size_t p = 0; p < rows; ++p) {
      if (p != i && row_labels[p] == row_labels[i]) ++positives;
    }
    if (positives == 0) continue;
    ++anchors;
    const double w = 1.0 / static_cast<double>(positives);
    for (std::size_t p = 0; p < rows; ++p) {
      if (p != i && row_labels[p] == row_labels[i]) weights[i * rows + p] = w;
    }
  }
  if (anchors == 0) throw ContractError("supcon_loss: degenerate batch, no anchor has a positive");
  return weighted_nll(masked_log_prob(z, temperature), std::move(weights), anchors, reduction);
}

Tensor supcon_loss(const Tensor& z, std::span<const int> labels, double temperature,
                   Reduction reduction) {
  require_pairs(z, "supcon_loss");
  if (labels.size() * 2 != z.dim(0)) {
    throw DimensionError("supcon_loss: " + std::to_string(labels.size()) + " source labels for " +
                         std::to_string(z.dim(0)) + " rows");
  }
  std::vector<int> row_labels(z.dim(0));
  for (std::size_t i = 0; i < row_labels.size(); ++i) row_labels[i] = labels[i / 2];
  return supcon_loss_rows(z, row_labels, temperature, reduction);
}

Tensor simsiam_loss(const Tensor& p1, const Tensor& z1, const Tensor& p2, const Tensor& z2) {
  if (p1.shape() != z2.shape() || p2.shape() != z1.shape() || p1.shape() != p2.shape()) {
    throw DimensionError("simsiam_loss: incompatible shapes " + shape_str(p1.shape()) + " and " +
                         shape_str(z2.shape()));
  }
  const Tensor a = mean_all(cosine_similarity(p1, z2.detach()));
  const Tensor b = mean_all(cosine_similarity(p2, z1.detach()));
  return scale(add(a, b), -0.5);
}

}  // namespace facile
