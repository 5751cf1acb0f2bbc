#pragma once

// Pretraining objectives. Every loss is built from tensor primitives and is
// differentiable under a live Tape.

#include <span>
#include <vector>

#include "facile/tensor.hpp"

namespace facile {

inline constexpr double kDefaultTemperature = 0.07;

enum class Reduction { mean, sum };

// Mean over the batch of -log_softmax(logits)[label]. ContractError for a label outside [0, K).
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

// Mean |pred - target| over equal-length vectors.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

// Two augmented views per source, interleaved: rows 2k and 2k + 1 are the
// views of source k. Every row must be unit-norm within 1e-8.
//
//   loss_i = -log( exp(z_i . z_j(i) / tau) / sum_{a != i} exp(z_i . z_a / tau) )
Tensor simclr_loss(const Tensor& z, double temperature = kDefaultTemperature,
                   Reduction reduction = Reduction::mean);

// Supervised contrastive loss with the positives average outside the log:
//
//   loss_i = -1/|P(i)| sum_{p in P(i)} log( exp(z_i . z_p / tau) / sum_{a != i} exp(z_i . z_a / tau) )
//
// `labels` holds one label per source (row pair), so P(i) always contains the
// other view. Anchors without positives contribute 0 and are left out of the
// mean; ContractError if no anchor has a positive.
Tensor supcon_loss(const Tensor& z, std::span<const int> labels,
                   double temperature = kDefaultTemperature,
                   Reduction reduction = Reduction::mean);

// Same as supcon_loss with one label per row instead of one per source.
Tensor supcon_loss_rows(const Tensor& z, std::span<const int> row_labels,
                        double temperature = kDefaultTemperature,
                        Reduction reduction = Reduction::mean);

// -(cos(p1, z2) + cos(p2, z1)) / 2, averaged over rows, with z1 and z2 detached.
Tensor simsiam_loss(const Tensor& p1, const Tensor& z1, const Tensor& p2, const Tensor& z2);

// ContractError unless every row of z has unit l2 norm within `tol`.
void require_unit_rows(const Tensor& z, const char* op, double tol = 1e-8);

}  // namespace facile
