#pragma once

// Few-shot evaluation: nearest-centroid, logistic-regression and ridge
// classifiers on frozen embeddings, latent augmentation from a k-means base
// dictionary, and task-level metrics aggregated over sampled meta-tasks.
//
// Feature matrices hold one example per row.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "facile/datasets.hpp"
#include "facile/rng.hpp"

namespace facile {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Classifiers

struct NearestCentroid {
  MatrixXd centroids;  // classes x d
};

// ContractError if some class in [0, classes) has no support row.
NearestCentroid nc_fit(const MatrixXd& x, std::span<const int> y, int classes);
// Euclidean argmin; ties go to the lowest class index.
std::vector<int> nc_predict(const NearestCentroid& model, const MatrixXd& z);

struct LrOptions {
  double lambda = 1.0;
  std::size_t max_iter = 1000;
  double tol = 1e-6;  // on the gradient infinity norm
};

struct LogisticModel {
  MatrixXd weights;  // d x classes
  VectorXd bias;     // classes
  bool converged = false;
  std::size_t iterations = 0;
  double objective = 0.0;
};

// mean_i CE(x_i W + b, y_i) + lambda / 2 * ||W||_F^2; the bias is not penalized.
double lr_objective(const MatrixXd& x, std::span<const int> y, const MatrixXd& weights,
                    const VectorXd& bias, double lambda);

// Full-batch gradient descent with Armijo backtracking from zero weights.
// Hitting max_iter leaves converged = false.
LogisticModel lr_fit(const MatrixXd& x, std::span<const int> y, int classes,
                     const LrOptions& options = {});
MatrixXd lr_scores(const LogisticModel& model, const MatrixXd& z);
std::vector<int> lr_predict(const LogisticModel& model, const MatrixXd& z);

struct RidgeModel {
  MatrixXd weights;  // d x classes
  VectorXd bias;     // classes
};

// One-vs-rest +-1 targets, classes x n. Column i has +1 at row y_i.
MatrixXd ridge_targets(std::span<const int> y, int classes);

// Solves (A^T A + alpha D) W = A^T T by Cholesky, where A = [X | 1] and D is
// the identity with a zero in the bias slot. NumericalError if the system is
// not positive definite.
RidgeModel rc_fit(const MatrixXd& x, std::span<const int> y, int classes, double alpha = 1.0);
MatrixXd rc_scores(const RidgeModel& model, const MatrixXd& z);
std::vector<int> rc_predict(const RidgeModel& model, const MatrixXd& z);

// Row-wise argmax; ties go to the lowest column.
std::vector<int> argmax_rows(const MatrixXd& scores);

// ---------------------------------------------------------------------------
// Latent augmentation

struct KMeansOptions {
  std::size_t max_iter = 300;
  double tol = 1e-6;  // largest center shift that counts as converged
};

struct KMeansResult {
  MatrixXd centers;  // k x d
  std::vector<int> assignment;
  std::size_t iterations = 0;
  bool converged = false;
};

// Lloyd's algorithm with k-means++ seeding. An emptied cluster is re-seeded
// at the point farthest from its current center. ContractError if rows < k.
KMeansResult kmeans(const MatrixXd& x, int k, std::uint64_t seed, const KMeansOptions& options = {});

inline constexpr double kCovarianceFloor = 1e-6;

struct BaseDictionary {
  MatrixXd prototypes;                 // k x d
  std::vector<MatrixXd> covariances;   // sample covariance + floor * I
  std::vector<MatrixXd> cholesky;      // lower factors of `covariances`

  int size() const { return static_cast<int>(prototypes.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(prototypes.cols()); }
  // Index of the nearest prototype (lowest index on ties).
  int nearest(const VectorXd& z) const;
};

BaseDictionary la_build(const MatrixXd& base_features, int k = 16, std::uint64_t seed = 0,
                        const KMeansOptions& options = {});

// `count` draws z + L eta with L the Cholesky factor of the nearest cluster's covariance.
MatrixXd la_sample(const BaseDictionary& dict, const VectorXd& z, std::size_t count, Rng& rng);

struct LabeledMatrix {
  MatrixXd x;
  std::vector<int> y;
};

// Every support row followed by `count` augmented copies carrying its label,
// so the result has rows * (count + 1) rows.
LabeledMatrix la_expand(const BaseDictionary& dict, const MatrixXd& x, std::span<const int> y,
                        std::size_t count, Rng& rng);

// ---------------------------------------------------------------------------
// Fine-grained predictor f

enum class ClassifierKind { nearest_centroid, logistic_regression, ridge };

const char* to_string(ClassifierKind kind);
// Accepts nc / lr / rc as well as the full names.
ClassifierKind classifier_kind_from_string(const std::string& name);
// Short column label: NC, LR, RC.
const char* short_name(ClassifierKind kind);

struct FinePredictorSpec {
  ClassifierKind kind = ClassifierKind::nearest_centroid;
  double regularization = 1.0;  // lambda for LR, alpha for RC, unused by NC
  bool latent_augmentation = false;
  std::size_t la_count = 100;
  std::size_t lr_max_iter = 1000;
  double lr_tol = 1e-6;

  void validate() const;
};

struct FinePredictor {
  ClassifierKind kind = ClassifierKind::nearest_centroid;
  int classes = 0;
  std::size_t fitted_rows = 0;  // support rows seen by the fitter, after any augmentation
  NearestCentroid nc;
  LogisticModel lr;
  RidgeModel rc;

  std::vector<int> predict(const MatrixXd& z) const;
};

// Fits from scratch. Latent augmentation requires `dict`; ConfigError otherwise.
FinePredictor fit_predictor(const FinePredictorSpec& spec, const MatrixXd& x,
                            std::span<const int> y, int classes,
                            const BaseDictionary* dict = nullptr, Rng* rng = nullptr);

// ---------------------------------------------------------------------------
// Metrics

// Mean of per-class F1 over classes with at least one true instance.
double macro_f1(std::span<const int> preds, std::span<const int> labels, int num_classes);
double accuracy(std::span<const int> preds, std::span<const int> labels);

struct ScoreSummary {
  double mean = 0.0;
  double ci95 = 0.0;  // 1.96 * sample std / sqrt(T); 0 for a single score
};

ScoreSummary summarize(std::span<const double> scores);

// ---------------------------------------------------------------------------
// Protocol

struct ArmSpec {
  std::string name;  // e.g. "NC", "LR+LA"
  FinePredictorSpec predictor;
};

struct ProtocolOptions {
  int way = 5;
  int shot = 5;
  int query = 15;
  std::size_t tasks = 1000;
  std::vector<ClassifierKind> classifiers{ClassifierKind::nearest_centroid,
                                          ClassifierKind::logistic_regression,
                                          ClassifierKind::ridge};
  double lr_lambda = 1.0;
  double rc_alpha = 1.0;
  bool latent_augmentation = false;  // adds LR+LA and RC+LA arms
  std::size_t la_count = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::vector<ArmSpec> arms() const;
};

struct ArmReport {
  std::string name;
  bool la = false;
  std::vector<double> f1;
  std::vector<double> acc;
  ScoreSummary f1_summary;
  ScoreSummary acc_summary;
};

struct EvalReport {
  std::vector<ArmReport> arms;

  const ArmReport& arm(const std::string& name) const;
};

// Runs options.tasks meta-tasks on precomputed l2-normalized embeddings
// (one row per instance of `data`). Task t uses seed derive_seed(seed, t),
// so any thread count gives the same report.
EvalReport evaluate_protocol(const MatrixXd& embeddings, const Dataset& data,
                             const ProtocolOptions& options,
                             const BaseDictionary* dict = nullptr);

// Protocol on labels alone: `predict` maps a task to query predictions.
// Used to score reference predictors that do not go through an encoder.
template <typename Predict>
ArmReport evaluate_predictions(const Dataset& data, const ProtocolOptions& options,
                               Predict predict) {
  FineClassIndex index(data);
  ArmReport arm;
  arm.name = "custom";
  for (std::size_t t = 0; t < options.tasks; ++t) {
    const MetaTask task = sample_meta_task(index, options.way, options.shot, options.query,
                                           derive_seed(options.seed, t));
    const std::vector<int> preds = predict(task);
    arm.f1.push_back(macro_f1(preds, task.query_labels, task.way()));
    arm.acc.push_back(accuracy(preds, task.query_labels));
  }
  arm.f1_summary = summarize(arm.f1);
  arm.acc_summary = summarize(arm.acc);
  return arm;
}

// Rows of `embeddings` selected by `indices`.
MatrixXd gather_rows(const MatrixXd& embeddings, std::span<const std::size_t> indices);

}  // namespace facile
