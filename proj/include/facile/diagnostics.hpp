#pragma once

// Empirical counterparts of the theory: error-vs-n scaling curves, the weak
// central condition, and relative Lipschitzness between two encoders.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "facile/datasets.hpp"
#include "facile/models.hpp"
#include "facile/pipeline.hpp"

namespace facile {

// ---------------------------------------------------------------------------
// Risk curves: error b = C / n^gamma, fitted as log b = log C - gamma log n.

struct RiskPoint {
  std::size_t n = 0;  // fine-grained labels per task
  std::size_t m = 0;  // coarse-grained labels used for pretraining
  double error = 0.0;
};

struct RiskCurve {
  std::vector<RiskPoint> points;
  double log_c = 0.0;
  double gamma = 0.0;  // positive when the error falls with n
  double residual_rms = 0.0;

  double c() const;
};

// Least squares on (log n, log error). ContractError for fewer than 3 points
// or fewer than 2 distinct n, DomainError for an error <= 0.
RiskCurve fit_risk_curve(std::vector<RiskPoint> points);

enum class Growth { constant, linear, quadratic };

const char* to_string(Growth growth);
Growth growth_from_string(const std::string& name);

// m = round(m0), round(m0 * n) or round(m0 * n^2), at least 1.
std::size_t coarse_count(Growth growth, double m0, std::size_t n);

struct RiskExperimentConfig {
  SyntheticSpec data;             // generated once per experiment
  std::size_t test_per_class = 20;
  CoarseTask task = CoarseTask::most_frequent;
  SizeRange set_sizes;
  PretrainSpec pretrain;          // method must be facile_fsp
  std::vector<std::size_t> n_grid{10, 20, 40};
  double m0 = 1.0;
  int way = 5;
  int query = 15;
  std::size_t tasks = 200;
  std::size_t threads = 1;
};

// For each n: build m coarse sets, pretrain, evaluate NC on `way`-way tasks
// with n / way supports per class, record error = 1 - mean ACC. ConfigError
// when n is not a multiple of the way count.
RiskCurve run_risk_experiment(Growth growth, const RiskExperimentConfig& config, std::uint64_t seed);

// Same, reusing an existing train/test split.
RiskCurve run_risk_experiment(Growth growth, const RiskExperimentConfig& config,
                              const DatasetPtr& train, const Dataset& test, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Weak central condition

struct CentralConditionEstimate {
  double eta = 0.0;
  double epsilon = 0.0;               // max over candidates
  std::vector<double> candidate_values;  // (1/eta) log mean exp(eta (l* - l_f)) per candidate
  std::size_t argmax = 0;
};

// ContractError for no candidates or misaligned example counts; DomainError for eta <= 0.
CentralConditionEstimate estimate_central_condition(
    std::span<const double> losses_best, const std::vector<std::vector<double>>& losses_candidates,
    double eta);

// ---------------------------------------------------------------------------
// Relative Lipschitzness

struct LipschitzPair {
  int coarse_a = 0;  // coarse prediction through the first encoder
  int coarse_b = 0;  // and through the second
  double fine_loss_a = 0.0;
  double fine_loss_b = 0.0;
};

struct LipschitzEstimate {
  std::optional<double> value;  // absent when no pair disagrees on the coarse prediction
  std::size_t samples = 0;
  std::size_t disagreements = 0;
  std::size_t violations = 0;  // agreeing pairs whose fine losses differ by more than tol
  double tolerance = 0.0;
  double max_agreeing_gap = 0.0;
};

LipschitzEstimate estimate_relative_lipschitz(std::span<const LipschitzPair> pairs,
                                              double tolerance = 1e-9);

// One sampled (s, x, y): a set of instance indices, an instance x in s, and x's label.
struct LipschitzSample {
  std::vector<std::size_t> set;
  std::size_t instance = 0;
  int label = 0;
};

// Per-example fine loss of an l2-normalized embedding.
using FineLoss = std::function<double(const VectorXd& embedding, int label)>;

// Evaluates both encoders with their trained set heads on every sample and
// defers to the pair-level estimator. ContractError if some x is not in its s.
LipschitzEstimate estimate_relative_lipschitz(const Encoder& encoder_a,
                                              const SetAggregator& head_a,
                                              const Encoder& encoder_b,
                                              const SetAggregator& head_b,
                                              const FineLoss& fine_loss, const Dataset& data,
                                              std::span<const LipschitzSample> samples,
                                              double tolerance = 1e-9);

// Argmax of g(phi^e(s)).
int coarse_prediction(const Encoder& encoder, const SetAggregator& head, const Dataset& data,
                      std::span<const std::size_t> set);

// ---------------------------------------------------------------------------

nlohmann::json to_json(const RiskCurve& curve);
nlohmann::json to_json(const CentralConditionEstimate& estimate);
nlohmann::json to_json(const LipschitzEstimate& estimate);

}  // namespace facile
