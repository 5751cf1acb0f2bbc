#include "facile/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "facile/error.hpp"
#include "facile/fewshot_eval.hpp"

namespace facile {

double RiskCurve::c() const { return std::exp(log_c); }

RiskCurve fit_risk_curve(std::vector<RiskPoint> points) {
  if (points.size() < 3) {
    throw ContractError("fit_risk_curve: needs at least 3 points, got " +
                        std::to_string(points.size()));
  }
  double sx = 0.0, sy = 0.0;
  for (const RiskPoint& p : points) {
    if (p.n == 0) throw DomainError("fit_risk_curve: n must be >= 1");
    if (!(p.error > 0.0) || !std::isfinite(p.error)) {
      throw DomainError("fit_risk_curve: error " + std::to_string(p.error) + " at n = " +
                        std::to_string(p.n) + " has no logarithm");
    }
    sx += std::log(static_cast<double>(p.n));
    sy += std::log(p.error);
  }
  const double k = static_cast<double>(points.size());
  const double mx = sx / k, my = sy / k;
  double sxx = 0.0, sxy = 0.0;
  for (const RiskPoint& p : points) {
    const double dx = std::log(static_cast<double>(p.n)) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(p.error) - my);
  }
  if (sxx == 0.0) throw ContractError("fit_risk_curve: needs at least 2 distinct n");
  const double slope = sxy / sxx;
  RiskCurve curve;
  curve.gamma = -slope;
  curve.log_c = my - slope * mx;
  double ss = 0.0;
  for (const RiskPoint& p : points) {
    const double r = std::log(p.error) - (curve.log_c + slope * std::log(static_cast<double>(p.n)));
    ss += r * r;
  }
  curve.residual_rms = std::sqrt(ss / k);
  curve.points = std::move(points);
  return curve;
}

const char* to_string(Growth growth) {
  switch (growth) {
    case Growth::constant: return "constant";
    case Growth::linear: return "linear";
    case Growth::quadratic: return "quadratic";
  }
  return "unknown";
}

Growth growth_from_string(const std::string& name) {
  for (auto g : {Growth::constant, Growth::linear, Growth::quadratic}) {
    if (name == to_string(g)) return g;
  }
  throw ConfigError("unknown growth regime '" + name + "'");
}

std::size_t coarse_count(Growth growth, double m0, std::size_t n) {
  const double nn = static_cast<double>(n);
  double m = m0;
  if (growth == Growth::linear) m = m0 * nn;
  if (growth == Growth::quadratic) m = m0 * nn * nn;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(m)));
}

RiskCurve run_risk_experiment(Growth growth, const RiskExperimentConfig& config,
                              std::uint64_t seed) {
  SyntheticSpec spec = config.data;
  spec.seed = mix_seed(seed, 100);
  auto [train, test] = split_per_class(gen_synthetic_hierarchy(spec), config.test_per_class);
  return run_risk_experiment(growth, config, std::make_shared<const Dataset>(std::move(train)),
                             test, seed);
}

RiskCurve run_risk_experiment(Growth growth, const RiskExperimentConfig& config,
                              const DatasetPtr& train, const Dataset& test, std::uint64_t seed) {
  if (config.pretrain.method != PretrainMethod::facile_fsp) {
    throw ConfigError("risk experiment: pretraining method must be facile_fsp");
  }
  if (config.n_grid.size() < 3) throw ConfigError("risk experiment: n_grid needs at least 3 entries");
  for (std::size_t i = 0; i < config.n_grid.size(); ++i) {
    const std::size_t n = config.n_grid[i];
    if (config.way <= 0 || n == 0 || n % static_cast<std::size_t>(config.way) != 0) {
      throw ConfigError("risk experiment: n = " + std::to_string(n) +
                        " is not a positive multiple of the way count " + std::to_string(config.way));
    }
    if (i > 0 && n <= config.n_grid[i - 1]) throw ConfigError("risk experiment: n_grid must ascend");
  }
  // Shared seeds across grid points: the sets for a smaller m are a prefix of
  // those for a larger m, and every point starts from the same initialization.
  const std::uint64_t coarse_seed = mix_seed(seed, 1);
  const std::uint64_t eval_seed = mix_seed(seed, 3);
  PretrainSpec pretrain = config.pretrain;
  pretrain.seed = mix_seed(seed, 2);

  std::vector<RiskPoint> points;
  for (std::size_t n : config.n_grid) {
    const std::size_t m = coarse_count(growth, config.m0, n);
    const CoarseCorpus corpus = build_coarse_sets(config.task, train, m, config.set_sizes, coarse_seed);
    const PretrainResult trained = pretrain_coarse(pretrain, corpus);
    ProtocolOptions options;
    options.way = config.way;
    options.shot = static_cast<int>(n / static_cast<std::size_t>(config.way));
    options.query = config.query;
    options.tasks = config.tasks;
    options.classifiers = {ClassifierKind::nearest_centroid};
    options.seed = eval_seed;
    options.threads = config.threads;
    const EvalReport report = evaluate_encoder(trained.encoder, test, options);
    points.push_back({n, m, 1.0 - report.arms.front().acc_summary.mean});
  }
  return fit_risk_curve(std::move(points));
}

// ---------------------------------------------------------------------------

CentralConditionEstimate estimate_central_condition(
    std::span<const double> losses_best, const std::vector<std::vector<double>>& losses_candidates,
    double eta) {
  if (!(eta > 0.0)) throw DomainError("central condition: eta must be positive");
  if (losses_candidates.empty()) throw ContractError("central condition: no candidates");
  if (losses_best.empty()) throw ContractError("central condition: no examples");
  CentralConditionEstimate est;
  est.eta = eta;
  est.epsilon = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < losses_candidates.size(); ++c) {
    const auto& lf = losses_candidates[c];
    if (lf.size() != losses_best.size()) {
      throw ContractError("central condition: candidate " + std::to_string(c) + " has " +
                          std::to_string(lf.size()) + " losses, expected " +
                          std::to_string(losses_best.size()));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lf.size(); ++i) mx = std::max(mx, eta * (losses_best[i] - lf[i]));
    double acc = 0.0;
    for (std::size_t i = 0; i < lf.size(); ++i) acc += std::exp(eta * (losses_best[i] - lf[i]) - mx);
    const double value = (mx + std::log(acc / static_cast<double>(lf.size()))) / eta;
    est.candidate_values.push_back(value);
    if (value > est.epsilon) {
      est.epsilon = value;
      est.argmax = c;
    }
  }
  return est;
}

// ---------------------------------------------------------------------------

LipschitzEstimate estimate_relative_lipschitz(std::span<const LipschitzPair> pairs,
                                              double tolerance) {
  LipschitzEstimate est;
  est.samples = pairs.size();
  est.tolerance = tolerance;
  double best = 0.0;
  for (const LipschitzPair& p : pairs) {
    const double gap = std::abs(p.fine_loss_a - p.fine_loss_b);
    if (p.coarse_a != p.coarse_b) {
      ++est.disagreements;
      best = std::max(best, gap);
    } else {
      est.max_agreeing_gap = std::max(est.max_agreeing_gap, gap);
      if (gap > tolerance) ++est.violations;
    }
  }
  if (est.disagreements > 0) est.value = best;
  return est;
}

int coarse_prediction(const Encoder& encoder, const SetAggregator& head, const Dataset& data,
                      std::span<const std::size_t> set) {
  if (set.empty()) throw ContractError("coarse_prediction: empty set");
  std::vector<double> values;
  for (std::size_t m : set) values.insert(values.end(), data[m].features.begin(), data[m].features.end());
  const Tensor out = coarse_forward(encoder, head, Tensor::from({set.size(), data.dim}, std::move(values)));
  const auto v = out.data();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

LipschitzEstimate estimate_relative_lipschitz(const Encoder& encoder_a,
                                              const SetAggregator& head_a,
                                              const Encoder& encoder_b,
                                              const SetAggregator& head_b,
                                              const FineLoss& fine_loss, const Dataset& data,
                                              std::span<const LipschitzSample> samples,
                                              double tolerance) {
  std::vector<std::size_t> instances;
  for (const LipschitzSample& s : samples) {
    if (std::find(s.set.begin(), s.set.end(), s.instance) == s.set.end()) {
      throw ContractError("relative Lipschitz: instance " + std::to_string(s.instance) +
                          " is not a member of its set");
    }
    instances.push_back(s.instance);
  }
  const MatrixXd za = embed_fine(encoder_a, data, instances);
  const MatrixXd zb = embed_fine(encoder_b, data, instances);
  std::vector<LipschitzPair> pairs;
  pairs.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    LipschitzPair p;
    p.coarse_a = coarse_prediction(encoder_a, head_a, data, samples[i].set);
    p.coarse_b = coarse_prediction(encoder_b, head_b, data, samples[i].set);
    p.fine_loss_a = fine_loss(za.row(row).transpose(), samples[i].label);
    p.fine_loss_b = fine_loss(zb.row(row).transpose(), samples[i].label);
    pairs.push_back(p);
  }
  return estimate_relative_lipschitz(pairs, tolerance);
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const RiskCurve& curve) {
  nlohmann::json pts = nlohmann::json::array();
  for (const RiskPoint& p : curve.points) pts.push_back({{"n", p.n}, {"m", p.m}, {"error", p.error}});
  return {{"points", pts},
          {"log_c", curve.log_c},
          {"c", curve.c()},
          {"gamma", curve.gamma},
          {"residual_rms", curve.residual_rms}};
}

nlohmann::json to_json(const CentralConditionEstimate& estimate) {
  return {{"eta", estimate.eta},
          {"epsilon", estimate.epsilon},
          {"candidate_values", estimate.candidate_values},
          {"argmax", estimate.argmax}};
}

nlohmann::json to_json(const LipschitzEstimate& estimate) {
  nlohmann::json j = {{"kind", "lower-bound surrogate"},
                      {"samples", estimate.samples},
                      {"disagreements", estimate.disagreements},
                      {"violations", estimate.violations},
                      {"tolerance", estimate.tolerance},
                      {"max_agreeing_gap", estimate.max_agreeing_gap}};
  j["value"] = estimate.value ? nlohmann::json(*estimate.value) : nlohmann::json(nullptr);
  return j;
}

}  // namespace facile
