#include "facile/fewshot_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "facile/error.hpp"

namespace facile {

namespace {

void require_labels(const MatrixXd& x, std::span<const int> y, int classes, const char* op) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(x.rows()) + " rows vs " +
                         std::to_string(y.size()) + " labels");
  }
  for (int label : y) {
    if (label < 0 || label >= classes) {
      throw ContractError(std::string(op) + ": label " + std::to_string(label) +
                          " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

void require_all_classes(std::span<const int> y, int classes, const char* op) {
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (int label : y) ++counts[static_cast<std::size_t>(label)];
  for (int c = 0; c < classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw ContractError(std::string(op) + ": class " + std::to_string(c) +
                          " has no support examples");
    }
  }
}

MatrixXd one_hot(std::span<const int> y, int classes) {
  MatrixXd out = MatrixXd::Zero(static_cast<Eigen::Index>(y.size()), classes);
  for (std::size_t i = 0; i < y.size(); ++i) out(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return out;
}

// Row-wise softmax and the mean cross-entropy against one-hot targets.
double softmax_ce(const MatrixXd& scores, std::span<const int> y, MatrixXd& probs) {
  probs.resize(scores.rows(), scores.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double mx = scores.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = scores.row(i).array() - mx;
    const double lse = std::log(shifted.array().exp().sum());
    probs.row(i) = (shifted.array() - lse).exp();
    total -= shifted(y[static_cast<std::size_t>(i)]) - lse;
  }
  return total / static_cast<double>(scores.rows());
}

}  // namespace

// ---------------------------------------------------------------------------
// Nearest centroid

NearestCentroid nc_fit(const MatrixXd& x, std::span<const int> y, int classes) {
  require_labels(x, y, classes, "nc_fit");
  require_all_classes(y, classes, "nc_fit");
  NearestCentroid model;
  model.centroids = MatrixXd::Zero(classes, x.cols());
  std::vector<double> counts(static_cast<std::size_t>(classes), 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int c = y[static_cast<std::size_t>(i)];
    model.centroids.row(c) += x.row(i);
    counts[static_cast<std::size_t>(c)] += 1.0;
  }
  for (int c = 0; c < classes; ++c) model.centroids.row(c) /= counts[static_cast<std::size_t>(c)];
  return model;
}

std::vector<int> nc_predict(const NearestCentroid& model, const MatrixXd& z) {
  if (z.cols() != model.centroids.cols()) {
    throw DimensionError("nc_predict: query width " + std::to_string(z.cols()) +
                         " vs centroid width " + std::to_string(model.centroids.cols()));
  }
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < model.centroids.rows(); ++c) {
      const double d = (z.row(i) - model.centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

std::vector<int> argmax_rows(const MatrixXd& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logistic regression

double lr_objective(const MatrixXd& x, std::span<const int> y, const MatrixXd& weights,
                    const VectorXd& bias, double lambda) {
  MatrixXd probs;
  const MatrixXd scores = (x * weights).rowwise() + bias.transpose();
  return softmax_ce(scores, y, probs) + 0.5 * lambda * weights.squaredNorm();
}

LogisticModel lr_fit(const MatrixXd& x, std::span<const int> y, int classes,
                     const LrOptions& options) {
  require_labels(x, y, classes, "lr_fit");
  if (classes < 2) throw ContractError("lr_fit: needs at least 2 classes");
  if (options.lambda < 0.0) throw ContractError("lr_fit: lambda must be >= 0");
  const double n = static_cast<double>(x.rows());
  const MatrixXd targets = one_hot(y, classes);

  LogisticModel m;
  m.weights = MatrixXd::Zero(x.cols(), classes);
  m.bias = VectorXd::Zero(classes);

  MatrixXd probs;
  auto evaluate = [&](const MatrixXd& w, const VectorXd& b, MatrixXd& p) {
    const MatrixXd scores = (x * w).rowwise() + b.transpose();
    return softmax_ce(scores, y, p) + 0.5 * options.lambda * w.squaredNorm();
  };

  double f = evaluate(m.weights, m.bias, probs);
  double step = 1.0;
  MatrixXd trial_probs;
  for (m.iterations = 0; m.iterations < options.max_iter; ++m.iterations) {
    const MatrixXd residual = probs - targets;
    const MatrixXd grad_w = x.transpose() * residual / n + options.lambda * m.weights;
    const VectorXd grad_b = residual.colwise().sum().transpose() / n;
    const double gnorm_inf = std::max(grad_w.cwiseAbs().maxCoeff(), grad_b.cwiseAbs().maxCoeff());
    if (gnorm_inf < options.tol) {
      m.converged = true;
      break;
    }
    const double gsq = grad_w.squaredNorm() + grad_b.squaredNorm();
    step = std::min(step * 2.0, 1e6);
    for (;;) {
      const MatrixXd w = m.weights - step * grad_w;
      const VectorXd b = m.bias - step * grad_b;
      const double ft = evaluate(w, b, trial_probs);
      if (ft <= f - 1e-4 * step * gsq) {
        m.weights = w;
        m.bias = b;
        f = ft;
        probs.swap(trial_probs);
        break;
      }
      step *= 0.5;
      if (step < 1e-16) {
        // No further decrease is representable; the current point is as good as it gets.
        m.objective = f;
        m.converged = gnorm_inf < options.tol;
        return m;
      }
    }
  }
  m.objective = f;
  return m;
}

MatrixXd lr_scores(const LogisticModel& model, const MatrixXd& z) {
  if (z.cols() != model.weights.rows()) {
    throw DimensionError("lr_predict: query width " + std::to_string(z.cols()) +
                         " vs weight rows " + std::to_string(model.weights.rows()));
  }
  return (z * model.weights).rowwise() + model.bias.transpose();
}

std::vector<int> lr_predict(const LogisticModel& model, const MatrixXd& z) {
  return argmax_rows(lr_scores(model, z));
}

// ---------------------------------------------------------------------------
// Ridge

MatrixXd ridge_targets(std::span<const int> y, int classes) {
  MatrixXd t = MatrixXd::Constant(static_cast<Eigen::Index>(y.size()), classes, -1.0);
  for (std::size_t i = 0; i < y.size(); ++i) t(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return t;
}

RidgeModel rc_fit(const MatrixXd& x, std::span<const int> y, int classes, double alpha) {
  require_labels(x, y, classes, "rc_fit");
  if (classes < 2) throw ContractError("rc_fit: needs at least 2 classes");
  if (alpha < 0.0) throw ContractError("rc_fit: alpha must be >= 0");
  const Eigen::Index d = x.cols();
  MatrixXd a(x.rows(), d + 1);
  a.leftCols(d) = x;
  a.col(d).setOnes();
  MatrixXd lhs = a.transpose() * a;
  lhs.diagonal().head(d).array() += alpha;
  const MatrixXd rhs = a.transpose() * ridge_targets(y, classes);
  const Eigen::LLT<MatrixXd> llt(lhs);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("rc_fit: normal equations are not positive definite (alpha = " +
                         std::to_string(alpha) + ")");
  }
  const MatrixXd solution = llt.solve(rhs);
  RidgeModel m;
  m.weights = solution.topRows(d);
  m.bias = solution.row(d).transpose();
  return m;
}

MatrixXd rc_scores(const RidgeModel& model, const MatrixXd& z) {
  if (z.cols() != model.weights.rows()) {
    throw DimensionError("rc_predict: query width " + std::to_string(z.cols()) +
                         " vs weight rows " + std::to_string(model.weights.rows()));
  }
  return (z * model.weights).rowwise() + model.bias.transpose();
}

std::vector<int> rc_predict(const RidgeModel& model, const MatrixXd& z) {
  return argmax_rows(rc_scores(model, z));
}

// ---------------------------------------------------------------------------
// k-means and the base dictionary

KMeansResult kmeans(const MatrixXd& x, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (k < 1) throw ContractError("kmeans: k must be >= 1");
  if (x.rows() < k) {
    throw ContractError("kmeans: " + std::to_string(x.rows()) + " rows is fewer than k = " +
                        std::to_string(k));
  }
  const Eigen::Index n = x.rows();
  Rng rng(seed);
  KMeansResult r;
  r.centers.resize(k, x.cols());

  // k-means++ seeding.
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  r.centers.row(0) = x.row(static_cast<Eigen::Index>(
      std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng)));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& di = d2[static_cast<std::size_t>(i)];
      di = std::min(di, (x.row(i) - r.centers.row(c - 1)).squaredNorm());
      total += di;
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = uniform(rng, 0.0, total);
      for (pick = 0; pick < n - 1; ++pick) {
        u -= d2[static_cast<std::size_t>(pick)];
        if (u < 0.0) break;
      }
    } else {
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    }
    r.centers.row(c) = x.row(pick);
  }

  r.assignment.assign(static_cast<std::size_t>(n), 0);
  for (r.iterations = 0; r.iterations < options.max_iter;) {
    ++r.iterations;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - r.centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      r.assignment[static_cast<std::size_t>(i)] = best;
    }
    MatrixXd next = MatrixXd::Zero(k, x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = r.assignment[static_cast<std::size_t>(i)];
      next.row(c) += x.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = (x.row(i) - r.centers.row(r.assignment[static_cast<std::size_t>(i)]))
                             .squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      next.row(c) = x.row(far);
    }
    const double shift = (next - r.centers).rowwise().norm().maxCoeff();
    r.centers = next;
    if (shift < options.tol) {
      r.converged = true;
      break;
    }
  }
  // Final assignment against the returned centers.
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = (x.row(i) - r.centers.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    r.assignment[static_cast<std::size_t>(i)] = best;
  }
  return r;
}

int BaseDictionary::nearest(const VectorXd& z) const {
  if (static_cast<std::size_t>(z.size()) != dim()) {
    throw DimensionError("la_sample: vector width " + std::to_string(z.size()) +
                         " vs dictionary width " + std::to_string(dim()));
  }
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < prototypes.rows(); ++c) {
    const double d = (prototypes.row(c).transpose() - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

BaseDictionary la_build(const MatrixXd& base_features, int k, std::uint64_t seed,
                        const KMeansOptions& options) {
  const KMeansResult km = kmeans(base_features, k, seed, options);
  const Eigen::Index d = base_features.cols();
  BaseDictionary dict;
  dict.prototypes = km.centers;
  for (int c = 0; c < k; ++c) {
    std::vector<Eigen::Index> members;
    for (std::size_t i = 0; i < km.assignment.size(); ++i) {
      if (km.assignment[i] == c) members.push_back(static_cast<Eigen::Index>(i));
    }
    MatrixXd cov = MatrixXd::Zero(d, d);
    if (members.size() > 1) {
      VectorXd mu = VectorXd::Zero(d);
      for (Eigen::Index i : members) mu += base_features.row(i).transpose();
      mu /= static_cast<double>(members.size());
      for (Eigen::Index i : members) {
        const VectorXd centered = base_features.row(i).transpose() - mu;
        cov.noalias() += centered * centered.transpose();
      }
      cov /= static_cast<double>(members.size() - 1);
    }
    cov.diagonal().array() += kCovarianceFloor;
    const Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("la_build: covariance of cluster " + std::to_string(c) +
                           " has no Cholesky factor");
    }
    dict.cholesky.push_back(llt.matrixL());
    dict.covariances.push_back(std::move(cov));
  }
  return dict;
}

MatrixXd la_sample(const BaseDictionary& dict, const VectorXd& z, std::size_t count, Rng& rng) {
  const int cluster = dict.nearest(z);
  const MatrixXd& chol = dict.cholesky[static_cast<std::size_t>(cluster)];
  const Eigen::Index d = z.size();
  MatrixXd eta(d, static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < eta.cols(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) eta(i, j) = standard_normal(rng);
  }
  MatrixXd out = (chol.triangularView<Eigen::Lower>() * eta).transpose();
  out.rowwise() += z.transpose();
  return out;
}

LabeledMatrix la_expand(const BaseDictionary& dict, const MatrixXd& x, std::span<const int> y,
                        std::size_t count, Rng& rng) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw DimensionError("la_expand: " + std::to_string(x.rows()) + " rows vs " +
                         std::to_string(y.size()) + " labels");
  }
  const auto block = static_cast<Eigen::Index>(count + 1);
  LabeledMatrix out;
  out.x.resize(x.rows() * block, x.cols());
  out.y.reserve(static_cast<std::size_t>(x.rows() * block));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.x.row(i * block) = x.row(i);
    if (count > 0) {
      out.x.middleRows(i * block + 1, block - 1) = la_sample(dict, x.row(i).transpose(), count, rng);
    }
    out.y.insert(out.y.end(), static_cast<std::size_t>(block), y[static_cast<std::size_t>(i)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fine predictor

const char* to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::nearest_centroid: return "nearest_centroid";
    case ClassifierKind::logistic_regression: return "logistic_regression";
    case ClassifierKind::ridge: return "ridge";
  }
  return "unknown";
}

const char* short_name(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::nearest_centroid: return "NC";
    case ClassifierKind::logistic_regression: return "LR";
    case ClassifierKind::ridge: return "RC";
  }
  return "?";
}

ClassifierKind classifier_kind_from_string(const std::string& name) {
  for (auto k : {ClassifierKind::nearest_centroid, ClassifierKind::logistic_regression,
                 ClassifierKind::ridge}) {
    std::string lower = short_name(k);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (name == to_string(k) || name == lower || name == short_name(k)) return k;
  }
  throw ConfigError("unknown classifier '" + name + "'");
}

void FinePredictorSpec::validate() const {
  if (regularization < 0.0) throw ConfigError("fine predictor: regularization must be >= 0");
  if (latent_augmentation && kind == ClassifierKind::nearest_centroid) {
    throw ConfigError("fine predictor: latent augmentation is only defined for LR and RC");
  }
}

std::vector<int> FinePredictor::predict(const MatrixXd& z) const {
  switch (kind) {
    case ClassifierKind::nearest_centroid: return nc_predict(nc, z);
    case ClassifierKind::logistic_regression: return lr_predict(lr, z);
    case ClassifierKind::ridge: return rc_predict(rc, z);
  }
  return {};
}

FinePredictor fit_predictor(const FinePredictorSpec& spec, const MatrixXd& x,
                            std::span<const int> y, int classes, const BaseDictionary* dict,
                            Rng* rng) {
  spec.validate();
  FinePredictor f;
  f.kind = spec.kind;
  f.classes = classes;
  LabeledMatrix expanded;
  const MatrixXd* fx = &x;
  std::span<const int> fy = y;
  if (spec.latent_augmentation) {
    if (dict == nullptr) throw ConfigError("latent augmentation requested without a base dictionary");
    if (rng == nullptr) throw ContractError("latent augmentation needs a random stream");
    expanded = la_expand(*dict, x, y, spec.la_count, *rng);
    fx = &expanded.x;
    fy = expanded.y;
  }
  f.fitted_rows = static_cast<std::size_t>(fx->rows());
  switch (spec.kind) {
    case ClassifierKind::nearest_centroid: f.nc = nc_fit(*fx, fy, classes); break;
    case ClassifierKind::logistic_regression:
      f.lr = lr_fit(*fx, fy, classes, {spec.regularization, spec.lr_max_iter, spec.lr_tol});
      break;
    case ClassifierKind::ridge: f.rc = rc_fit(*fx, fy, classes, spec.regularization); break;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Metrics

double macro_f1(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  if (preds.size() != labels.size()) {
    throw DimensionError("macro_f1: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<double> tp(k, 0.0), fp(k, 0.0), fn(k, 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = static_cast<std::size_t>(preds[i]);
    const auto t = static_cast<std::size_t>(labels[i]);
    if (p >= k || t >= k) throw ContractError("macro_f1: label outside [0, num_classes)");
    if (p == t) {
      tp[t] += 1.0;
    } else {
      fp[p] += 1.0;
      fn[t] += 1.0;
    }
  }
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (tp[c] + fn[c] == 0.0) continue;
    ++present;
    total += 2.0 * tp[c] / (2.0 * tp[c] + fp[c] + fn[c]);
  }
  return present == 0 ? 0.0 : total / static_cast<double>(present);
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw DimensionError("accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

ScoreSummary summarize(std::span<const double> scores) {
  ScoreSummary s;
  if (scores.empty()) return s;
  const double t = static_cast<double>(scores.size());
  for (double v : scores) s.mean += v;
  s.mean /= t;
  if (scores.size() < 2) return s;
  double ss = 0.0;
  for (double v : scores) ss += (v - s.mean) * (v - s.mean);
  s.ci95 = 1.96 * std::sqrt(ss / (t - 1.0)) / std::sqrt(t);
  return s;
}

// ---------------------------------------------------------------------------
// Protocol

std::vector<ArmSpec> ProtocolOptions::arms() const {
  std::vector<ArmSpec> out;
  auto regularization = [this](ClassifierKind k) {
    return k == ClassifierKind::logistic_regression ? lr_lambda : rc_alpha;
  };
  for (ClassifierKind k : classifiers) {
    FinePredictorSpec spec;
    spec.kind = k;
    spec.regularization = regularization(k);
    out.push_back({short_name(k), spec});
  }
  if (latent_augmentation) {
    for (ClassifierKind k : classifiers) {
      if (k == ClassifierKind::nearest_centroid) continue;
      FinePredictorSpec spec;
      spec.kind = k;
      spec.regularization = regularization(k);
      spec.latent_augmentation = true;
      spec.la_count = la_count;
      out.push_back({std::string(short_name(k)) + "+LA", spec});
    }
  }
  return out;
}

const ArmReport& EvalReport::arm(const std::string& name) const {
  for (const ArmReport& a : arms) {
    if (a.name == name) return a;
  }
  throw ContractError("no evaluation arm named '" + name + "'");
}

MatrixXd gather_rows(const MatrixXd& embeddings, std::span<const std::size_t> indices) {
  MatrixXd out(static_cast<Eigen::Index>(indices.size()), embeddings.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = embeddings.row(static_cast<Eigen::Index>(indices[i]));
  }
  return out;
}

EvalReport evaluate_protocol(const MatrixXd& embeddings, const Dataset& data,
                             const ProtocolOptions& options, const BaseDictionary* dict) {
  if (static_cast<std::size_t>(embeddings.rows()) != data.size()) {
    throw DimensionError("evaluate_protocol: " + std::to_string(embeddings.rows()) +
                         " embeddings for " + std::to_string(data.size()) + " instances");
  }
  if (options.tasks == 0) throw ConfigError("evaluate_protocol: tasks must be >= 1");
  const std::vector<ArmSpec> arms = options.arms();
  for (const ArmSpec& a : arms) {
    if (a.predictor.latent_augmentation && dict == nullptr) {
      throw ConfigError("evaluate_protocol: arm " + a.name +
                        " needs latent augmentation but no base dictionary was built");
    }
  }
  const FineClassIndex index(data);

  EvalReport report;
  for (const ArmSpec& a : arms) {
    ArmReport r;
    r.name = a.name;
    r.la = a.predictor.latent_augmentation;
    r.f1.assign(options.tasks, 0.0);
    r.acc.assign(options.tasks, 0.0);
    report.arms.push_back(std::move(r));
  }

  auto run_task = [&](std::size_t t) {
    const std::uint64_t task_seed = derive_seed(options.seed, t);
    const MetaTask task = sample_meta_task(index, options.way, options.shot, options.query, task_seed);
    const MatrixXd support = gather_rows(embeddings, task.support);
    const MatrixXd query = gather_rows(embeddings, task.query);
    for (std::size_t a = 0; a < arms.size(); ++a) {
      Rng rng(mix_seed(task_seed, a));
      const FinePredictor f =
          fit_predictor(arms[a].predictor, support, task.support_labels, task.way(), dict, &rng);
      const std::vector<int> preds = f.predict(query);
      report.arms[a].f1[t] = macro_f1(preds, task.query_labels, task.way());
      report.arms[a].acc[t] = accuracy(preds, task.query_labels);
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.threads, options.tasks));
  if (workers == 1) {
    for (std::size_t t = 0; t < options.tasks; ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < options.tasks; t = next++) {
          try {
            run_task(t);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = options.tasks;
          }
        }
      });
    }
    for (std::thread& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  for (ArmReport& r : report.arms) {
    r.f1_summary = summarize(r.f1);
    r.acc_summary = summarize(r.acc);
  }
  return report;
}

}  // namespace facile
