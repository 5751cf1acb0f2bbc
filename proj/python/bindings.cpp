#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "facile/config.hpp"
#include "facile/diagnostics.hpp"
#include "facile/error.hpp"
#include "facile/fewshot_eval.hpp"
#include "facile/losses.hpp"
#include "facile/pipeline.hpp"

namespace py = pybind11;
using namespace facile;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor to_tensor(const RowMatrix& m) {
  std::vector<double> values(m.data(), m.data() + m.size());
  return Tensor::from({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                      std::move(values));
}

py::tuple synthetic_hierarchy(int num_super, int fine_per_super, std::size_t per_class,
                              std::size_t dim, double sigma_fine, double sigma_super,
                              std::uint64_t seed) {
  SyntheticSpec spec;
  spec.hierarchy = HierarchySpec::uniform(num_super, fine_per_super);
  spec.per_class = per_class;
  spec.dim = dim;
  spec.sigma_fine = sigma_fine;
  spec.sigma_super = sigma_super;
  spec.seed = seed;
  const Dataset d = gen_synthetic_hierarchy(spec);
  std::vector<int> fine, super;
  for (const auto& item : d.items) {
    fine.push_back(item.fine_label);
    super.push_back(item.super_label);
  }
  return py::make_tuple(RowMatrix(feature_matrix(d)), fine, super);
}

std::vector<int> fit_predict(const std::string& kind, const MatrixXd& support,
                             const std::vector<int>& labels, int classes, const MatrixXd& query,
                             double regularization) {
  FinePredictorSpec spec;
  spec.kind = classifier_kind_from_string(kind);
  spec.regularization = regularization;
  return fit_predictor(spec, support, labels, classes).predict(query);
}

py::tuple latent_augment(const MatrixXd& base, const MatrixXd& support,
                         const std::vector<int>& labels, std::size_t count, int prototypes,
                         std::uint64_t seed) {
  const BaseDictionary dict = la_build(base, prototypes, seed);
  Rng rng(mix_seed(seed, 1));
  const LabeledMatrix out = la_expand(dict, support, labels, count, rng);
  return py::make_tuple(RowMatrix(out.x), out.y);
}

py::dict risk_fit(const std::vector<std::size_t>& ns, const std::vector<double>& errors) {
  if (ns.size() != errors.size()) throw DimensionError("fit_risk_curve: ns and errors differ in length");
  std::vector<RiskPoint> points;
  for (std::size_t i = 0; i < ns.size(); ++i) points.push_back({ns[i], 0, errors[i]});
  const RiskCurve curve = fit_risk_curve(points);
  py::dict out;
  out["gamma"] = curve.gamma;
  out["c"] = curve.c();
  out["residual_rms"] = curve.residual_rms;
  return out;
}

// gen-data, pretrain and evaluate in memory; returns the summary document.
std::string run_pipeline(const std::string& config_json) {
  RunConfig cfg = RunConfig::from_json(nlohmann::json::parse(config_json));
  cfg.pretrain.seed = cfg.pretrain_seed();
  cfg.eval.protocol.seed = cfg.eval_seed();
  cfg.eval.protocol.threads = cfg.threads;
  const DataBundle data = make_data(cfg);
  const CoarseCorpus corpus =
      build_coarse_sets(cfg.coarse.task, data.train, cfg.coarse.num_sets, cfg.coarse.sizes, cfg.coarse_seed());
  const PretrainResult trained = pretrain_coarse(cfg.pretrain, corpus);
  std::optional<BaseDictionary> dict;
  if (cfg.eval.protocol.latent_augmentation) {
    dict = build_base_dictionary(trained.encoder, corpus, cfg.eval.la_prototypes, mix_seed(cfg.eval_seed(), 1));
  }
  const EvalReport report = evaluate_encoder(trained.encoder, *data.test, cfg.eval.protocol, dict ? &*dict : nullptr);
  nlohmann::json arms = nlohmann::json::object();
  for (const auto& arm : report.arms) {
    arms[arm.name] = {{"mean_f1", arm.f1_summary.mean},
                      {"mean_acc", arm.acc_summary.mean},
                      {"ci95", arm.f1_summary.ci95},
                      {"ci95_acc", arm.acc_summary.ci95},
                      {"la", arm.la}};
  }
  return nlohmann::json{{"arms", arms},
                        {"initial_loss", trained.initial_loss()},
                        {"final_loss", trained.final_loss()},
                        {"steps", trained.steps}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_facile, m) {
  m.doc() = "Coarse-to-fine few-shot learning core";

  auto& base = py::register_exception<Error>(m, "Error");
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());

  m.def("synthetic_hierarchy", &synthetic_hierarchy, py::arg("num_super"), py::arg("fine_per_super"),
        py::arg("per_class"), py::arg("dim"), py::arg("sigma_fine") = 1.0, py::arg("sigma_super") = 1.0,
        py::arg("seed") = 0);

  m.def("simclr_loss", [](const RowMatrix& z, double temperature) {
    return simclr_loss(to_tensor(z), temperature).item();
  }, py::arg("z"), py::arg("temperature") = 0.07);
  m.def("supcon_loss", [](const RowMatrix& z, const std::vector<int>& labels, double temperature) {
    return supcon_loss(to_tensor(z), labels, temperature).item();
  }, py::arg("z"), py::arg("labels"), py::arg("temperature") = 0.07);

  m.def("fit_predict", &fit_predict, py::arg("kind"), py::arg("support"), py::arg("labels"),
        py::arg("classes"), py::arg("query"), py::arg("regularization") = 1.0);
  m.def("latent_augment", &latent_augment, py::arg("base"), py::arg("support"), py::arg("labels"),
        py::arg("count") = 100, py::arg("prototypes") = 16, py::arg("seed") = 0);

  m.def("macro_f1", [](const std::vector<int>& preds, const std::vector<int>& labels, int classes) {
    return macro_f1(preds, labels, classes);
  }, py::arg("preds"), py::arg("labels"), py::arg("classes"));
  m.def("accuracy", [](const std::vector<int>& preds, const std::vector<int>& labels) {
    return accuracy(preds, labels);
  }, py::arg("preds"), py::arg("labels"));
  m.def("summarize", [](const std::vector<double>& scores) {
    const ScoreSummary s = summarize(scores);
    return py::make_tuple(s.mean, s.ci95);
  }, py::arg("scores"));

  m.def("fit_risk_curve", &risk_fit, py::arg("ns"), py::arg("errors"));
  m.def("_run_pipeline", &run_pipeline, py::arg("config_json"),
        py::call_guard<py::gil_scoped_release>());
}
