// Command-line front end: gen-data, pretrain, evaluate, risk-curve, diagnose, selftest.
//
// Every subcommand reads a flat JSON config (--config) and writes under --out.
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "facile/config.hpp"
#include "facile/diagnostics.hpp"
#include "facile/error.hpp"
#include "facile/fewshot_eval.hpp"
#include "facile/pipeline.hpp"
#include "selftest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonArgs {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "flat JSON run configuration");
  cmd->add_option("--out", args.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", args.seed, "master seed (overrides the config)");
  cmd->add_option("--threads", args.threads, "evaluation worker threads");
}

// Explicit --config wins; otherwise the config echoed by gen-data in --out; otherwise defaults.
facile::RunConfig resolve_config(const CommonArgs& args) {
  facile::RunConfig cfg;
  const fs::path echoed = fs::path(args.out) / "config.json";
  if (!args.config.empty()) {
    cfg = facile::load_run_config(args.config);
  } else if (fs::exists(echoed)) {
    cfg = facile::load_run_config(echoed);
  }
  if (args.seed) cfg.seed = *args.seed;
  if (args.threads) cfg.threads = *args.threads;
  cfg.pretrain.seed = cfg.pretrain_seed();
  cfg.eval.protocol.seed = cfg.eval_seed();
  cfg.eval.protocol.threads = cfg.threads;
  return cfg;
}

fs::path prepare_out(const CommonArgs& args) {
  fs::path out(args.out);
  fs::create_directories(out);
  return out;
}

facile::DataBundle load_or_make_data(const fs::path& out, const facile::RunConfig& cfg) {
  const fs::path path = out / "data.json";
  if (fs::exists(path)) return facile::read_data_file(path);
  return facile::make_data(cfg);
}

facile::CoarseCorpus make_corpus(const facile::RunConfig& cfg, const facile::DatasetPtr& train) {
  return facile::build_coarse_sets(cfg.coarse.task, train, cfg.coarse.num_sets, cfg.coarse.sizes,
                                   cfg.coarse_seed());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw facile::Error("cannot write '" + path.string() + "'");
  f << text;
}

int cmd_gen_data(const CommonArgs& args) {
  const facile::RunConfig cfg = resolve_config(args);
  const fs::path out = prepare_out(args);
  const facile::DataBundle data = facile::make_data(cfg);
  facile::write_data_file(out / "data.json", cfg, data);
  facile::write_json_file(out / "config.json", cfg.to_json());
  std::cout << "wrote " << data.train->size() << " train and " << data.test->size()
            << " test instances to " << (out / "data.json").string() << '\n';
  return 0;
}

int cmd_pretrain(const CommonArgs& args) {
  const facile::RunConfig cfg = resolve_config(args);
  const fs::path out = prepare_out(args);
  const facile::DataBundle data = load_or_make_data(out, cfg);
  const facile::CoarseCorpus corpus = make_corpus(cfg, data.train);
  const facile::PretrainResult result = facile::pretrain_coarse(cfg.pretrain, corpus);
  const fs::path ckpt = out / "checkpoint.json";
  facile::save_pretrain_checkpoint(ckpt, result);
  json manifest = facile::run_manifest(result, corpus, ckpt);
  manifest["config"] = cfg.to_json();
  manifest["versions"] = {{"facile", kVersion}, {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                            std::to_string(EIGEN_MINOR_VERSION)}};
  facile::write_json_file(out / "manifest.json", manifest);
  std::cout << to_string(cfg.pretrain.method) << ": " << result.steps << " steps, loss "
            << result.initial_loss() << " -> " << result.final_loss() << '\n';
  return 0;
}

json summary_json(const facile::EvalReport& report, const facile::ProtocolOptions& options) {
  json arms = json::object();
  for (const auto& arm : report.arms) {
    arms[arm.name] = {{"mean_f1", arm.f1_summary.mean},
                      {"mean_acc", arm.acc_summary.mean},
                      {"ci95", arm.f1_summary.ci95},
                      {"ci95_acc", arm.acc_summary.ci95},
                      {"la", arm.la}};
  }
  return {{"arms", arms},
          {"way", options.way},
          {"shot", options.shot},
          {"query", options.query},
          {"tasks", options.tasks},
          {"seed", options.seed}};
}

std::string tasks_csv(const facile::EvalReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "task_id,classifier,la_flag,f1,acc\n";
  for (const auto& arm : report.arms) {
    const std::string kind = arm.name.substr(0, arm.name.find('+'));
    for (std::size_t t = 0; t < arm.f1.size(); ++t) {
      os << t << ',' << kind << ',' << (arm.la ? 1 : 0) << ',' << arm.f1[t] << ',' << arm.acc[t]
         << '\n';
    }
  }
  return os.str();
}

int cmd_evaluate(const CommonArgs& args, const std::string& checkpoint) {
  const facile::RunConfig cfg = resolve_config(args);
  const fs::path out = prepare_out(args);
  const facile::DataBundle data = load_or_make_data(out, cfg);
  const fs::path ckpt = checkpoint.empty() ? out / "checkpoint.json" : fs::path(checkpoint);
  const facile::LoadedModel model = facile::load_pretrain_checkpoint(ckpt);

  std::optional<facile::BaseDictionary> dict;
  if (cfg.eval.protocol.latent_augmentation) {
    dict = facile::build_base_dictionary(model.encoder, make_corpus(cfg, data.train),
                                         cfg.eval.la_prototypes, facile::mix_seed(cfg.eval_seed(), 1));
  }
  const facile::EvalReport report = facile::evaluate_encoder(
      model.encoder, *data.test, cfg.eval.protocol, dict ? &*dict : nullptr);
  write_text(out / "eval_tasks.csv", tasks_csv(report));
  facile::write_json_file(out / "summary.json", summary_json(report, cfg.eval.protocol));
  for (const auto& arm : report.arms) {
    std::cout << arm.name << ": F1 " << arm.f1_summary.mean << " +- " << arm.f1_summary.ci95
              << ", ACC " << arm.acc_summary.mean << " +- " << arm.acc_summary.ci95 << '\n';
  }
  return 0;
}

int cmd_risk_curve(const CommonArgs& args) {
  const facile::RunConfig cfg = resolve_config(args);
  const fs::path out = prepare_out(args);
  if (cfg.data.source != "synthetic") throw facile::ConfigError("risk-curve needs data.source = synthetic");
  facile::RiskExperimentConfig rc;
  rc.data.hierarchy = facile::HierarchySpec::uniform(cfg.data.num_super, cfg.data.fine_per_super);
  rc.data.per_class = cfg.data.per_class + cfg.data.test_per_class;
  rc.data.dim = cfg.data.dim;
  rc.data.sigma_fine = cfg.data.sigma_fine;
  rc.data.sigma_super = cfg.data.sigma_super;
  rc.test_per_class = cfg.data.test_per_class;
  rc.task = cfg.coarse.task;
  rc.set_sizes = cfg.coarse.sizes;
  rc.pretrain = cfg.pretrain;
  rc.n_grid = cfg.risk.n_grid;
  rc.m0 = cfg.risk.m0;
  rc.way = cfg.eval.protocol.way;
  rc.query = cfg.eval.protocol.query;
  rc.tasks = cfg.risk.tasks;
  rc.threads = cfg.threads;
  const facile::RiskCurve curve = facile::run_risk_experiment(cfg.risk.growth, rc, cfg.seed);

  std::ostringstream os;
  os.precision(17);
  os << "n,m,error\n";
  for (const auto& p : curve.points) os << p.n << ',' << p.m << ',' << p.error << '\n';
  write_text(out / "risk_curve.csv", os.str());
  json doc = facile::to_json(curve);
  doc["growth"] = to_string(cfg.risk.growth);
  doc["m0"] = cfg.risk.m0;
  facile::write_json_file(out / "risk_curve.json", doc);
  std::cout << "growth " << to_string(cfg.risk.growth) << ": gamma " << curve.gamma << ", C "
            << curve.c() << '\n';
  return 0;
}

// Central condition over the classifier arms (per-task 0-1 error, best arm as
// reference) and the relative-Lipschitz surrogate between the checkpoint's
// encoder and an independently seeded retrain.
int cmd_diagnose(const CommonArgs& args, const std::string& checkpoint) {
  const facile::RunConfig cfg = resolve_config(args);
  const fs::path out = prepare_out(args);
  const facile::DataBundle data = load_or_make_data(out, cfg);
  const fs::path ckpt = checkpoint.empty() ? out / "checkpoint.json" : fs::path(checkpoint);
  const facile::LoadedModel model = facile::load_pretrain_checkpoint(ckpt);
  if (!model.aggregator) throw facile::ConfigError("diagnose needs a set-level checkpoint");

  json doc;
  doc["preamble"] =
      "Empirical diagnostics only. The rate exponents and constants of the excess-risk bound "
      "have no empirical analogue here and are not estimated.";

  facile::ProtocolOptions protocol = cfg.eval.protocol;
  protocol.latent_augmentation = false;
  const facile::EvalReport report = facile::evaluate_encoder(model.encoder, *data.test, protocol);
  std::vector<std::vector<double>> errors;
  std::size_t best = 0;
  for (const auto& arm : report.arms) {
    std::vector<double> e(arm.acc.size());
    std::transform(arm.acc.begin(), arm.acc.end(), e.begin(), [](double a) { return 1.0 - a; });
    errors.push_back(std::move(e));
    if (arm.acc_summary.mean > report.arms[best].acc_summary.mean) best = errors.size() - 1;
  }
  std::vector<std::vector<double>> candidates;
  for (std::size_t a = 0; a < errors.size(); ++a) {
    if (a != best) candidates.push_back(errors[a]);
  }
  if (candidates.empty()) candidates.push_back(errors[best]);
  json cc = facile::to_json(facile::estimate_central_condition(errors[best], candidates,
                                                                cfg.diagnose.eta));
  cc["reference_arm"] = report.arms[best].name;
  doc["central_condition"] = cc;

  facile::PretrainSpec other = cfg.pretrain;
  other.seed = facile::mix_seed(cfg.pretrain_seed(), 99);
  const facile::CoarseCorpus corpus = make_corpus(cfg, data.train);
  const facile::PretrainResult retrain = facile::pretrain_coarse(other, corpus);

  const facile::MatrixXd z = facile::embed_fine(model.encoder, *data.test);
  std::vector<int> labels(data.test->size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (*data.test)[i].fine_label;
  const facile::LogisticModel fine = facile::lr_fit(
      z, labels, data.test->hierarchy.num_fine(), {cfg.eval.protocol.lr_lambda, 300, 1e-6});
  const facile::FineLoss fine_loss = [&fine](const facile::VectorXd& e, int y) {
    const facile::MatrixXd s = facile::lr_scores(fine, e.transpose());
    const double top = s.maxCoeff();
    return std::log((s.array() - top).exp().sum()) + top - s(0, y);
  };

  const facile::CoarseCorpus probe =
      facile::build_coarse_sets(cfg.coarse.task, data.test, cfg.diagnose.pairs, cfg.coarse.sizes,
                                facile::mix_seed(cfg.eval_seed(), 2));
  facile::Rng rng(facile::mix_seed(cfg.eval_seed(), 3));
  std::vector<facile::LipschitzSample> samples;
  for (const auto& s : probe.sets) {
    const std::size_t x = s.members[rng() % s.members.size()];
    samples.push_back({s.members, x, (*data.test)[x].fine_label});
  }
  doc["relative_lipschitz"] = facile::to_json(facile::estimate_relative_lipschitz(
      model.encoder, *model.aggregator, retrain.encoder, *retrain.aggregator, fine_loss, *data.test,
      samples, cfg.diagnose.tolerance));
  facile::write_json_file(out / "diagnostics.json", doc);
  std::cout << doc.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facile: coarse-label pretraining and few-shot evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonArgs common;
  std::string checkpoint;
  auto* gen = app.add_subcommand("gen-data", "generate or ingest the train/test data");
  auto* pre = app.add_subcommand("pretrain", "pretrain an encoder on the coarse corpus");
  auto* eval = app.add_subcommand("evaluate", "few-shot protocol on the test split");
  auto* risk = app.add_subcommand("risk-curve", "error-vs-n scaling experiment");
  auto* diag = app.add_subcommand("diagnose", "central condition and relative Lipschitz estimates");
  auto* self = app.add_subcommand("selftest", "run the built-in property suite");
  for (auto* cmd : {gen, pre, eval, risk, diag}) add_common(cmd, common);
  for (auto* cmd : {eval, diag}) cmd->add_option("--checkpoint", checkpoint, "checkpoint path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (e.get_exit_code() != 0) std::cerr << app.help();
    return 1;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*pre) return cmd_pretrain(common);
    if (*eval) return cmd_evaluate(common, checkpoint);
    if (*risk) return cmd_risk_curve(common);
    if (*diag) return cmd_diagnose(common, checkpoint);
    if (*self) return facile::testing::run_selftest(std::cout).failed == 0 ? 0 : 2;
  } catch (const facile::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
