// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "facile/config.hpp"
#include "facile/diagnostics.hpp"
#include "facile/error.hpp"
#include "facile/fewshot_eval.hpp"
#include "facile/losses.hpp"
#include "facile/models.hpp"
#include "facile/pipeline.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "selftest.hpp"

using namespace facile;
using namespace facile::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Counts failures and records the worst message.
struct Tally {
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::string first_failure;

  void check(bool ok, const std::string& what) {
    ++checked;
    if (!ok) {
      ++failed;
      if (first_failure.empty()) first_failure = what;
    }
  }
  bool ok() const { return failed == 0; }
  std::string summary() const {
    std::string s = std::to_string(checked - failed) + "/" + std::to_string(checked) + " checks";
    if (!first_failure.empty()) s += "; first failure: " + first_failure;
    return s;
  }
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Gradients

AggregatorConfig small_aggregator(AggregatorKind kind, std::size_t in, std::size_t out) {
  AggregatorConfig cfg;
  cfg.kind = kind;
  cfg.input_dim = in;
  cfg.hidden_dim = 8;
  cfg.heads = 4;
  cfg.inducing_points = 3;
  cfg.output_dim = out;
  return cfg;
}

const AggregatorKind kAggregators[] = {AggregatorKind::deepset_mean, AggregatorKind::deepset_sum,
                                       AggregatorKind::deepset_max, AggregatorKind::attn_mil,
                                       AggregatorKind::set_transformer};

Outcome gradients() {
  const auto t0 = Clock::now();
  constexpr int kInstances = 20;
  Tally tally;
  double worst = 0.0;
  auto run = [&](const std::string& name, const ScalarFn& fn, const std::vector<Tensor>& wrt) {
    const GradCheckResult r = gradcheck(fn, wrt);
    worst = std::max(worst, r.worst_score);
    tally.check(r.ok, name + " (" + r.worst + ")");
  };

  Rng rng(101);
  for (int rep = 0; rep < kInstances; ++rep) {
    const Tensor a = random_tensor_off_kink({3, 4}, rng, 0.05);
    const Tensor b = random_tensor({3, 4}, rng);
    const Tensor m = random_tensor({4, 2}, rng);
    const Tensor r = random_tensor({4}, rng);
    const Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);
    const Tensor w = random_tensor({3, 4}, rng, -1.0, 1.0, false);
    const std::vector<Tensor> all{a, b, m, r, pos};
    run("matmul", [&] { return sum_all(mul(matmul(a, m), matmul(b, m))); }, all);
    run("add", [&] { return sum_all(mul(add(a, b), w)); }, all);
    run("sub", [&] { return sum_all(mul(sub(a, b), add(a, b))); }, all);
    run("mul", [&] { return sum_all(mul(mul(a, b), w)); }, all);
    run("scale", [&] { return sum_all(mul(scale(a, -1.7), w)); }, all);
    run("add_scalar", [&] { return sum_all(mul(add_scalar(a, 0.3), a)); }, all);
    run("relu", [&] { return sum_all(mul(relu(a), w)); }, all);
    run("tanh", [&] { return sum_all(mul(tanh(a), w)); }, all);
    run("exp", [&] { return sum_all(mul(exp(a), w)); }, all);
    run("log", [&] { return sum_all(mul(log(pos), w)); }, all);
    run("abs", [&] { return sum_all(mul(abs(a), w)); }, all);
    run("softmax", [&] { return sum_all(add(mul(softmax(b, 0), w), mul(softmax(b, 1), w))); }, all);
    run("log_softmax", [&] { return sum_all(mul(log_softmax(b, 1), w)); }, all);
    run("sum", [&] { return sum_all(mul(sum(b, 0), r)); }, all);
    run("mean", [&] { return sum_all(mul(mean(b, 1), mean(a, 1))); }, all);
    run("max", [&] { return sum_all(mul(max(b, 0), r)); }, all);
    run("concat", [&] { return sum_all(mul(concat({a, b}, 0), concat({w, w}, 0))); }, all);
    run("transpose", [&] { return sum_all(matmul(transpose(b), a)); }, all);
    run("reshape", [&] { return sum_all(mul(reshape(b, {4, 3}), transpose(w))); }, all);
    run("slice", [&] {
      return sum_all(mul(slice_cols(slice_rows(b, 1, 3), 1, 4), slice_cols(slice_rows(w, 0, 2), 0, 3)));
    }, all);
    run("broadcast_add", [&] { return sum_all(mul(broadcast_add(b, r), w)); }, all);
    run("l2_normalize", [&] { return sum_all(mul(l2_normalize(b, 1), w)); }, all);
    run("cosine", [&] { return sum_all(cosine_similarity(a, b)); }, all);
    run("mean_all", [&] { return mean_all(mul(b, b)); }, all);

    EncoderConfig ec;
    ec.input_dim = 5;
    ec.hidden_dims = {6, 5};
    ec.embed_dim = 4;
    const Encoder enc(ec, rng);
    const Tensor batch = random_tensor({3, 5}, rng, -1.0, 1.0, false);
    const Tensor ew = random_tensor({3, 4}, rng, -1.0, 1.0, false);
    run("encoder", [&] { return sum_all(mul(enc.forward(batch), ew)); }, enc.params().tensors());

    for (auto kind : kAggregators) {
      const auto agg = make_aggregator(small_aggregator(kind, 4, 3), rng);
      const Tensor set = random_tensor({3, 4}, rng);
      const Tensor aw = random_tensor({3}, rng, -1.0, 1.0, false);
      std::vector<Tensor> wrt = agg->params().tensors();
      wrt.push_back(set);
      run(to_string(kind), [&] { return sum_all(mul(agg->forward(set), aw)); }, wrt);
    }

    ProjectionConfig pc;
    pc.input_dim = 4;
    pc.hidden_dim = 6;
    pc.out_dim = 3;
    const ProjectionHead head(pc, rng);
    const Tensor px = random_tensor({3, 4}, rng);
    const Tensor pw = random_tensor({3, 3}, rng, -1.0, 1.0, false);
    std::vector<Tensor> pwrt = head.params().tensors();
    pwrt.push_back(px);
    run("projection", [&] { return sum_all(mul(head.forward(px), pw)); }, pwrt);

    const Tensor logits = random_tensor({4, 3}, rng, -2.0, 2.0);
    const std::vector<int> labels{0, 2, 1, 2};
    run("cross_entropy", [&] { return cross_entropy_loss(logits, labels); }, {logits});
    const Tensor pred = random_tensor_off_kink({5}, rng, 0.05);
    const Tensor zero = Tensor::vector({0, 0, 0, 0, 0});
    run("l1", [&] { return l1_loss(pred, zero); }, {pred});
    const Tensor raw = random_tensor({6, 4}, rng);
    const std::vector<int> src{0, 1, 0};
    run("simclr", [&] { return simclr_loss(l2_normalize(raw, 1), 0.5); }, {raw});
    run("supcon", [&] { return supcon_loss(l2_normalize(raw, 1), src, 0.5); }, {raw});
    const Tensor p1 = random_tensor({3, 4}, rng), p2 = random_tensor({3, 4}, rng);
    const Tensor z1 = random_tensor({3, 4}, rng, -1.0, 1.0, false);
    const Tensor z2 = random_tensor({3, 4}, rng, -1.0, 1.0, false);
    run("simsiam", [&] { return simsiam_loss(p1, z1, p2, z2); }, {p1, p2});
  }
  const double elapsed = seconds_since(t0);
  tally.check(elapsed < 60.0, "runtime " + fmt(elapsed) + " s");
  return {tally.ok(), tally.summary() + ", worst relative error " + fmt(worst) + ", " + fmt(elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Permutation invariance

Outcome permutation_invariance() {
  Rng rng(202);
  EncoderConfig ec;
  ec.input_dim = 6;
  ec.hidden_dims = {12};
  ec.embed_dim = 8;
  const Encoder enc(ec, rng);
  double worst = 0.0;
  for (auto kind : kAggregators) {
    const auto agg = make_aggregator(small_aggregator(kind, 8, 5), rng);
    const Tensor set = random_tensor({9, 6}, rng, -1.0, 1.0, false);
    const auto base = coarse_forward(enc, *agg, set).to_vector();
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (int t = 0; t < 50; ++t) {
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<Tensor> rows;
      for (auto p : perm) rows.push_back(slice_rows(set, p, p + 1));
      const auto out = coarse_forward(enc, *agg, concat(rows, 0)).to_vector();
      for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out[i] - base[i]));
    }
  }
  return {worst <= 1e-8, "5 aggregators x 50 permutations, max |diff| " + fmt(worst)};
}

// ---------------------------------------------------------------------------
// 3. Contrastive losses

Outcome contrastive_oracles() {
  Rng rng(303);
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    const std::size_t n = 1 + static_cast<std::size_t>(b % 4);
    const Tensor z = random_unit_rows(2 * n, 6, rng);
    std::vector<int> labels(n), rows;
    for (int& l : labels) l = static_cast<int>(rng() % 2);
    for (int l : labels) {
      rows.push_back(l);
      rows.push_back(l);
    }
    const double tau = 0.07;
    worst = std::max(worst, std::abs(simclr_loss(z, tau, Reduction::sum).item() -
                                     simclr_sum_oracle(to_rows(z), tau)));
    worst = std::max(worst, std::abs(supcon_loss(z, labels, tau, Reduction::sum).item() -
                                     supcon_sum_oracle(to_rows(z), rows, tau)));
  }
  double closed = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const Tensor v = random_unit_rows(1, 3, rng);
    const Tensor z = concat(std::vector<Tensor>(2 * n, v), 0);
    closed = std::max(closed, std::abs(supcon_loss(z, std::vector<int>(n, 3)).item() -
                                       std::log(2.0 * static_cast<double>(n) - 1.0)));
  }
  return {worst <= 1e-10 && closed <= 1e-10,
          "100 batches max |diff| " + fmt(worst) + ", identical-label closed form " + fmt(closed)};
}

// ---------------------------------------------------------------------------
// 4. Classifiers

MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

Outcome classifier_oracles() {
  Rng rng(404);
  double rc_residual = 0.0;
  double lr_gap = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const MatrixXd x = gaussian(25, 6, rng);
    std::vector<int> y(25);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 5);
    const double alpha = 0.5 + rep;
    const RidgeModel m = rc_fit(x, y, 5, alpha);
    MatrixXd a(25, 7);
    a << x, MatrixXd::Ones(25, 1);
    MatrixXd w(7, 5);
    w << m.weights, m.bias.transpose();
    MatrixXd lhs = a.transpose() * a;
    lhs.diagonal().head(6).array() += alpha;
    rc_residual = std::max(rc_residual, (lhs * w - a.transpose() * ridge_targets(y, 5)).cwiseAbs().maxCoeff());

    const LrOptions opts{1.0, 1000, 1e-6};
    const LogisticModel fit = lr_fit(x, y, 5, opts);
    const LogisticModel ref = lr_fit(x, y, 5, {opts.lambda, 10 * opts.max_iter, opts.tol / 10.0});
    lr_gap = std::max(lr_gap, std::abs(fit.objective - ref.objective));
  }

  // Hand-built: two classes on the x axis, third far up.
  MatrixXd s(6, 2);
  s << 1, 0, 3, 0, -1, 0, -3, 0, 0, 10, 0, 12;
  const std::vector<int> sy{0, 0, 1, 1, 2, 2};
  const NearestCentroid nc = nc_fit(s, sy, 3);
  MatrixXd expect(3, 2);
  expect << 2, 0, -2, 0, 0, 11;
  MatrixXd q(5, 2);
  q << 0.1, 0, -0.1, 0, 0, 6, 0, 5, 100, 0;
  // (0, 5): distance^2 to (2,0) is 29 and to (0,11) is 36.
  const std::vector<int> want{0, 1, 2, 0, 0};
  const bool nc_exact = nc.centroids == expect && nc_predict(nc, q) == want;
  return {rc_residual < 1e-8 && lr_gap <= 1e-6 && nc_exact,
          "RC residual " + fmt(rc_residual) + ", LR objective gap " + fmt(lr_gap) +
              ", NC fixtures " + (nc_exact ? "exact" : "wrong")};
}

// ---------------------------------------------------------------------------
// 5. Latent augmentation

Outcome latent_augmentation() {
  Rng rng(505);
  MatrixXd base = gaussian(400, 3, rng);
  base.col(0) *= 2.0;
  base.col(1) += 0.5 * base.col(0);
  const BaseDictionary dict = la_build(base, 1, 3);
  const MatrixXd draws = la_sample(dict, VectorXd::Zero(3), 10000, rng);
  const VectorXd mu = draws.colwise().mean();
  const MatrixXd centered = draws.rowwise() - mu.transpose();
  const MatrixXd cov = centered.transpose() * centered / 9999.0;
  const double rel = (cov - dict.covariances[0]).norm() / dict.covariances[0].norm();

  const MatrixXd support = gaussian(5, 3, rng);
  const std::vector<int> y{0, 1, 2, 3, 4};
  const LabeledMatrix out = la_expand(dict, support, y, 100, rng);
  bool expansion = out.x.rows() == 5 * 101;
  for (std::size_t r = 0; r < out.y.size(); ++r) expansion = expansion && out.y[r] == static_cast<int>(r / 101);
  return {rel <= 0.05 && expansion, "covariance Frobenius rel. error " + fmt(rel) +
                                        ", expansion " + std::to_string(out.x.rows()) + " rows from 5"};
}

// ---------------------------------------------------------------------------
// 6. Ordering: coarse pretraining vs random init vs SimCLR

Outcome ordering() {
  const auto t0 = Clock::now();
  int wins = 0;
  std::string scores;
  for (int r = 0; r < 5; ++r) {
    SyntheticSpec spec;
    spec.hierarchy = HierarchySpec::uniform(20, 5);
    spec.per_class = 520;
    spec.dim = 64;
    spec.sigma_fine = 3.0;
    spec.sigma_super = 1.0;
    spec.seed = mix_seed(r, 100);
    auto [train, test] = split_per_class(gen_synthetic_hierarchy(spec), 20);
    auto pool = std::make_shared<const Dataset>(std::move(train));
    const CoarseCorpus corpus = build_most_frequent_sets(pool, 2000, {6, 10}, mix_seed(r, 1));

    // Shared by all three arms: architecture, optimizer, budget, augmentation.
    PretrainSpec ps;
    ps.epochs = 10;
    ps.batch_size = 16;
    ps.instance_batch_size = 128;
    ps.augmentation = AugmentPolicy::noise;
    ps.seed = mix_seed(r, 2);
    ps.encoder.hidden_dims = {128};
    ps.encoder.embed_dim = 64;
    ps.aggregator.kind = AggregatorKind::attn_mil;
    ps.aggregator.hidden_dim = 64;

    ProtocolOptions opt;
    opt.tasks = 200;
    opt.classifiers = {ClassifierKind::nearest_centroid};
    opt.seed = mix_seed(r, 3);
    auto nc_f1 = [&](PretrainMethod method) {
      PretrainSpec s = ps;
      s.method = method;
      s.loss = default_loss(method);
      return evaluate_encoder(pretrain_coarse(s, corpus).encoder, test, opt).arm("NC").f1_summary.mean;
    };
    const double fsp = nc_f1(PretrainMethod::facile_fsp);
    const double rnd = nc_f1(PretrainMethod::random_init);
    const double simclr = nc_f1(PretrainMethod::simclr);
    const bool win = fsp >= rnd + 0.10 && fsp > simclr;
    wins += win;
    scores += " [" + fmt(fsp) + "/" + fmt(rnd) + "/" + fmt(simclr) + (win ? "" : " x") + "]";
  }
  const double elapsed = seconds_since(t0);
  return {wins >= 4 && elapsed < 600.0, std::to_string(wins) + "/5 replicates, NC F1 fsp/random/simclr" +
                                            scores + ", " + fmt(elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// 7. Risk curves

Outcome risk_curves() {
  const auto t0 = Clock::now();
  double planted = 0.0;
  for (double gamma : {0.3, 0.8, 1.5}) {
    std::vector<RiskPoint> pts;
    for (std::size_t n : {10, 20, 40}) pts.push_back({n, 0, 2.5 / std::pow(static_cast<double>(n), gamma)});
    const RiskCurve c = fit_risk_curve(pts);
    planted = std::max({planted, std::abs(c.gamma - gamma), std::abs(c.c() - 2.5), c.residual_rms});
  }

  RiskExperimentConfig cfg;
  cfg.data.hierarchy = HierarchySpec::uniform(20, 5);
  cfg.data.per_class = 525;
  cfg.data.dim = 64;
  cfg.data.sigma_fine = 3.0;
  cfg.data.sigma_super = 1.0;
  cfg.test_per_class = 25;
  cfg.n_grid = {10, 20, 40};
  cfg.m0 = 1.0;
  cfg.tasks = 200;
  cfg.pretrain.epochs = 10;
  cfg.pretrain.augmentation = AugmentPolicy::noise;
  cfg.pretrain.encoder.hidden_dims = {128};
  cfg.pretrain.encoder.embed_dim = 64;
  cfg.pretrain.aggregator.kind = AggregatorKind::attn_mil;
  cfg.pretrain.aggregator.hidden_dim = 64;
  int positive = 0, ordered = 0;
  std::string gammas;
  for (int r = 0; r < 10; ++r) {
    const RiskCurve lin = run_risk_experiment(Growth::linear, cfg, mix_seed(r, 7));
    const RiskCurve quad = run_risk_experiment(Growth::quadratic, cfg, mix_seed(r, 7));
    positive += lin.gamma > 0.0 && quad.gamma > 0.0;
    ordered += quad.gamma >= lin.gamma;
    gammas += " " + fmt(lin.gamma) + "/" + fmt(quad.gamma);
  }
  const double elapsed = seconds_since(t0);
  return {positive >= 7 && ordered >= 7 && planted <= 1e-12 && elapsed < 900.0,
          "gamma>0 in " + std::to_string(positive) + "/10, quadratic>=linear in " +
              std::to_string(ordered) + "/10, gamma lin/quad" + gammas + ", planted fit error " +
              fmt(planted) + ", " + fmt(elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// 8. Protocol statistics

Dataset unstructured_dataset(int classes, int per, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.hierarchy = HierarchySpec::uniform(classes, 1);
  d.dim = dim;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per; ++i) {
      std::vector<double> f(dim);
      for (double& v : f) v = standard_normal(rng);
      d.items.push_back({f, c, c});
    }
  }
  return d;
}

Outcome protocol_statistics() {
  const Dataset d = unstructured_dataset(10, 30, 8, 808);
  ProtocolOptions opt;
  opt.tasks = 500;
  opt.seed = 8;
  const ArmReport perfect = evaluate_predictions(d, opt, [](const MetaTask& t) { return t.query_labels; });
  const bool perfect_ok = perfect.f1_summary.mean == 1.0 && perfect.f1_summary.ci95 == 0.0;

  // The features carry no label information, so the encoder is at chance.
  Rng rng(809);
  const MatrixXd z = gaussian(static_cast<Eigen::Index>(d.size()), 8, rng).rowwise().normalized();
  opt.classifiers = {ClassifierKind::nearest_centroid};
  const double acc = evaluate_protocol(z, d, opt).arm("NC").acc_summary.mean;
  const bool chance_ok = acc >= 0.16 && acc <= 0.24;

  std::vector<double> small(500), big(2000);
  for (double& v : small) v = uniform(rng, 0.0, 1.0);
  for (double& v : big) v = uniform(rng, 0.0, 1.0);
  const double ratio = summarize(big).ci95 / summarize(small).ci95;
  const bool ratio_ok = std::abs(ratio - 0.5) <= 0.05;
  return {perfect_ok && chance_ok && ratio_ok,
          "perfect F1 " + fmt(perfect.f1_summary.mean) + " ci95 " + fmt(perfect.f1_summary.ci95) +
              ", chance ACC " + fmt(acc) + ", ci95 ratio at 4x tasks " + fmt(ratio)};
}

// ---------------------------------------------------------------------------
// 9. Reproducibility through the CLI

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + FACILE_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility() {
  const nlohmann::json cfg = {{"seed", 17},
                              {"data.num_super", 5},
                              {"data.fine_per_super", 4},
                              {"data.per_class", 40},
                              {"data.test_per_class", 25},
                              {"data.dim", 16},
                              {"coarse.num_sets", 300},
                              {"pretrain.epochs", 3},
                              {"encoder.hidden_dims", nlohmann::json::array({32})},
                              {"encoder.embed_dim", 16},
                              {"aggregator.hidden_dim", 16},
                              {"eval.tasks", 100}};
  std::vector<std::string> summaries;
  for (const char* name : {"facile_accept_run_a", "facile_accept_run_b"}) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_json_file(dir / "cfg.json", cfg);
    const std::string common = "--config \"" + (dir / "cfg.json").string() + "\" --out \"" + dir.string() + "\"";
    for (const char* step : {"gen-data", "pretrain", "evaluate"}) {
      const int code = run_cli(std::string(step) + " " + common, dir / "log.txt");
      if (code != 0) return {false, std::string(step) + " exited with " + std::to_string(code) + ": " + slurp(dir / "log.txt")};
    }
    summaries.push_back(slurp(dir / "summary.json"));
  }
  const bool same = !summaries[0].empty() && summaries[0] == summaries[1];
  return {same, "summary.json " + std::to_string(summaries[0].size()) + " bytes, " +
                    (same ? "byte-identical" : "differs") + " across two runs"};
}

// ---------------------------------------------------------------------------
// 10. CIFAR-100 binary format

Outcome cifar_format() {
  const fs::path path = fs::temp_directory_path() / "facile_accept_cifar.bin";
  std::vector<unsigned char> first(kCifarPixels), second(kCifarPixels);
  for (std::size_t i = 0; i < kCifarPixels; ++i) {
    first[i] = static_cast<unsigned char>((7 * i) % 256);
    second[i] = static_cast<unsigned char>(255 - i % 256);
  }
  write_cifar_fixture(path.string(), {{3, 41, first}, {19, 99, second}});
  const Dataset d = read_cifar100(path);
  bool exact = d.size() == 2 && d[0].super_label == 3 && d[0].fine_label == 41 &&
               d[1].super_label == 19 && d[1].fine_label == 99;
  for (std::size_t i = 0; exact && i < kCifarPixels; ++i) {
    exact = d[0].features[i] == first[i] / 255.0 && d[1].features[i] == second[i] / 255.0;
  }

  const std::string bytes = slurp(path);
  int rejected = 0, tried = 0;
  for (std::size_t cut : {std::size_t{1}, std::size_t{3073}, 2 * kCifarRecordBytes - 1, 2 * kCifarRecordBytes + 1}) {
    const fs::path bad = fs::temp_directory_path() / "facile_accept_cifar_bad.bin";
    std::string body = bytes.substr(0, std::min(cut, bytes.size()));
    body.resize(cut, '\0');
    std::ofstream(bad, std::ios::binary).write(body.data(), static_cast<std::streamsize>(body.size()));
    ++tried;
    try {
      read_cifar100(bad);
    } catch (const FormatError&) {
      ++rejected;
    }
    fs::remove(bad);
  }
  fs::remove(path);
  return {exact && rejected == tried, std::string("2-record round trip ") + (exact ? "exact" : "wrong") +
                                          ", malformed lengths rejected " + std::to_string(rejected) + "/" +
                                          std::to_string(tried)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradients match finite differences", gradients},
      {"aggregators are permutation invariant", permutation_invariance},
      {"contrastive losses match loop oracles", contrastive_oracles},
      {"classifiers match their oracles", classifier_oracles},
      {"latent augmentation covariance and count", latent_augmentation},
      {"coarse pretraining beats random init and SimCLR", ordering},
      {"risk curves decay faster with quadratic growth", risk_curves},
      {"protocol statistics", protocol_statistics},
      {"pipeline is byte-reproducible", reproducibility},
      {"CIFAR-100 binary round trip", cifar_format},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    failures += !out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": "
              << out.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
