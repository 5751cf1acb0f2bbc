#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"

#include "facile/error.hpp"
#include "facile/pipeline.hpp"

using namespace facile;

namespace {

DatasetPtr small_data(std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.hierarchy = HierarchySpec::uniform(4, 3);
  spec.per_class = 25;
  spec.dim = 10;
  spec.sigma_fine = 0.5;
  spec.sigma_super = 2.0;
  spec.seed = seed;
  return std::make_shared<const Dataset>(gen_synthetic_hierarchy(spec));
}

PretrainSpec small_spec(PretrainMethod method) {
  PretrainSpec s;
  s.method = method;
  s.loss = default_loss(method);
  s.epochs = 3;
  s.batch_size = 8;
  s.instance_batch_size = 32;
  s.sgd.lr0 = 0.05;
  s.seed = 5;
  s.encoder.hidden_dims = {16};
  s.encoder.embed_dim = 8;
  s.aggregator.hidden_dim = 8;
  s.projection.hidden_dim = 8;
  s.projection.out_dim = 4;
  if (method == PretrainMethod::simclr || method == PretrainMethod::simsiam ||
      method == PretrainMethod::facile_supcon) {
    s.augmentation = AugmentPolicy::noise;
  }
  return s;
}

std::vector<double> flat_params(const Encoder& e) {
  std::vector<double> out;
  for (const auto& p : e.params().entries()) {
    const auto v = p.tensor.to_vector();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

}  // namespace

TEST_CASE("method and loss names round trip") {
  for (auto m : {PretrainMethod::facile_fsp, PretrainMethod::facile_supcon, PretrainMethod::fsp_patch,
                 PretrainMethod::simclr, PretrainMethod::simsiam, PretrainMethod::random_init}) {
    CHECK(pretrain_method_from_string(to_string(m)) == m);
  }
  CHECK(coarse_loss_from_string("l1") == CoarseLoss::l1);
  CHECK_THROWS_AS(pretrain_method_from_string("moco"), ConfigError);
  PretrainSpec bad = small_spec(PretrainMethod::simclr);
  bad.augmentation = AugmentPolicy::none;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  PretrainSpec mismatch = small_spec(PretrainMethod::facile_fsp);
  mismatch.loss = CoarseLoss::simsiam;
  CHECK_THROWS_AS(mismatch.validate(), ConfigError);
}

TEST_CASE("every method trains and is deterministic") {
  const auto data = small_data();
  for (auto m : {PretrainMethod::facile_fsp, PretrainMethod::facile_supcon, PretrainMethod::fsp_patch,
                 PretrainMethod::simclr, PretrainMethod::simsiam, PretrainMethod::random_init}) {
    CAPTURE(to_string(m));
    const CoarseCorpus corpus = build_most_frequent_sets(data, 40, {6, 10}, 2);
    const PretrainResult a = pretrain_coarse(small_spec(m), corpus);
    const PretrainResult b = pretrain_coarse(small_spec(m), corpus);
    CHECK(flat_params(a.encoder) == flat_params(b.encoder));
    CHECK(a.step_losses == b.step_losses);
    for (double l : a.step_losses) CHECK(std::isfinite(l));
    if (m != PretrainMethod::random_init) CHECK(a.steps > 0);
  }
}

TEST_CASE("unique-count task trains with l1 on scalar output") {
  const auto data = small_data();
  const CoarseCorpus corpus = build_unique_count_sets(data, 40, {6, 10}, 3);
  PretrainSpec s = small_spec(PretrainMethod::facile_fsp);
  s.loss = CoarseLoss::l1;
  const PretrainResult r = pretrain_coarse(s, corpus);
  CHECK(r.spec.aggregator.output_dim == 1);
  CHECK(r.final_loss() < r.initial_loss());
}

TEST_CASE("pretraining never reads fine labels") {
  const auto data = small_data();
  Dataset scrambled = *data;
  for (auto& it : scrambled.items) it.fine_label = (it.fine_label * 7 + 3) % scrambled.hierarchy.num_fine();
  const auto scrambled_ptr = std::make_shared<const Dataset>(scrambled);
  for (auto m : {PretrainMethod::facile_fsp, PretrainMethod::simclr}) {
    const CoarseCorpus c1 = build_most_frequent_sets(data, 30, {6, 10}, 4);
    CoarseCorpus c2 = c1;
    c2.source = scrambled_ptr;
    CHECK(flat_params(pretrain_coarse(small_spec(m), c1).encoder) ==
          flat_params(pretrain_coarse(small_spec(m), c2).encoder));
  }
}

TEST_CASE("fine fitting leaves the encoder frozen and composes") {
  const auto data = small_data();
  const CoarseCorpus corpus = build_most_frequent_sets(data, 60, {6, 10}, 5);
  const PretrainResult r = pretrain_coarse(small_spec(PretrainMethod::facile_fsp), corpus);
  const auto before = flat_params(r.encoder);
  const FineClassIndex index(*data);
  for (std::uint64_t t = 0; t < 20; ++t) {
    const MetaTask task = sample_meta_task(index, 3, 5, 5, t);
    const MatrixXd support = embed_fine(r.encoder, *data, task.support);
    for (auto kind : {ClassifierKind::nearest_centroid, ClassifierKind::logistic_regression,
                      ClassifierKind::ridge}) {
      FinePredictorSpec spec;
      spec.kind = kind;
      const FinePredictor f = fit_fine(spec, support, task.support_labels, 3);
      const MatrixXd raw = feature_matrix(*data, task.query);
      const std::vector<int> chained = predict(f, r.encoder, raw);
      const MatrixXd embedded = embed_fine(r.encoder, *data, task.query);
      std::vector<int> manual;
      switch (kind) {
        case ClassifierKind::nearest_centroid:
          manual = nc_predict(nc_fit(support, task.support_labels, 3), embedded);
          break;
        case ClassifierKind::logistic_regression:
          manual = lr_predict(lr_fit(support, task.support_labels, 3), embedded);
          break;
        case ClassifierKind::ridge:
          manual = rc_predict(rc_fit(support, task.support_labels, 3), embedded);
          break;
      }
      REQUIRE(chained == manual);
      for (Eigen::Index q = 0; q < raw.rows(); ++q) {
        REQUIRE(predict(f, r.encoder, raw.row(q))[0] == chained[static_cast<std::size_t>(q)]);
      }
    }
  }
  CHECK(flat_params(r.encoder) == before);
}

TEST_CASE("support instances predict their own label when separable") {
  SyntheticSpec spec;
  spec.hierarchy = HierarchySpec::uniform(3, 2);
  spec.per_class = 20;
  spec.dim = 6;
  spec.sigma_fine = 0.01;
  spec.sigma_super = 10.0;
  const auto data = std::make_shared<const Dataset>(gen_synthetic_hierarchy(spec));
  const CoarseCorpus corpus = build_most_frequent_sets(data, 20, {6, 10}, 1);
  const PretrainResult r = pretrain_coarse(small_spec(PretrainMethod::random_init), corpus);
  const MetaTask task = sample_meta_task(*data, 5, 3, 2, 9);
  const MatrixXd support = embed_fine(r.encoder, *data, task.support);
  const FinePredictor f = fit_fine({}, support, task.support_labels, 5);
  CHECK(f.predict(support) == task.support_labels);
}

TEST_CASE("embeddings are unit rows") {
  const auto data = small_data();
  Rng rng(1);
  EncoderConfig cfg;
  cfg.input_dim = 10;
  cfg.hidden_dims = {12};
  cfg.embed_dim = 5;
  const Encoder e(cfg, rng);
  const MatrixXd z = embed_fine(e, *data);
  CHECK(z.rows() == static_cast<Eigen::Index>(data->size()));
  CHECK((z.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("fsp coarse loss trends down over epochs") {
  const auto data = small_data(3);
  const CoarseCorpus corpus = build_most_frequent_sets(data, 200, {6, 10}, 6);
  PretrainSpec s = small_spec(PretrainMethod::facile_fsp);
  s.epochs = 30;
  s.batch_size = 16;
  const PretrainResult r = pretrain_coarse(s, corpus);
  REQUIRE(r.epoch_losses.size() == 30);
  std::vector<double> windows;
  for (std::size_t i = 0; i + 5 <= r.epoch_losses.size(); i += 5) {
    windows.push_back(std::accumulate(r.epoch_losses.begin() + static_cast<long>(i),
                                      r.epoch_losses.begin() + static_cast<long>(i + 5), 0.0) / 5.0);
  }
  for (std::size_t w = 1; w < windows.size(); ++w) CHECK(windows[w] <= windows[w - 1] * 1.05);
  CHECK(coarse_corpus_loss(r.encoder, *r.aggregator, corpus, CoarseLoss::ce) < r.initial_loss());
}

TEST_CASE("divergence is reported with the step") {
  const auto data = small_data();
  const CoarseCorpus corpus = build_most_frequent_sets(data, 40, {6, 10}, 2);
  PretrainSpec s = small_spec(PretrainMethod::facile_fsp);
  s.sgd.lr0 = 1e200;
  s.sgd.momentum = 0.0;
  CHECK_THROWS_AS(pretrain_coarse(s, corpus), DivergenceError);
}

TEST_CASE("pretrain checkpoint round trip and manifest") {
  const auto data = small_data();
  const CoarseCorpus corpus = build_most_frequent_sets(data, 40, {6, 10}, 2);
  const PretrainResult r = pretrain_coarse(small_spec(PretrainMethod::facile_fsp), corpus);
  const auto path = std::filesystem::temp_directory_path() / "facile_test_pretrain.json";
  save_pretrain_checkpoint(path, r);
  const LoadedModel m = load_pretrain_checkpoint(path);
  CHECK(flat_params(m.encoder) == flat_params(r.encoder));
  REQUIRE(m.aggregator);
  const Tensor set = Tensor::from({2, 10}, std::vector<double>(20, 0.3));
  CHECK(coarse_forward(m.encoder, *m.aggregator, set).to_vector() ==
        coarse_forward(r.encoder, *r.aggregator, set).to_vector());
  const auto manifest = run_manifest(r, corpus, path);
  CHECK(manifest.at("dataset_digest") == dataset_digest(*data));
  CHECK(manifest.at("final_loss") == r.final_loss());
  CHECK(manifest.contains("created_utc"));
  std::filesystem::remove(path);
}
