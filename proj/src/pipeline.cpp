#include "facile/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numeric>
#include <set>

#include "facile/error.hpp"
#include "facile/losses.hpp"
#include "facile/params.hpp"

namespace facile {

namespace {

template <typename Enum, std::size_t N>
Enum enum_from_string(const std::string& name, const Enum (&values)[N], const char* what) {
  for (Enum v : values) {
    if (name == to_string(v)) return v;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + name + "'");
}

// Row-major tensor -> Eigen matrix.
MatrixXd to_matrix(const Tensor& t) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                                    static_cast<Eigen::Index>(t.dim(1)));
}

Tensor to_tensor(const MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      v.data(), m.rows(), m.cols()) = m;
  return Tensor::from({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                      std::move(v));
}

class Augmenter {
 public:
  Augmenter(const PretrainSpec& spec, const Dataset& data) : spec_(spec), data_(data) {
    strong_ = spec.method == PretrainMethod::simsiam ? StrongAugmentOptions::simsiam()
                                                     : StrongAugmentOptions{};
  }

  // Appends one (possibly augmented) view of instance `idx` to `out`.
  void append(std::size_t idx, Rng& rng, std::vector<double>& out) const {
    const auto& f = data_[idx].features;
    switch (spec_.augmentation) {
      case AugmentPolicy::none: out.insert(out.end(), f.begin(), f.end()); return;
      case AugmentPolicy::noise: {
        const auto v = augment_noise(f, rng, spec_.noise);
        out.insert(out.end(), v.begin(), v.end());
        return;
      }
      case AugmentPolicy::simple: {
        const auto v = augment_simple(f, data_.image, rng);
        out.insert(out.end(), v.begin(), v.end());
        return;
      }
      case AugmentPolicy::strong: {
        const auto v = augment_strong(f, data_.image, rng, strong_);
        out.insert(out.end(), v.begin(), v.end());
        return;
      }
    }
  }

 private:
  const PretrainSpec& spec_;
  const Dataset& data_;
  StrongAugmentOptions strong_;
};

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Trainable state shared by every objective.
struct Trainer {
  const PretrainSpec& spec;
  const CoarseCorpus& corpus;
  const Dataset& data;
  Augmenter augmenter;
  Encoder encoder;
  std::unique_ptr<SetAggregator> aggregator;
  Linear patch_head;
  ProjectionHead projection;
  TwoLayerMlp projector, predictor;
  std::vector<Tensor> params;
  Rng aug_rng;

  Trainer(const PretrainSpec& s, const CoarseCorpus& c)
      : spec(s), corpus(c), data(*c.source), augmenter(s, *c.source), aug_rng(mix_seed(s.seed, 2)) {
    Rng init(mix_seed(spec.seed, 0));
    encoder = Encoder(spec.encoder, init);
    auto take = [this](const ParamSet& p) {
      for (const Tensor& t : p.tensors()) params.push_back(t);
    };
    take(encoder.params());
    switch (spec.method) {
      case PretrainMethod::facile_fsp:
        aggregator = make_aggregator(spec.aggregator, init);
        take(aggregator->params());
        break;
      case PretrainMethod::facile_supcon:
        aggregator = make_aggregator(spec.aggregator, init);
        projection = ProjectionHead(spec.projection, init);
        take(aggregator->params());
        take(projection.params());
        break;
      case PretrainMethod::fsp_patch: {
        patch_head = Linear(spec.encoder.embed_dim, static_cast<std::size_t>(corpus.num_labels()), init);
        ParamSet p;
        patch_head.register_params("patch_head", p);
        take(p);
        break;
      }
      case PretrainMethod::simclr:
        projection = ProjectionHead(spec.projection, init);
        take(projection.params());
        break;
      case PretrainMethod::simsiam:
        projector = TwoLayerMlp(spec.encoder.embed_dim, spec.projection.hidden_dim,
                                spec.projection.out_dim, init);
        predictor = TwoLayerMlp(spec.projection.out_dim, spec.projection.hidden_dim,
                                spec.projection.out_dim, init);
        take(projector.params());
        take(predictor.params());
        break;
      case PretrainMethod::random_init: break;
    }
  }

  Tensor batch_tensor(std::vector<double> values) const {
    const std::size_t rows = values.size() / data.dim;
    return Tensor::from({rows, data.dim}, std::move(values));
  }

  // Encodes the members of each set (one augmented view) and aggregates.
  std::vector<Tensor> set_outputs(std::span<const std::size_t> sets) {
    std::vector<double> values;
    std::vector<std::size_t> bounds{0};
    for (std::size_t s : sets) {
      for (std::size_t m : corpus.sets[s].members) augmenter.append(m, aug_rng, values);
      bounds.push_back(bounds.back() + corpus.sets[s].members.size());
    }
    const Tensor h = encoder.forward(batch_tensor(std::move(values)));
    std::vector<Tensor> out;
    out.reserve(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) {
      out.push_back(aggregator->forward(slice_rows(h, bounds[i], bounds[i + 1])));
    }
    return out;
  }

  Tensor facile_fsp_loss(std::span<const std::size_t> sets) {
    const std::vector<Tensor> outs = set_outputs(sets);
    std::vector<int> labels;
    for (std::size_t s : sets) labels.push_back(corpus.sets[s].label);
    if (spec.loss == CoarseLoss::l1) {
      std::vector<double> target(labels.begin(), labels.end());
      return l1_loss(concat(outs, 0), Tensor::vector(std::move(target)));
    }
    std::vector<Tensor> rows;
    for (const Tensor& o : outs) rows.push_back(reshape(o, {1, o.numel()}));
    return cross_entropy_loss(concat(rows, 0), labels);
  }

  Tensor facile_supcon_loss(std::span<const std::size_t> sets) {
    // Two views per set, interleaved so rows 2k and 2k + 1 belong to set k.
    std::vector<std::size_t> doubled;
    for (std::size_t s : sets) doubled.insert(doubled.end(), {s, s});
    std::vector<Tensor> rows;
    for (const Tensor& o : set_outputs(doubled)) rows.push_back(reshape(o, {1, o.numel()}));
    std::vector<int> labels;
    for (std::size_t s : sets) labels.push_back(corpus.sets[s].label);
    return supcon_loss(projection.forward(concat(rows, 0)), labels, spec.temperature);
  }

  Tensor fsp_patch_loss(std::span<const std::size_t> sets) {
    std::vector<double> values;
    std::vector<int> labels;
    for (std::size_t s : sets) {
      for (std::size_t m : corpus.sets[s].members) {
        augmenter.append(m, aug_rng, values);
        labels.push_back(corpus.sets[s].label);
      }
    }
    const Tensor logits = patch_head.forward(encoder.forward(batch_tensor(std::move(values))));
    return cross_entropy_loss(logits, labels);
  }

  // Two interleaved views of each instance.
  Tensor two_views(std::span<const std::size_t> instances) {
    std::vector<double> values;
    for (std::size_t i : instances) {
      augmenter.append(i, aug_rng, values);
      augmenter.append(i, aug_rng, values);
    }
    return batch_tensor(std::move(values));
  }

  Tensor simclr_step_loss(std::span<const std::size_t> instances) {
    const Tensor z = projection.forward(encoder.forward(two_views(instances)));
    return simclr_loss(z, spec.temperature);
  }

  Tensor simsiam_step_loss(std::span<const std::size_t> instances) {
    const Tensor x = two_views(instances);
    const std::size_t n = instances.size();
    std::vector<double> first, second;
    const auto v = x.data();
    const std::size_t d = data.dim;
    for (std::size_t k = 0; k < n; ++k) {
      first.insert(first.end(), v.begin() + static_cast<std::ptrdiff_t>(2 * k * d),
                   v.begin() + static_cast<std::ptrdiff_t>((2 * k + 1) * d));
      second.insert(second.end(), v.begin() + static_cast<std::ptrdiff_t>((2 * k + 1) * d),
                    v.begin() + static_cast<std::ptrdiff_t>((2 * k + 2) * d));
    }
    const Tensor z1 = projector.forward(encoder.forward(batch_tensor(std::move(first))));
    const Tensor z2 = projector.forward(encoder.forward(batch_tensor(std::move(second))));
    return simsiam_loss(predictor.forward(z1), z1, predictor.forward(z2), z2);
  }
};

}  // namespace

// ---------------------------------------------------------------------------

const char* to_string(PretrainMethod method) {
  switch (method) {
    case PretrainMethod::facile_fsp: return "facile_fsp";
    case PretrainMethod::facile_supcon: return "facile_supcon";
    case PretrainMethod::fsp_patch: return "fsp_patch";
    case PretrainMethod::simclr: return "simclr";
    case PretrainMethod::simsiam: return "simsiam";
    case PretrainMethod::random_init: return "random_init";
  }
  return "unknown";
}

const char* to_string(CoarseLoss loss) {
  switch (loss) {
    case CoarseLoss::ce: return "ce";
    case CoarseLoss::l1: return "l1";
    case CoarseLoss::supcon: return "supcon";
    case CoarseLoss::simclr: return "simclr";
    case CoarseLoss::simsiam: return "simsiam";
    case CoarseLoss::none: return "none";
  }
  return "unknown";
}

const char* to_string(AugmentPolicy policy) {
  switch (policy) {
    case AugmentPolicy::none: return "none";
    case AugmentPolicy::simple: return "simple";
    case AugmentPolicy::strong: return "strong";
    case AugmentPolicy::noise: return "noise";
  }
  return "unknown";
}

PretrainMethod pretrain_method_from_string(const std::string& name) {
  static const PretrainMethod all[] = {PretrainMethod::facile_fsp, PretrainMethod::facile_supcon,
                                       PretrainMethod::fsp_patch,  PretrainMethod::simclr,
                                       PretrainMethod::simsiam,    PretrainMethod::random_init};
  return enum_from_string(name, all, "pretraining method");
}

CoarseLoss coarse_loss_from_string(const std::string& name) {
  static const CoarseLoss all[] = {CoarseLoss::ce,     CoarseLoss::l1,      CoarseLoss::supcon,
                                   CoarseLoss::simclr, CoarseLoss::simsiam, CoarseLoss::none};
  return enum_from_string(name, all, "loss");
}

AugmentPolicy augment_policy_from_string(const std::string& name) {
  static const AugmentPolicy all[] = {AugmentPolicy::none, AugmentPolicy::simple,
                                      AugmentPolicy::strong, AugmentPolicy::noise};
  return enum_from_string(name, all, "augmentation policy");
}

CoarseLoss default_loss(PretrainMethod method) {
  switch (method) {
    case PretrainMethod::facile_fsp: return CoarseLoss::ce;
    case PretrainMethod::facile_supcon: return CoarseLoss::supcon;
    case PretrainMethod::fsp_patch: return CoarseLoss::ce;
    case PretrainMethod::simclr: return CoarseLoss::simclr;
    case PretrainMethod::simsiam: return CoarseLoss::simsiam;
    case PretrainMethod::random_init: return CoarseLoss::none;
  }
  return CoarseLoss::none;
}

void PretrainSpec::validate() const {
  bool compatible = false;
  switch (method) {
    case PretrainMethod::facile_fsp: compatible = loss == CoarseLoss::ce || loss == CoarseLoss::l1; break;
    case PretrainMethod::facile_supcon: compatible = loss == CoarseLoss::supcon; break;
    case PretrainMethod::fsp_patch: compatible = loss == CoarseLoss::ce; break;
    case PretrainMethod::simclr: compatible = loss == CoarseLoss::simclr; break;
    case PretrainMethod::simsiam: compatible = loss == CoarseLoss::simsiam; break;
    case PretrainMethod::random_init: compatible = loss == CoarseLoss::none; break;
  }
  if (!compatible) {
    throw ConfigError(std::string("pretrain: method ") + to_string(method) +
                      " cannot be trained with loss " + to_string(loss));
  }
  if (method == PretrainMethod::random_init) return;
  if (epochs == 0) throw ConfigError("pretrain: epochs must be >= 1");
  if (batch_size == 0 || instance_batch_size == 0) {
    throw ConfigError("pretrain: batch sizes must be >= 1");
  }
  if (!(sgd.lr0 > 0.0)) throw ConfigError("pretrain: lr must be positive");
  if (sgd.momentum < 0.0 || sgd.momentum >= 1.0) throw ConfigError("pretrain: momentum must be in [0, 1)");
  if (sgd.weight_decay < 0.0) throw ConfigError("pretrain: weight_decay must be >= 0");
  if (!(temperature > 0.0)) throw ConfigError("pretrain: temperature must be positive");
  if ((method == PretrainMethod::simclr || method == PretrainMethod::simsiam) &&
      augmentation == AugmentPolicy::none) {
    throw ConfigError(std::string("pretrain: ") + to_string(method) +
                      " needs an augmentation policy to form two views");
  }
  if (method == PretrainMethod::simclr && instance_batch_size < 2) {
    throw ConfigError("pretrain: simclr needs instance_batch_size >= 2");
  }
}

nlohmann::json PretrainSpec::to_json() const {
  return {{"method", to_string(method)},
          {"loss", to_string(loss)},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"instance_batch_size", instance_batch_size},
          {"lr", sgd.lr0},
          {"momentum", sgd.momentum},
          {"weight_decay", sgd.weight_decay},
          {"augmentation", to_string(augmentation)},
          {"noise_sigma", noise.sigma},
          {"noise_drop", noise.drop_prob},
          {"temperature", temperature},
          {"seed", seed},
          {"encoder", encoder.to_json()},
          {"aggregator", aggregator.to_json()},
          {"projection", projection.to_json()}};
}

PretrainSpec resolve_spec(PretrainSpec spec, const CoarseCorpus& corpus) {
  if (!corpus.source) throw ContractError("pretrain: corpus has no source dataset");
  spec.encoder.input_dim = corpus.source->dim;
  spec.aggregator.input_dim = spec.encoder.embed_dim;
  switch (spec.loss) {
    case CoarseLoss::ce: spec.aggregator.output_dim = static_cast<std::size_t>(corpus.num_labels()); break;
    case CoarseLoss::l1: spec.aggregator.output_dim = 1; break;
    default: spec.aggregator.output_dim = spec.encoder.embed_dim; break;
  }
  spec.projection.input_dim = spec.encoder.embed_dim;
  return spec;
}

PretrainResult pretrain_coarse(const PretrainSpec& raw_spec, const CoarseCorpus& corpus) {
  raw_spec.validate();
  const PretrainSpec spec = resolve_spec(raw_spec, corpus);
  spec.encoder.validate();
  const Dataset& data = *corpus.source;
  if ((spec.augmentation == AugmentPolicy::simple || spec.augmentation == AugmentPolicy::strong) &&
      !data.image.is_image()) {
    throw ConfigError(std::string("pretrain: augmentation '") + to_string(spec.augmentation) +
                      "' needs image data");
  }
  if (spec.augmentation == AugmentPolicy::strong && data.image.channels != 3) {
    throw ConfigError("pretrain: strong augmentation needs 3-channel images");
  }
  if (corpus.sets.empty()) throw ConfigError("pretrain: coarse corpus is empty");
  if (spec.loss == CoarseLoss::ce || spec.method == PretrainMethod::facile_supcon) {
    if (corpus.num_labels() < 2 && spec.loss == CoarseLoss::ce) {
      throw ConfigError("pretrain: cross-entropy needs at least 2 coarse labels");
    }
  }

  Trainer trainer(spec, corpus);
  PretrainResult result;
  result.spec = spec;
  if (spec.method == PretrainMethod::random_init) {
    result.encoder = trainer.encoder;
    return result;
  }

  const bool instance_level =
      spec.method == PretrainMethod::simclr || spec.method == PretrainMethod::simsiam;
  std::vector<std::size_t> items;
  std::size_t batch = spec.batch_size;
  if (instance_level) {
    items = corpus_instances(corpus);
    batch = spec.instance_batch_size;
    if (spec.method == PretrainMethod::simclr && items.size() < 2) {
      throw ConfigError("pretrain: simclr needs at least 2 distinct instances");
    }
  } else {
    items.resize(corpus.sets.size());
    std::iota(items.begin(), items.end(), std::size_t{0});
  }
  const std::size_t per_epoch = ceil_div(items.size(), batch);
  SgdConfig sgd = spec.sgd;
  sgd.total_steps = per_epoch * spec.epochs;
  Sgd optimizer(trainer.params, sgd);
  Rng order(mix_seed(spec.seed, 1));

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    std::shuffle(items.begin(), items.end(), order);
    double epoch_total = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t b = 0; b < items.size(); b += batch) {
      std::size_t e = std::min(items.size(), b + batch);
      // A trailing singleton cannot form a contrastive batch and is skipped.
      if (spec.method == PretrainMethod::simclr && e - b < 2) break;
      const std::span<const std::size_t> chunk(items.data() + b, e - b);
      double value = 0.0;
      {
        Tape tape;
        Tensor loss;
        switch (spec.method) {
          case PretrainMethod::facile_fsp: loss = trainer.facile_fsp_loss(chunk); break;
          case PretrainMethod::facile_supcon: loss = trainer.facile_supcon_loss(chunk); break;
          case PretrainMethod::fsp_patch: loss = trainer.fsp_patch_loss(chunk); break;
          case PretrainMethod::simclr: loss = trainer.simclr_step_loss(chunk); break;
          case PretrainMethod::simsiam: loss = trainer.simsiam_step_loss(chunk); break;
          case PretrainMethod::random_init: break;
        }
        value = loss.item();
        if (!std::isfinite(value)) {
          throw DivergenceError("pretrain: non-finite loss at step " + std::to_string(step) +
                                " (epoch " + std::to_string(epoch) + ")");
        }
        try {
          tape.backward(loss);
        } catch (const DivergenceError& err) {
          throw DivergenceError("pretrain: step " + std::to_string(step) + ": " + err.what());
        }
      }
      optimizer.step(step);
      optimizer.zero_grad();
      result.step_losses.push_back(value);
      epoch_total += value;
      ++epoch_steps;
      ++step;
    }
    result.epoch_losses.push_back(epoch_steps ? epoch_total / static_cast<double>(epoch_steps) : 0.0);
  }
  result.steps = step;
  result.encoder = trainer.encoder;
  if (trainer.aggregator) result.aggregator = std::move(trainer.aggregator);
  return result;
}

double coarse_corpus_loss(const Encoder& encoder, const SetAggregator& aggregator,
                          const CoarseCorpus& corpus, CoarseLoss loss) {
  if (loss != CoarseLoss::ce && loss != CoarseLoss::l1) {
    throw ContractError("coarse_corpus_loss: only ce and l1 are defined per set");
  }
  const Dataset& data = *corpus.source;
  double total = 0.0;
  for (const CoarseSetExample& s : corpus.sets) {
    std::vector<double> values;
    for (std::size_t m : s.members) {
      values.insert(values.end(), data[m].features.begin(), data[m].features.end());
    }
    const Tensor out =
        coarse_forward(encoder, aggregator, Tensor::from({s.members.size(), data.dim}, std::move(values)));
    if (loss == CoarseLoss::l1) {
      total += std::abs(out[0] - static_cast<double>(s.label));
    } else {
      const int label = s.label;
      total += cross_entropy_loss(reshape(out, {1, out.numel()}), std::span<const int>(&label, 1)).item();
    }
  }
  return total / static_cast<double>(corpus.sets.size());
}

// ---------------------------------------------------------------------------

MatrixXd feature_matrix(const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return feature_matrix(data, all);
}

MatrixXd feature_matrix(const Dataset& data, std::span<const std::size_t> indices) {
  MatrixXd out(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(data.dim));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& f = data[indices[i]].features;
    out.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  }
  return out;
}

MatrixXd embed_rows(const Encoder& encoder, const MatrixXd& instances) {
  constexpr Eigen::Index kChunk = 2048;
  MatrixXd out(instances.rows(), static_cast<Eigen::Index>(encoder.config().embed_dim));
  for (Eigen::Index b = 0; b < instances.rows(); b += kChunk) {
    const Eigen::Index n = std::min(kChunk, instances.rows() - b);
    const Tensor h = encoder.forward(to_tensor(instances.middleRows(b, n)));
    out.middleRows(b, n) = to_matrix(h);
  }
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) /= std::max(out.row(i).norm(), 1e-12);
  }
  return out;
}

MatrixXd embed_fine(const Encoder& encoder, const Dataset& data) {
  return embed_rows(encoder, feature_matrix(data));
}

MatrixXd embed_fine(const Encoder& encoder, const Dataset& data,
                    std::span<const std::size_t> indices) {
  return embed_rows(encoder, feature_matrix(data, indices));
}

FinePredictor fit_fine(const FinePredictorSpec& spec, const MatrixXd& embedded_support,
                       std::span<const int> labels, int classes, const BaseDictionary* dict,
                       Rng* rng) {
  return fit_predictor(spec, embedded_support, labels, classes, dict, rng);
}

std::vector<int> predict(const FinePredictor& predictor, const Encoder& encoder,
                         const MatrixXd& instances) {
  return predictor.predict(embed_rows(encoder, instances));
}

std::vector<std::size_t> corpus_instances(const CoarseCorpus& corpus) {
  std::set<std::size_t> unique;
  for (const CoarseSetExample& s : corpus.sets) unique.insert(s.members.begin(), s.members.end());
  return {unique.begin(), unique.end()};
}

BaseDictionary build_base_dictionary(const Encoder& encoder, const CoarseCorpus& corpus, int k,
                                     std::uint64_t seed) {
  const std::vector<std::size_t> members = corpus_instances(corpus);
  return la_build(embed_fine(encoder, *corpus.source, members), k, seed);
}

EvalReport evaluate_encoder(const Encoder& encoder, const Dataset& data,
                            const ProtocolOptions& options, const BaseDictionary* dict) {
  return evaluate_protocol(embed_fine(encoder, data), data, options, dict);
}

// ---------------------------------------------------------------------------

void save_pretrain_checkpoint(const std::filesystem::path& path, const PretrainResult& result) {
  ParamSet all;
  all.extend("", result.encoder.params());
  nlohmann::json header;
  if (result.aggregator) {
    all.extend("", result.aggregator->params());
    header = model_header(result.encoder.config(), &result.aggregator->config());
  } else {
    header = model_header(result.encoder.config());
  }
  header["spec"] = result.spec.to_json();
  save_checkpoint(path, all, header);
}

LoadedModel load_pretrain_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json doc = load_checkpoint_document(path);
  LoadedModel out;
  try {
    out.header = doc.at("header");
    Rng unused(0);
    out.encoder = Encoder(EncoderConfig::from_json(out.header.at("encoder")), unused);
    ParamSet all;
    all.extend("", out.encoder.params());
    if (out.header.contains("aggregator")) {
      auto agg = make_aggregator(AggregatorConfig::from_json(out.header.at("aggregator")), unused);
      all.extend("", agg->params());
      out.aggregator = std::move(agg);
    }
    params_from_json(doc, all);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: '" + path.string() + "' has a malformed header: " + e.what());
  }
  return out;
}

nlohmann::json run_manifest(const PretrainResult& result, const CoarseCorpus& corpus,
                            const std::filesystem::path& checkpoint) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  nlohmann::json m;
  m["spec"] = result.spec.to_json();
  m["seeds"] = {{"pretrain", result.spec.seed},
                {"init", mix_seed(result.spec.seed, 0)},
                {"order", mix_seed(result.spec.seed, 1)},
                {"augment", mix_seed(result.spec.seed, 2)}};
  m["coarse"] = {{"task", to_string(corpus.task)},
                 {"num_sets", corpus.size()},
                 {"size_min", corpus.size_range.min},
                 {"size_max", corpus.size_range.max}};
  m["dataset_digest"] = dataset_digest(*corpus.source);
  m["steps"] = result.steps;
  m["initial_loss"] = result.initial_loss();
  m["final_loss"] = result.final_loss();
  m["checkpoint"] = checkpoint.string();
  m["created_utc"] = stamp;
  return m;
}

}  // namespace facile
