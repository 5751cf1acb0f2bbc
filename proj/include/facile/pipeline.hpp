#pragma once

// Two-stage pipeline: pretrain an instance encoder from coarse set-level
// labels (or one of the baseline objectives), then embed fine-grained data
// with the frozen encoder and fit per-task fine predictors.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "facile/augment.hpp"
#include "facile/datasets.hpp"
#include "facile/fewshot_eval.hpp"
#include "facile/models.hpp"
#include "facile/optim.hpp"

namespace facile {

enum class PretrainMethod { facile_fsp, facile_supcon, fsp_patch, simclr, simsiam, random_init };
enum class CoarseLoss { ce, l1, supcon, simclr, simsiam, none };
enum class AugmentPolicy { none, simple, strong, noise };

const char* to_string(PretrainMethod method);
const char* to_string(CoarseLoss loss);
const char* to_string(AugmentPolicy policy);
PretrainMethod pretrain_method_from_string(const std::string& name);
CoarseLoss coarse_loss_from_string(const std::string& name);
AugmentPolicy augment_policy_from_string(const std::string& name);

// The loss a method uses when none is given explicitly.
CoarseLoss default_loss(PretrainMethod method);

struct PretrainSpec {
  PretrainMethod method = PretrainMethod::facile_fsp;
  CoarseLoss loss = CoarseLoss::ce;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;            // sets per step for facile_* and fsp_patch
  std::size_t instance_batch_size = 128;  // instances per step for simclr and simsiam
  SgdConfig sgd;                          // total_steps is derived from the data
  AugmentPolicy augmentation = AugmentPolicy::none;
  NoiseAugmentOptions noise;
  double temperature = 0.07;
  std::uint64_t seed = 0;
  EncoderConfig encoder;
  AggregatorConfig aggregator;
  ProjectionConfig projection;

  // ConfigError for an incompatible method/loss pair or a bad hyperparameter.
  void validate() const;
  nlohmann::json to_json() const;
};

// Fills the data-dependent dimensions (encoder input, aggregator input and
// output, projection input) for training on `corpus`.
PretrainSpec resolve_spec(PretrainSpec spec, const CoarseCorpus& corpus);

struct PretrainResult {
  PretrainSpec spec;  // resolved
  Encoder encoder;
  std::shared_ptr<const SetAggregator> aggregator;  // set-level methods only
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;  // mean step loss per epoch
  std::size_t steps = 0;

  double initial_loss() const { return step_losses.empty() ? 0.0 : step_losses.front(); }
  double final_loss() const { return step_losses.empty() ? 0.0 : step_losses.back(); }
};

// Minibatch SGD with the cosine schedule for spec.epochs passes. Set-level
// methods use the coarse labels; fsp_patch hands each member its set's label;
// simclr and simsiam train on the distinct member instances and never read
// labels; random_init returns the seeded encoder untouched.
// DivergenceError naming the step on a non-finite loss.
PretrainResult pretrain_coarse(const PretrainSpec& spec, const CoarseCorpus& corpus);

// Coarse loss of `aggregator(encoder(set))` averaged over the whole corpus,
// without augmentation. Only for ce and l1.
double coarse_corpus_loss(const Encoder& encoder, const SetAggregator& aggregator,
                          const CoarseCorpus& corpus, CoarseLoss loss);

// Encoder features of `instances` rows, l2-normalized, one row per input.
MatrixXd embed_rows(const Encoder& encoder, const MatrixXd& instances);
MatrixXd embed_fine(const Encoder& encoder, const Dataset& data);
MatrixXd embed_fine(const Encoder& encoder, const Dataset& data,
                    std::span<const std::size_t> indices);

// Raw feature matrix of a dataset (or a subset), one row per instance.
MatrixXd feature_matrix(const Dataset& data);
MatrixXd feature_matrix(const Dataset& data, std::span<const std::size_t> indices);

FinePredictor fit_fine(const FinePredictorSpec& spec, const MatrixXd& embedded_support,
                       std::span<const int> labels, int classes,
                       const BaseDictionary* dict = nullptr, Rng* rng = nullptr);

// f(l2_normalize(e(x))) for every row of `instances`.
std::vector<int> predict(const FinePredictor& predictor, const Encoder& encoder,
                         const MatrixXd& instances);

// Distinct member indices of the corpus, ascending.
std::vector<std::size_t> corpus_instances(const CoarseCorpus& corpus);

// Base dictionary from the encoder's embeddings of the pretraining corpus.
BaseDictionary build_base_dictionary(const Encoder& encoder, const CoarseCorpus& corpus, int k,
                                     std::uint64_t seed);

// Embeds `data` and runs the meta-task protocol.
EvalReport evaluate_encoder(const Encoder& encoder, const Dataset& data,
                            const ProtocolOptions& options, const BaseDictionary* dict = nullptr);

// ---------------------------------------------------------------------------
// Persistence

// Checkpoint with a header carrying both model configs and the resolved spec.
void save_pretrain_checkpoint(const std::filesystem::path& path, const PretrainResult& result);

struct LoadedModel {
  Encoder encoder;
  std::shared_ptr<const SetAggregator> aggregator;
  nlohmann::json header;
};

// FormatError if the document's shapes disagree with its header.
LoadedModel load_pretrain_checkpoint(const std::filesystem::path& path);

// Spec, seeds, dataset digests, loss trace endpoints and checkpoint path.
nlohmann::json run_manifest(const PretrainResult& result, const CoarseCorpus& corpus,
                            const std::filesystem::path& checkpoint);

}  // namespace facile
