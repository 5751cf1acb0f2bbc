#pragma once

// Instance encoders e, set aggregators g, and projection heads.
//
// All models are built from tensor primitives, so a forward pass under a live
// Tape is differentiable end to end.

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "facile/params.hpp"
#include "facile/rng.hpp"
#include "facile/tensor.hpp"

namespace facile {

// Affine map x W + b over the rows of x.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor forward(const Tensor& x) const;
  Linear clone() const;
  void register_params(const std::string& prefix, ParamSet& params) const;

  std::size_t in_dim() const { return weight_.dim(0); }
  std::size_t out_dim() const { return weight_.dim(1); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weight_;  // in x out
  Tensor bias_;    // out
};

// ---------------------------------------------------------------------------

struct EncoderConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{256, 128};
  std::size_t embed_dim = 64;

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

// MLP feature map e: X -> Z with ReLU between layers and a linear output.
class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderConfig config, Rng& rng);

  // B x input_dim -> B x embed_dim. Rows are processed independently.
  Tensor forward(const Tensor& batch) const;

  const EncoderConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  Encoder clone() const;

 private:
  void rebuild_params();

  EncoderConfig config_;
  std::vector<Linear> layers_;
  ParamSet params_;
};

// ---------------------------------------------------------------------------

enum class AggregatorKind { deepset_mean, deepset_sum, deepset_max, attn_mil, set_transformer };

const char* to_string(AggregatorKind kind);
AggregatorKind aggregator_kind_from_string(const std::string& name);

struct AggregatorConfig {
  AggregatorKind kind = AggregatorKind::deepset_mean;
  std::size_t input_dim = 0;  // embedding width fed to the aggregator
  std::size_t hidden_dim = 64;
  std::size_t heads = 4;            // set_transformer only
  std::size_t inducing_points = 3;  // set_transformer only
  std::size_t output_dim = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static AggregatorConfig from_json(const nlohmann::json& j);
  bool operator==(const AggregatorConfig&) const = default;
};

// Attention matrices produced during a forward pass, one per head per stage.
struct AttentionTrace {
  std::vector<Tensor> weights;
};

// Permutation-invariant map g from a set of embeddings (a x d) to a vector.
class SetAggregator {
 public:
  virtual ~SetAggregator() = default;

  // a x input_dim -> output_dim. ContractError for an empty set.
  virtual Tensor forward(const Tensor& set, AttentionTrace* trace = nullptr) const = 0;
  virtual std::unique_ptr<SetAggregator> clone() const = 0;

  const AggregatorConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }

 protected:
  explicit SetAggregator(AggregatorConfig config) : config_(config) {}
  void check_set(const Tensor& set) const;

  AggregatorConfig config_;
  ParamSet params_;
};

// Per-instance fc-ReLU-fc, pooling (mean, sum or max) over the set, final affine.
class DeepSet final : public SetAggregator {
 public:
  DeepSet(AggregatorConfig config, Rng& rng);
  Tensor forward(const Tensor& set, AttentionTrace* trace = nullptr) const override;
  std::unique_ptr<SetAggregator> clone() const override;

 private:
  void rebuild_params();
  Linear phi1_, phi2_, rho_;
};

// Attention-based MIL pooling, simple (ungated) form:
//   score_i = w . tanh(V h_i + b_V) + b_w,  weights = softmax(score),
//   output = affine(sum_i weights_i h_i).
class AttentionMil final : public SetAggregator {
 public:
  AttentionMil(AggregatorConfig config, Rng& rng);
  Tensor forward(const Tensor& set, AttentionTrace* trace = nullptr) const override;
  std::unique_ptr<SetAggregator> clone() const override;

  // Attention weights of `set` (length a, sums to 1).
  Tensor attention_weights(const Tensor& set) const;

 private:
  void rebuild_params();
  Linear attend_, score_, head_;
};

// One ISAB block followed by PMA with a single seed vector and an affine head.
// Multihead attention uses scaled dot products with per-head width hidden/heads
// and the residual form O = Q + softmax(Q K^T / sqrt(d_h)) V, O + relu(O W + b).
class SetTransformer final : public SetAggregator {
 public:
  SetTransformer(AggregatorConfig config, Rng& rng);
  Tensor forward(const Tensor& set, AttentionTrace* trace = nullptr) const override;
  std::unique_ptr<SetAggregator> clone() const override;

 private:
  struct Mab {
    Linear q, k, v, o;
    Mab clone() const;
  };
  Tensor mab(const Mab& block, const Tensor& queries, const Tensor& keys,
             AttentionTrace* trace) const;
  void rebuild_params();

  Tensor inducing_;  // inducing_points x hidden
  Tensor seed_;      // 1 x hidden
  Mab isab_in_, isab_out_, pma_;
  Linear head_;
};

std::unique_ptr<SetAggregator> make_aggregator(const AggregatorConfig& config, Rng& rng);

// ---------------------------------------------------------------------------

struct ProjectionConfig {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 64;
  std::size_t out_dim = 32;

  void validate() const;
  nlohmann::json to_json() const;
};

// affine -> ReLU -> affine -> row l2-normalization (norm floored at 1e-12).
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(ProjectionConfig config, Rng& rng);

  Tensor forward(const Tensor& batch) const;
  const ProjectionConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  ProjectionHead clone() const;

 private:
  void rebuild_params();
  ProjectionConfig config_;
  Linear first_, second_;
  ParamSet params_;
};

// Unnormalized affine -> ReLU -> affine, used for the SimSiam projector and predictor.
class TwoLayerMlp {
 public:
  TwoLayerMlp() = default;
  TwoLayerMlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

  Tensor forward(const Tensor& batch) const;
  const ParamSet& params() const { return params_; }

 private:
  Linear first_, second_;
  ParamSet params_;
};

// ---------------------------------------------------------------------------

// g(phi^e(s)): encode every member of the set, then aggregate.
Tensor coarse_forward(const Encoder& encoder, const SetAggregator& aggregator, const Tensor& set);

// Checkpoint helpers; the header records both configs for shape validation on load.
nlohmann::json model_header(const EncoderConfig& encoder,
                            const AggregatorConfig* aggregator = nullptr);

}  // namespace facile
