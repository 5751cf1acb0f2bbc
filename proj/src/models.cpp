#include "facile/models.hpp"

#include <cmath>

#include "facile/error.hpp"

namespace facile {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, -bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = uniform_tensor({in, out}, bound, rng);
  bias_ = uniform_tensor({out}, bound, rng);
}

Tensor Linear::forward(const Tensor& x) const { return broadcast_add(matmul(x, weight_), bias_); }

Linear Linear::clone() const {
  Linear l;
  l.weight_ = weight_.clone();
  l.bias_ = bias_.clone();
  return l;
}

void Linear::register_params(const std::string& prefix, ParamSet& params) const {
  params.add(prefix + ".weight", weight_);
  params.add(prefix + ".bias", bias_);
}

// ---------------------------------------------------------------------------
// Encoder

void EncoderConfig::validate() const {
  if (input_dim == 0 || embed_dim == 0) throw ConfigError("encoder: dims must be positive");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("encoder: hidden dims must be positive");
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"input_dim", input_dim}, {"hidden_dims", hidden_dims}, {"embed_dim", embed_dim}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  return c;
}

Encoder::Encoder(EncoderConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  std::size_t in = config_.input_dim;
  for (std::size_t h : config_.hidden_dims) {
    layers_.emplace_back(in, h, rng);
    in = h;
  }
  layers_.emplace_back(in, config_.embed_dim, rng);
  rebuild_params();
}

void Encoder::rebuild_params() {
  params_ = ParamSet();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].register_params("encoder." + std::to_string(i), params_);
  }
}

Tensor Encoder::forward(const Tensor& batch) const {
  if (batch.rank() != 2 || batch.dim(1) != config_.input_dim) {
    throw DimensionError("encoder: input of shape " + shape_str(batch.shape()) +
                         " does not match input_dim " + std::to_string(config_.input_dim));
  }
  Tensor h = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

Encoder Encoder::clone() const {
  Encoder e;
  e.config_ = config_;
  for (const Linear& l : layers_) e.layers_.push_back(l.clone());
  e.rebuild_params();
  return e;
}

// ---------------------------------------------------------------------------
// Aggregators

const char* to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::deepset_mean: return "deepset_mean";
    case AggregatorKind::deepset_sum: return "deepset_sum";
    case AggregatorKind::deepset_max: return "deepset_max";
    case AggregatorKind::attn_mil: return "attn_mil";
    case AggregatorKind::set_transformer: return "set_transformer";
  }
  return "unknown";
}

AggregatorKind aggregator_kind_from_string(const std::string& name) {
  for (auto k : {AggregatorKind::deepset_mean, AggregatorKind::deepset_sum,
                 AggregatorKind::deepset_max, AggregatorKind::attn_mil,
                 AggregatorKind::set_transformer}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown aggregator kind '" + name + "'");
}

void AggregatorConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0) {
    throw ConfigError("aggregator: dims must be positive");
  }
  if (kind == AggregatorKind::set_transformer) {
    if (heads == 0 || hidden_dim % heads != 0) {
      throw ConfigError("aggregator: heads (" + std::to_string(heads) +
                        ") must divide hidden_dim (" + std::to_string(hidden_dim) + ")");
    }
    if (inducing_points == 0) throw ConfigError("aggregator: inducing_points must be >= 1");
  }
}

nlohmann::json AggregatorConfig::to_json() const {
  return {{"kind", to_string(kind)},          {"input_dim", input_dim},
          {"hidden_dim", hidden_dim},         {"heads", heads},
          {"inducing_points", inducing_points}, {"output_dim", output_dim}};
}

AggregatorConfig AggregatorConfig::from_json(const nlohmann::json& j) {
  AggregatorConfig c;
  c.kind = aggregator_kind_from_string(j.at("kind").get<std::string>());
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.inducing_points = j.at("inducing_points").get<std::size_t>();
  c.output_dim = j.at("output_dim").get<std::size_t>();
  return c;
}

void SetAggregator::check_set(const Tensor& set) const {
  if (set.rank() != 2) {
    throw DimensionError("aggregator: set must be a matrix, got " + shape_str(set.shape()));
  }
  if (set.dim(1) != config_.input_dim) {
    throw DimensionError("aggregator: set width " + std::to_string(set.dim(1)) +
                         " does not match input_dim " + std::to_string(config_.input_dim));
  }
}

DeepSet::DeepSet(AggregatorConfig config, Rng& rng) : SetAggregator(config) {
  config_.validate();
  phi1_ = Linear(config_.input_dim, config_.hidden_dim, rng);
  phi2_ = Linear(config_.hidden_dim, config_.hidden_dim, rng);
  rho_ = Linear(config_.hidden_dim, config_.output_dim, rng);
  rebuild_params();
}

void DeepSet::rebuild_params() {
  params_ = ParamSet();
  phi1_.register_params("deepset.phi1", params_);
  phi2_.register_params("deepset.phi2", params_);
  rho_.register_params("deepset.rho", params_);
}

Tensor DeepSet::forward(const Tensor& set, AttentionTrace*) const {
  check_set(set);
  const Tensor h = phi2_.forward(relu(phi1_.forward(set)));
  Tensor pooled;
  switch (config_.kind) {
    case AggregatorKind::deepset_sum: pooled = sum(h, 0); break;
    case AggregatorKind::deepset_max: pooled = max(h, 0); break;
    default: pooled = mean(h, 0); break;
  }
  const Tensor out = rho_.forward(reshape(pooled, {1, config_.hidden_dim}));
  return reshape(out, {config_.output_dim});
}

std::unique_ptr<SetAggregator> DeepSet::clone() const {
  auto copy = std::make_unique<DeepSet>(*this);
  copy->phi1_ = phi1_.clone();
  copy->phi2_ = phi2_.clone();
  copy->rho_ = rho_.clone();
  copy->rebuild_params();
  return copy;
}

AttentionMil::AttentionMil(AggregatorConfig config, Rng& rng) : SetAggregator(config) {
  config_.validate();
  attend_ = Linear(config_.input_dim, config_.hidden_dim, rng);
  score_ = Linear(config_.hidden_dim, 1, rng);
  head_ = Linear(config_.input_dim, config_.output_dim, rng);
  rebuild_params();
}

void AttentionMil::rebuild_params() {
  params_ = ParamSet();
  attend_.register_params("attn_mil.attend", params_);
  score_.register_params("attn_mil.score", params_);
  head_.register_params("attn_mil.head", params_);
}

Tensor AttentionMil::attention_weights(const Tensor& set) const {
  check_set(set);
  const Tensor scores = score_.forward(tanh(attend_.forward(set)));  // a x 1
  return softmax(reshape(scores, {set.dim(0)}), 0);
}

Tensor AttentionMil::forward(const Tensor& set, AttentionTrace* trace) const {
  const Tensor w = attention_weights(set);
  if (trace) trace->weights.push_back(w);
  const Tensor pooled = matmul(reshape(w, {1, set.dim(0)}), set);  // 1 x d
  return reshape(head_.forward(pooled), {config_.output_dim});
}

std::unique_ptr<SetAggregator> AttentionMil::clone() const {
  auto copy = std::make_unique<AttentionMil>(*this);
  copy->attend_ = attend_.clone();
  copy->score_ = score_.clone();
  copy->head_ = head_.clone();
  copy->rebuild_params();
  return copy;
}

SetTransformer::Mab SetTransformer::Mab::clone() const { return {q.clone(), k.clone(), v.clone(), o.clone()}; }

SetTransformer::SetTransformer(AggregatorConfig config, Rng& rng) : SetAggregator(config) {
  config_.validate();
  const std::size_t d = config_.input_dim, h = config_.hidden_dim;
  const double bound = std::sqrt(6.0 / static_cast<double>(config_.inducing_points + h));
  inducing_ = uniform_tensor({config_.inducing_points, h}, bound, rng);
  seed_ = uniform_tensor({1, h}, std::sqrt(6.0 / static_cast<double>(1 + h)), rng);
  // ISAB: inducing points attend to the set, then the set attends to the result.
  isab_in_ = {Linear(h, h, rng), Linear(d, h, rng), Linear(d, h, rng), Linear(h, h, rng)};
  isab_out_ = {Linear(d, h, rng), Linear(h, h, rng), Linear(h, h, rng), Linear(h, h, rng)};
  pma_ = {Linear(h, h, rng), Linear(h, h, rng), Linear(h, h, rng), Linear(h, h, rng)};
  head_ = Linear(h, config_.output_dim, rng);
  rebuild_params();
}

void SetTransformer::rebuild_params() {
  params_ = ParamSet();
  params_.add("set_transformer.inducing", inducing_);
  params_.add("set_transformer.seed", seed_);
  auto add_mab = [this](const std::string& prefix, const Mab& m) {
    m.q.register_params(prefix + ".q", params_);
    m.k.register_params(prefix + ".k", params_);
    m.v.register_params(prefix + ".v", params_);
    m.o.register_params(prefix + ".o", params_);
  };
  add_mab("set_transformer.isab_in", isab_in_);
  add_mab("set_transformer.isab_out", isab_out_);
  add_mab("set_transformer.pma", pma_);
  head_.register_params("set_transformer.head", params_);
}

Tensor SetTransformer::mab(const Mab& block, const Tensor& queries, const Tensor& keys,
                           AttentionTrace* trace) const {
  const Tensor q = block.q.forward(queries);
  const Tensor k = block.k.forward(keys);
  const Tensor v = block.v.forward(keys);
  const std::size_t width = config_.hidden_dim / config_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));
  std::vector<Tensor> heads;
  heads.reserve(config_.heads);
  for (std::size_t hd = 0; hd < config_.heads; ++hd) {
    const std::size_t b = hd * width, e = b + width;
    const Tensor qh = slice_cols(q, b, e);
    const Tensor kh = slice_cols(k, b, e);
    const Tensor vh = slice_cols(v, b, e);
    const Tensor attn = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    if (trace) trace->weights.push_back(attn);
    heads.push_back(add(qh, matmul(attn, vh)));
  }
  const Tensor o = heads.size() == 1 ? heads.front() : concat(heads, 1);
  return add(o, relu(block.o.forward(o)));
}

Tensor SetTransformer::forward(const Tensor& set, AttentionTrace* trace) const {
  check_set(set);
  const Tensor induced = mab(isab_in_, inducing_, set, trace);  // m x h
  const Tensor encoded = mab(isab_out_, set, induced, trace);   // a x h
  const Tensor pooled = mab(pma_, seed_, encoded, trace);       // 1 x h
  return reshape(head_.forward(pooled), {config_.output_dim});
}

std::unique_ptr<SetAggregator> SetTransformer::clone() const {
  auto copy = std::make_unique<SetTransformer>(*this);
  copy->inducing_ = inducing_.clone();
  copy->seed_ = seed_.clone();
  copy->isab_in_ = isab_in_.clone();
  copy->isab_out_ = isab_out_.clone();
  copy->pma_ = pma_.clone();
  copy->head_ = head_.clone();
  copy->rebuild_params();
  return copy;
}

std::unique_ptr<SetAggregator> make_aggregator(const AggregatorConfig& config, Rng& rng) {
  switch (config.kind) {
    case AggregatorKind::attn_mil: return std::make_unique<AttentionMil>(config, rng);
    case AggregatorKind::set_transformer: return std::make_unique<SetTransformer>(config, rng);
    default: return std::make_unique<DeepSet>(config, rng);
  }
}

// ---------------------------------------------------------------------------
// Heads

void ProjectionConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || out_dim == 0) {
    throw ConfigError("projection: dims must be positive");
  }
}

nlohmann::json ProjectionConfig::to_json() const {
  return {{"input_dim", input_dim}, {"hidden_dim", hidden_dim}, {"out_dim", out_dim}};
}

ProjectionHead::ProjectionHead(ProjectionConfig config, Rng& rng) : config_(config) {
  config_.validate();
  first_ = Linear(config_.input_dim, config_.hidden_dim, rng);
  second_ = Linear(config_.hidden_dim, config_.out_dim, rng);
  rebuild_params();
}

void ProjectionHead::rebuild_params() {
  params_ = ParamSet();
  first_.register_params("projection.0", params_);
  second_.register_params("projection.1", params_);
}

Tensor ProjectionHead::forward(const Tensor& batch) const {
  return l2_normalize(second_.forward(relu(first_.forward(batch))), 1, 1e-12);
}

ProjectionHead ProjectionHead::clone() const {
  ProjectionHead p;
  p.config_ = config_;
  p.first_ = first_.clone();
  p.second_ = second_.clone();
  p.rebuild_params();
  return p;
}

TwoLayerMlp::TwoLayerMlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
    : first_(in, hidden, rng), second_(hidden, out, rng) {
  first_.register_params("mlp.0", params_);
  second_.register_params("mlp.1", params_);
}

Tensor TwoLayerMlp::forward(const Tensor& batch) const {
  return second_.forward(relu(first_.forward(batch)));
}

// ---------------------------------------------------------------------------

Tensor coarse_forward(const Encoder& encoder, const SetAggregator& aggregator, const Tensor& set) {
  return aggregator.forward(encoder.forward(set));
}

nlohmann::json model_header(const EncoderConfig& encoder, const AggregatorConfig* aggregator) {
  nlohmann::json h;
  h["encoder"] = encoder.to_json();
  if (aggregator) h["aggregator"] = aggregator->to_json();
  return h;
}

}  // namespace facile
