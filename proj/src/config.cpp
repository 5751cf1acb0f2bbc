#include "facile/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "facile/error.hpp"

namespace facile {

namespace {

using nlohmann::json;
using Setter = std::function<void(RunConfig&, const json&)>;

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ConfigError("");
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has an invalid value " + v.dump());
  }
}

template <typename T>
std::vector<T> get_list(const json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError("config key '" + key + "' must be an array");
  std::vector<T> out;
  for (const json& e : v) out.push_back(get_as<T>(e, key));
  return out;
}

#define FIELD(key, member, type) \
  {key, [](RunConfig& c, const json& v) { c.member = get_as<type>(v, key); }}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      FIELD("seed", seed, std::uint64_t),
      FIELD("threads", threads, std::size_t),

      FIELD("data.source", data.source, std::string),
      FIELD("data.num_super", data.num_super, int),
      FIELD("data.fine_per_super", data.fine_per_super, int),
      FIELD("data.per_class", data.per_class, std::size_t),
      FIELD("data.test_per_class", data.test_per_class, std::size_t),
      FIELD("data.dim", data.dim, std::size_t),
      FIELD("data.sigma_fine", data.sigma_fine, double),
      FIELD("data.sigma_super", data.sigma_super, double),
      FIELD("data.cifar_train", data.cifar_train, std::string),
      FIELD("data.cifar_test", data.cifar_test, std::string),

      {"coarse.task",
       [](RunConfig& c, const json& v) {
         c.coarse.task = coarse_task_from_string(get_as<std::string>(v, "coarse.task"));
       }},
      FIELD("coarse.num_sets", coarse.num_sets, std::size_t),
      FIELD("coarse.size_min", coarse.sizes.min, std::size_t),
      FIELD("coarse.size_max", coarse.sizes.max, std::size_t),

      {"pretrain.method",
       [](RunConfig& c, const json& v) {
         c.pretrain.method = pretrain_method_from_string(get_as<std::string>(v, "pretrain.method"));
       }},
      {"pretrain.loss",
       [](RunConfig& c, const json& v) {
         c.pretrain.loss = coarse_loss_from_string(get_as<std::string>(v, "pretrain.loss"));
       }},
      FIELD("pretrain.epochs", pretrain.epochs, std::size_t),
      FIELD("pretrain.batch_size", pretrain.batch_size, std::size_t),
      FIELD("pretrain.instance_batch_size", pretrain.instance_batch_size, std::size_t),
      FIELD("pretrain.lr", pretrain.sgd.lr0, double),
      FIELD("pretrain.momentum", pretrain.sgd.momentum, double),
      FIELD("pretrain.weight_decay", pretrain.sgd.weight_decay, double),
      {"pretrain.augmentation",
       [](RunConfig& c, const json& v) {
         c.pretrain.augmentation =
             augment_policy_from_string(get_as<std::string>(v, "pretrain.augmentation"));
       }},
      FIELD("pretrain.noise_sigma", pretrain.noise.sigma, double),
      FIELD("pretrain.noise_drop", pretrain.noise.drop_prob, double),
      FIELD("pretrain.temperature", pretrain.temperature, double),

      {"encoder.hidden_dims",
       [](RunConfig& c, const json& v) {
         c.pretrain.encoder.hidden_dims = get_list<std::size_t>(v, "encoder.hidden_dims");
       }},
      FIELD("encoder.embed_dim", pretrain.encoder.embed_dim, std::size_t),

      {"aggregator.kind",
       [](RunConfig& c, const json& v) {
         c.pretrain.aggregator.kind =
             aggregator_kind_from_string(get_as<std::string>(v, "aggregator.kind"));
       }},
      FIELD("aggregator.hidden_dim", pretrain.aggregator.hidden_dim, std::size_t),
      FIELD("aggregator.heads", pretrain.aggregator.heads, std::size_t),
      FIELD("aggregator.inducing_points", pretrain.aggregator.inducing_points, std::size_t),

      FIELD("projection.hidden_dim", pretrain.projection.hidden_dim, std::size_t),
      FIELD("projection.out_dim", pretrain.projection.out_dim, std::size_t),

      FIELD("eval.way", eval.protocol.way, int),
      FIELD("eval.shot", eval.protocol.shot, int),
      FIELD("eval.query", eval.protocol.query, int),
      FIELD("eval.tasks", eval.protocol.tasks, std::size_t),
      {"eval.classifiers",
       [](RunConfig& c, const json& v) {
         c.eval.protocol.classifiers.clear();
         for (const auto& name : get_list<std::string>(v, "eval.classifiers")) {
           c.eval.protocol.classifiers.push_back(classifier_kind_from_string(name));
         }
       }},
      FIELD("eval.lr_lambda", eval.protocol.lr_lambda, double),
      FIELD("eval.rc_alpha", eval.protocol.rc_alpha, double),
      FIELD("eval.latent_augmentation", eval.protocol.latent_augmentation, bool),
      FIELD("eval.la_count", eval.protocol.la_count, std::size_t),
      FIELD("eval.la_prototypes", eval.la_prototypes, int),

      {"risk.growth",
       [](RunConfig& c, const json& v) {
         c.risk.growth = growth_from_string(get_as<std::string>(v, "risk.growth"));
       }},
      {"risk.n_grid",
       [](RunConfig& c, const json& v) { c.risk.n_grid = get_list<std::size_t>(v, "risk.n_grid"); }},
      FIELD("risk.m0", risk.m0, double),
      FIELD("risk.tasks", risk.tasks, std::size_t),

      FIELD("diagnose.eta", diagnose.eta, double),
      FIELD("diagnose.pairs", diagnose.pairs, std::size_t),
      FIELD("diagnose.tolerance", diagnose.tolerance, double),
  };
  return table;
}

#undef FIELD

}  // namespace

RunConfig RunConfig::from_json(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  const auto& table = setters();
  for (auto it = flat.begin(); it != flat.end(); ++it) {
    auto s = table.find(it.key());
    if (s == table.end()) throw ConfigError("unknown config key '" + it.key() + "'");
    s->second(c, it.value());
  }
  // Explicit losses win; otherwise the method picks its own.
  if (!flat.contains("pretrain.loss")) c.pretrain.loss = default_loss(c.pretrain.method);
  if (c.data.source != "synthetic" && c.data.source != "cifar100") {
    throw ConfigError("data.source must be 'synthetic' or 'cifar100', got '" + c.data.source + "'");
  }
  if (c.coarse.sizes.min == 0 || c.coarse.sizes.min > c.coarse.sizes.max) {
    throw ConfigError("coarse.size_min must be in [1, coarse.size_max]");
  }
  c.pretrain.validate();
  return c;
}

json RunConfig::to_json() const {
  std::vector<std::string> classifiers;
  for (ClassifierKind k : eval.protocol.classifiers) classifiers.push_back(to_string(k));
  return {
      {"seed", seed},
      {"threads", threads},
      {"data.source", data.source},
      {"data.num_super", data.num_super},
      {"data.fine_per_super", data.fine_per_super},
      {"data.per_class", data.per_class},
      {"data.test_per_class", data.test_per_class},
      {"data.dim", data.dim},
      {"data.sigma_fine", data.sigma_fine},
      {"data.sigma_super", data.sigma_super},
      {"data.cifar_train", data.cifar_train},
      {"data.cifar_test", data.cifar_test},
      {"coarse.task", facile::to_string(coarse.task)},
      {"coarse.num_sets", coarse.num_sets},
      {"coarse.size_min", coarse.sizes.min},
      {"coarse.size_max", coarse.sizes.max},
      {"pretrain.method", facile::to_string(pretrain.method)},
      {"pretrain.loss", facile::to_string(pretrain.loss)},
      {"pretrain.epochs", pretrain.epochs},
      {"pretrain.batch_size", pretrain.batch_size},
      {"pretrain.instance_batch_size", pretrain.instance_batch_size},
      {"pretrain.lr", pretrain.sgd.lr0},
      {"pretrain.momentum", pretrain.sgd.momentum},
      {"pretrain.weight_decay", pretrain.sgd.weight_decay},
      {"pretrain.augmentation", facile::to_string(pretrain.augmentation)},
      {"pretrain.noise_sigma", pretrain.noise.sigma},
      {"pretrain.noise_drop", pretrain.noise.drop_prob},
      {"pretrain.temperature", pretrain.temperature},
      {"encoder.hidden_dims", pretrain.encoder.hidden_dims},
      {"encoder.embed_dim", pretrain.encoder.embed_dim},
      {"aggregator.kind", facile::to_string(pretrain.aggregator.kind)},
      {"aggregator.hidden_dim", pretrain.aggregator.hidden_dim},
      {"aggregator.heads", pretrain.aggregator.heads},
      {"aggregator.inducing_points", pretrain.aggregator.inducing_points},
      {"projection.hidden_dim", pretrain.projection.hidden_dim},
      {"projection.out_dim", pretrain.projection.out_dim},
      {"eval.way", eval.protocol.way},
      {"eval.shot", eval.protocol.shot},
      {"eval.query", eval.protocol.query},
      {"eval.tasks", eval.protocol.tasks},
      {"eval.classifiers", classifiers},
      {"eval.lr_lambda", eval.protocol.lr_lambda},
      {"eval.rc_alpha", eval.protocol.rc_alpha},
      {"eval.latent_augmentation", eval.protocol.latent_augmentation},
      {"eval.la_count", eval.protocol.la_count},
      {"eval.la_prototypes", eval.la_prototypes},
      {"risk.growth", facile::to_string(risk.growth)},
      {"risk.n_grid", risk.n_grid},
      {"risk.m0", risk.m0},
      {"risk.tasks", risk.tasks},
      {"diagnose.eta", diagnose.eta},
      {"diagnose.pairs", diagnose.pairs},
      {"diagnose.tolerance", diagnose.tolerance},
  };
}

std::uint64_t RunConfig::data_seed() const { return mix_seed(seed, 11); }
std::uint64_t RunConfig::coarse_seed() const { return mix_seed(seed, 12); }
std::uint64_t RunConfig::pretrain_seed() const { return mix_seed(seed, 13); }
std::uint64_t RunConfig::eval_seed() const { return mix_seed(seed, 14); }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(doc);
}

// ---------------------------------------------------------------------------

DataBundle make_data(const RunConfig& config) {
  DataBundle out;
  if (config.data.source == "cifar100") {
    if (config.data.cifar_train.empty() || config.data.cifar_test.empty()) {
      throw ConfigError("data.source cifar100 needs data.cifar_train and data.cifar_test");
    }
    CifarSplits s = load_cifar100(config.data.cifar_train, config.data.cifar_test, false);
    out.train = std::make_shared<const Dataset>(std::move(s.train));
    out.test = std::make_shared<const Dataset>(std::move(s.test));
    return out;
  }
  SyntheticSpec spec;
  spec.hierarchy = HierarchySpec::uniform(config.data.num_super, config.data.fine_per_super);
  spec.per_class = config.data.per_class + config.data.test_per_class;
  spec.dim = config.data.dim;
  spec.sigma_fine = config.data.sigma_fine;
  spec.sigma_super = config.data.sigma_super;
  spec.seed = config.data_seed();
  auto [train, test] = split_per_class(gen_synthetic_hierarchy(spec), config.data.test_per_class);
  out.train = std::make_shared<const Dataset>(std::move(train));
  out.test = std::make_shared<const Dataset>(std::move(test));
  return out;
}

json dataset_to_json(const Dataset& data) {
  std::vector<double> features;
  features.reserve(data.size() * data.dim);
  std::vector<int> fine, super;
  for (const LabeledInstance& it : data.items) {
    features.insert(features.end(), it.features.begin(), it.features.end());
    fine.push_back(it.fine_label);
    super.push_back(it.super_label);
  }
  return {{"dim", data.dim},
          {"num_super", data.hierarchy.num_super},
          {"fine_to_super", data.hierarchy.fine_to_super},
          {"image", {data.image.height, data.image.width, data.image.channels}},
          {"fine", fine},
          {"super", super},
          {"features", features}};
}

Dataset dataset_from_json(const json& j) {
  try {
    Dataset d;
    d.dim = j.at("dim").get<std::size_t>();
    d.hierarchy.num_super = j.at("num_super").get<int>();
    d.hierarchy.fine_to_super = j.at("fine_to_super").get<std::vector<int>>();
    const auto image = j.at("image").get<std::vector<std::size_t>>();
    if (image.size() != 3) throw FormatError("data file: 'image' must have 3 entries");
    d.image = {image[0], image[1], image[2]};
    const auto fine = j.at("fine").get<std::vector<int>>();
    const auto super = j.at("super").get<std::vector<int>>();
    const auto features = j.at("features").get<std::vector<double>>();
    if (super.size() != fine.size() || features.size() != fine.size() * d.dim) {
      throw FormatError("data file: label and feature counts disagree");
    }
    d.items.resize(fine.size());
    for (std::size_t i = 0; i < fine.size(); ++i) {
      d.items[i].fine_label = fine[i];
      d.items[i].super_label = super[i];
      d.items[i].features.assign(features.begin() + static_cast<std::ptrdiff_t>(i * d.dim),
                                 features.begin() + static_cast<std::ptrdiff_t>((i + 1) * d.dim));
    }
    return d;
  } catch (const json::exception& e) {
    throw FormatError(std::string("data file: ") + e.what());
  }
}

void write_data_file(const std::filesystem::path& path, const RunConfig& config,
                     const DataBundle& data) {
  json doc;
  doc["source"] = config.data.source;
  if (config.data.source == "cifar100") {
    doc["cifar_train"] = config.data.cifar_train;
    doc["cifar_test"] = config.data.cifar_test;
  } else {
    doc["train"] = dataset_to_json(*data.train);
    doc["test"] = dataset_to_json(*data.test);
  }
  doc["train_digest"] = dataset_digest(*data.train);
  doc["test_digest"] = dataset_digest(*data.test);
  std::ofstream out(path);
  if (!out) throw Error("cannot write data file '" + path.string() + "'");
  out << doc.dump() << '\n';
}

DataBundle read_data_file(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  DataBundle out;
  try {
    if (doc.at("source") == "cifar100") {
      CifarSplits s = load_cifar100(doc.at("cifar_train").get<std::string>(),
                                    doc.at("cifar_test").get<std::string>(), false);
      out.train = std::make_shared<const Dataset>(std::move(s.train));
      out.test = std::make_shared<const Dataset>(std::move(s.test));
    } else {
      out.train = std::make_shared<const Dataset>(dataset_from_json(doc.at("train")));
      out.test = std::make_shared<const Dataset>(dataset_from_json(doc.at("test")));
    }
    if (dataset_digest(*out.train) != doc.at("train_digest").get<std::uint64_t>() ||
        dataset_digest(*out.test) != doc.at("test_digest").get<std::uint64_t>()) {
      throw FormatError("data file '" + path.string() + "': digest mismatch");
    }
  } catch (const json::exception& e) {
    throw FormatError("data file '" + path.string() + "': " + e.what());
  }
  return out;
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace facile
