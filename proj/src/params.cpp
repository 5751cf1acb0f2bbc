#include "facile/params.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "facile/error.hpp"

namespace facile {

void ParamSet::add(std::string name, Tensor tensor) {
  for (const auto& e : entries_) {
    if (e.name == name) throw ContractError("params: duplicate parameter name '" + name + "'");
  }
  entries_.push_back({std::move(name), std::move(tensor)});
}

void ParamSet::extend(const std::string& prefix, const ParamSet& other) {
  for (const auto& e : other.entries_) add(prefix + e.name, e.tensor);
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::size_t ParamSet::total_numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ContractError("params: no parameter named '" + name + "'");
}

void ParamSet::assign_from(const ParamSet& other) {
  if (other.size() != size()) throw ContractError("params: parameter count mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& src = other.entries_[i];
    auto& dst = entries_[i];
    if (src.name != dst.name || src.tensor.shape() != dst.tensor.shape()) {
      throw ContractError("params: cannot assign '" + src.name + "' to '" + dst.name + "'");
    }
    auto out = dst.tensor.mutable_data();
    std::copy(src.tensor.data().begin(), src.tensor.data().end(), out.begin());
  }
}

nlohmann::json params_to_json(const ParamSet& params, const nlohmann::json& header) {
  nlohmann::json doc;
  doc["header"] = header.is_null() ? nlohmann::json::object() : header;
  nlohmann::json body = nlohmann::json::object();
  for (const auto& e : params.entries()) {
    body[e.name] = {{"shape", e.tensor.shape()}, {"data", e.tensor.to_vector()}};
  }
  doc["params"] = std::move(body);
  return doc;
}

void params_from_json(const nlohmann::json& doc, ParamSet& params) {
  if (!doc.contains("params") || !doc["params"].is_object()) {
    throw FormatError("checkpoint: missing 'params' object");
  }
  const auto& body = doc["params"];
  std::set<std::string> seen;
  for (const auto& e : params.entries()) {
    auto it = body.find(e.name);
    if (it == body.end()) throw FormatError("checkpoint: missing parameter '" + e.name + "'");
    const auto shape = it->at("shape").get<Shape>();
    if (shape != e.tensor.shape()) {
      throw FormatError("checkpoint: parameter '" + e.name + "' has shape " + shape_str(shape) +
                        ", model expects " + shape_str(e.tensor.shape()));
    }
    const auto values = it->at("data").get<std::vector<double>>();
    if (values.size() != e.tensor.numel()) {
      throw FormatError("checkpoint: parameter '" + e.name + "' has wrong value count");
    }
    Tensor t = e.tensor;
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
    seen.insert(e.name);
  }
  for (auto it = body.begin(); it != body.end(); ++it) {
    if (!seen.count(it.key())) {
      throw FormatError("checkpoint: unexpected parameter '" + it.key() + "'");
    }
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     const nlohmann::json& header) {
  std::ofstream out(path);
  if (!out) throw Error("checkpoint: cannot open '" + path.string() + "' for writing");
  out << params_to_json(params, header).dump() << '\n';
}

nlohmann::json load_checkpoint_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("checkpoint: cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace facile
