#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "facile/tensor.hpp"

namespace facile {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Ordered parameter collection. Entries alias the model's tensors.
class ParamSet {
 public:
  void add(std::string name, Tensor tensor);
  void extend(const std::string& prefix, const ParamSet& other);

  const std::vector<NamedParam>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t total_numel() const;

  // Throws ContractError for an unknown name.
  const Tensor& at(const std::string& name) const;

  // Copies values (not handles) from `other`; names and shapes must match.
  void assign_from(const ParamSet& other);

 private:
  std::vector<NamedParam> entries_;
};

// Checkpoint document:
//   {"header": {...}, "params": {"<name>": {"shape": [..], "data": [..]}, ...}}
// Doubles are written in shortest round-trip form, so load(save(p)) is bit-exact.
nlohmann::json params_to_json(const ParamSet& params, const nlohmann::json& header = {});

// Copies values from `doc` into `params`. Every parameter must be present with
// the same shape; extra or missing names are FormatErrors.
void params_from_json(const nlohmann::json& doc, ParamSet& params);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     const nlohmann::json& header = {});
nlohmann::json load_checkpoint_document(const std::filesystem::path& path);

}  // namespace facile
