#include "facile/datasets.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <string>

#include "facile/error.hpp"

namespace facile {

HierarchySpec HierarchySpec::uniform(int num_super, int fine_per_super) {
  if (num_super <= 0 || fine_per_super <= 0) {
    throw ConfigError("hierarchy: num_super and fine_per_super must be positive");
  }
  HierarchySpec h;
  h.num_super = num_super;
  for (int s = 0; s < num_super; ++s) {
    for (int f = 0; f < fine_per_super; ++f) h.fine_to_super.push_back(s);
  }
  return h;
}

void HierarchySpec::validate() const {
  if (num_super <= 0 || fine_to_super.empty()) throw ConfigError("hierarchy: empty");
  std::vector<bool> hit(static_cast<std::size_t>(num_super), false);
  for (int s : fine_to_super) {
    if (s < 0 || s >= num_super) throw ConfigError("hierarchy: superclass id out of range");
    hit[static_cast<std::size_t>(s)] = true;
  }
  if (!std::all_of(hit.begin(), hit.end(), [](bool b) { return b; })) {
    throw ConfigError("hierarchy: map is not surjective onto the superclasses");
  }
}

std::uint64_t dataset_digest(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& it : data.items) {
    feed(&it.fine_label, sizeof it.fine_label);
    feed(&it.super_label, sizeof it.super_label);
    feed(it.features.data(), it.features.size() * sizeof(double));
  }
  return h;
}

// ---------------------------------------------------------------------------
// CIFAR-100

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cifar100: cannot open '" + path.string() + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

void check_record(const unsigned char* rec, std::size_t index, const std::filesystem::path& path) {
  if (rec[0] >= kCifarCoarseClasses) {
    throw CorruptRecordError("cifar100: record " + std::to_string(index) + " of '" +
                             path.string() + "' has coarse label " + std::to_string(rec[0]));
  }
  if (rec[1] >= kCifarFineClasses) {
    throw CorruptRecordError("cifar100: record " + std::to_string(index) + " of '" +
                             path.string() + "' has fine label " + std::to_string(rec[1]));
  }
}

void check_length(std::size_t bytes, const std::filesystem::path& path) {
  if (bytes == 0 || bytes % kCifarRecordBytes != 0) {
    throw FormatError("cifar100: '" + path.string() + "' has " + std::to_string(bytes) +
                      " bytes, not a positive multiple of " + std::to_string(kCifarRecordBytes));
  }
}

}  // namespace

std::size_t scan_cifar100(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cifar100: cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  check_length(bytes, path);
  in.seekg(0);
  std::vector<unsigned char> rec(kCifarRecordBytes);
  const std::size_t n = bytes / kCifarRecordBytes;
  for (std::size_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    check_record(rec.data(), i, path);
  }
  return n;
}

Dataset read_cifar100(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  check_length(bytes.size(), path);
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset data;
  data.dim = kCifarPixels;
  data.image = {32, 32, 3};
  data.items.resize(n);
  // CIFAR-100 ships its own fine -> coarse map; recover it from the records.
  std::vector<int> fine_to_super(kCifarFineClasses, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    check_record(rec, i, path);
    auto& item = data.items[i];
    item.super_label = rec[0];
    item.fine_label = rec[1];
    item.features.resize(kCifarPixels);
    for (std::size_t p = 0; p < kCifarPixels; ++p) item.features[p] = rec[2 + p] / 255.0;
    fine_to_super[rec[1]] = rec[0];
  }
  data.hierarchy.num_super = kCifarCoarseClasses;
  // Fine classes absent from the file map to superclass 0 to keep the map total.
  for (int& s : fine_to_super) s = std::max(s, 0);
  data.hierarchy.fine_to_super = std::move(fine_to_super);
  return data;
}

CifarSplits load_cifar100(const std::filesystem::path& train_path,
                          const std::filesystem::path& test_path, bool require_standard_sizes) {
  CifarSplits splits{read_cifar100(train_path), read_cifar100(test_path)};
  if (require_standard_sizes) {
    if (splits.train.size() != kCifarTrainRecords) {
      throw FormatError("cifar100: train file has " + std::to_string(splits.train.size()) +
                        " records, expected 50000");
    }
    if (splits.test.size() != kCifarTestRecords) {
      throw FormatError("cifar100: test file has " + std::to_string(splits.test.size()) +
                        " records, expected 10000");
    }
  }
  return splits;
}

// ---------------------------------------------------------------------------
// Synthetic hierarchy

Dataset gen_synthetic_hierarchy(const SyntheticSpec& spec) {
  spec.hierarchy.validate();
  if (spec.per_class == 0) throw ContractError("synthetic: per_class = 0 gives an empty dataset");
  if (spec.dim < 2) throw ContractError("synthetic: dim must be >= 2");
  if (!(spec.sigma_fine > 0.0) || !(spec.sigma_super > 0.0)) {
    throw ContractError("synthetic: sigma_fine and sigma_super must be positive");
  }
  Rng rng(spec.seed);
  const std::size_t d = spec.dim;
  const auto num_super = static_cast<std::size_t>(spec.hierarchy.num_super);
  std::vector<std::vector<double>> super_centers(num_super, std::vector<double>(d));
  for (auto& c : super_centers) {
    for (double& v : c) v = spec.sigma_super * standard_normal(rng);
  }
  const int num_fine = spec.hierarchy.num_fine();
  std::vector<std::vector<double>> fine_centers(static_cast<std::size_t>(num_fine),
                                                std::vector<double>(d));
  for (int f = 0; f < num_fine; ++f) {
    const auto& sc = super_centers[static_cast<std::size_t>(spec.hierarchy.super_of(f))];
    for (std::size_t j = 0; j < d; ++j) {
      fine_centers[static_cast<std::size_t>(f)][j] =
          sc[j] + (spec.sigma_super / 4.0) * standard_normal(rng);
    }
  }
  Dataset data;
  data.hierarchy = spec.hierarchy;
  data.dim = d;
  data.items.reserve(static_cast<std::size_t>(num_fine) * spec.per_class);
  for (int f = 0; f < num_fine; ++f) {
    const auto& fc = fine_centers[static_cast<std::size_t>(f)];
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      LabeledInstance inst;
      inst.fine_label = f;
      inst.super_label = spec.hierarchy.super_of(f);
      inst.features.resize(d);
      for (std::size_t j = 0; j < d; ++j) inst.features[j] = fc[j] + spec.sigma_fine * standard_normal(rng);
      data.items.push_back(std::move(inst));
    }
  }
  return data;
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& data, std::size_t test_per_class) {
  Dataset train, test;
  train.hierarchy = test.hierarchy = data.hierarchy;
  train.dim = test.dim = data.dim;
  train.image = test.image = data.image;
  FineClassIndex index(data);
  for (const auto& members : index.members()) {
    if (members.empty()) continue;
    if (members.size() <= test_per_class) {
      throw ContractError("split_per_class: class too small for the requested test share");
    }
    const std::size_t cut = members.size() - test_per_class;
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < cut ? train : test).items.push_back(data.items[members[i]]);
    }
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Coarse tasks

const char* to_string(CoarseTask task) {
  return task == CoarseTask::unique_count ? "unique_count" : "most_frequent";
}

CoarseTask coarse_task_from_string(const std::string& name) {
  if (name == "unique_count") return CoarseTask::unique_count;
  if (name == "most_frequent") return CoarseTask::most_frequent;
  throw ConfigError("unknown coarse task '" + name + "' (expected unique_count|most_frequent)");
}

int CoarseCorpus::num_labels() const {
  if (task == CoarseTask::most_frequent) return source->hierarchy.num_super;
  return static_cast<int>(size_range.max) + 1;
}

int unique_superclass_count(const Dataset& data, std::span<const std::size_t> members) {
  std::vector<int> supers;
  supers.reserve(members.size());
  for (std::size_t m : members) supers.push_back(data.items[m].super_label);
  std::sort(supers.begin(), supers.end());
  return static_cast<int>(std::unique(supers.begin(), supers.end()) - supers.begin());
}

std::vector<int> superclass_modes(const Dataset& data, std::span<const std::size_t> members) {
  std::map<int, int> counts;
  for (std::size_t m : members) ++counts[data.items[m].super_label];
  int best = 0;
  for (const auto& [label, c] : counts) best = std::max(best, c);
  std::vector<int> modes;
  for (const auto& [label, c] : counts) {
    if (c == best) modes.push_back(label);
  }
  return modes;
}

int most_frequent_label(std::span<const int> super_labels, Rng& rng) {
  if (super_labels.empty()) throw ContractError("most_frequent_label: empty set");
  std::map<int, int> counts;
  for (int s : super_labels) ++counts[s];
  int best = 0;
  for (const auto& [label, c] : counts) best = std::max(best, c);
  std::vector<int> modes;
  for (const auto& [label, c] : counts) {
    if (c == best) modes.push_back(label);
  }
  if (modes.size() == 1) return modes.front();
  std::uniform_int_distribution<std::size_t> pick(0, modes.size() - 1);
  return modes[pick(rng)];
}

namespace {

template <typename Labeler>
CoarseCorpus build_sets(CoarseTask task, DatasetPtr data, std::size_t num_sets, SizeRange sizes,
                        std::uint64_t seed, Labeler labeler) {
  if (!data || data->size() == 0) throw ContractError("coarse sets: empty dataset");
  if (sizes.min < 1 || sizes.min > sizes.max || sizes.max > data->size()) {
    throw ContractError("coarse sets: size range [" + std::to_string(sizes.min) + ", " +
                        std::to_string(sizes.max) + "] must lie within [1, " +
                        std::to_string(data->size()) + "]");
  }
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> size_dist(sizes.min, sizes.max);
  std::uniform_int_distribution<std::size_t> member_dist(0, data->size() - 1);
  CoarseCorpus corpus;
  corpus.source = data;
  corpus.task = task;
  corpus.size_range = sizes;
  corpus.sets.reserve(num_sets);
  for (std::size_t s = 0; s < num_sets; ++s) {
    CoarseSetExample ex;
    const std::size_t a = size_dist(rng);
    ex.members.reserve(a);
    for (std::size_t i = 0; i < a; ++i) ex.members.push_back(member_dist(rng));
    ex.label = labeler(*data, ex.members, rng);
    corpus.sets.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace

CoarseCorpus build_unique_count_sets(DatasetPtr data, std::size_t num_sets, SizeRange sizes,
                                     std::uint64_t seed) {
  return build_sets(CoarseTask::unique_count, std::move(data), num_sets, sizes, seed,
                    [](const Dataset& d, const std::vector<std::size_t>& members, Rng&) {
                      return unique_superclass_count(d, members);
                    });
}

CoarseCorpus build_most_frequent_sets(DatasetPtr data, std::size_t num_sets, SizeRange sizes,
                                      std::uint64_t seed) {
  return build_sets(CoarseTask::most_frequent, std::move(data), num_sets, sizes, seed,
                    [](const Dataset& d, const std::vector<std::size_t>& members, Rng& rng) {
                      std::vector<int> supers;
                      supers.reserve(members.size());
                      for (std::size_t m : members) supers.push_back(d.items[m].super_label);
                      return most_frequent_label(supers, rng);
                    });
}

CoarseCorpus build_coarse_sets(CoarseTask task, DatasetPtr data, std::size_t num_sets,
                               SizeRange sizes, std::uint64_t seed) {
  return task == CoarseTask::unique_count
             ? build_unique_count_sets(std::move(data), num_sets, sizes, seed)
             : build_most_frequent_sets(std::move(data), num_sets, sizes, seed);
}

// ---------------------------------------------------------------------------
// Meta-tasks

FineClassIndex::FineClassIndex(const Dataset& data) {
  int num_fine = data.hierarchy.num_fine();
  for (const auto& it : data.items) num_fine = std::max(num_fine, it.fine_label + 1);
  members_.resize(static_cast<std::size_t>(num_fine));
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    members_[static_cast<std::size_t>(data.items[i].fine_label)].push_back(i);
  }
}

std::vector<int> FineClassIndex::nonempty_classes() const {
  std::vector<int> out;
  for (std::size_t c = 0; c < members_.size(); ++c) {
    if (!members_[c].empty()) out.push_back(static_cast<int>(c));
  }
  return out;
}

MetaTask sample_meta_task(const FineClassIndex& index, int way, int shot, int query,
                          std::uint64_t seed) {
  if (way < 1 || shot < 1 || query < 1) {
    throw ContractError("meta-task: way, shot and query must be positive");
  }
  std::vector<int> classes = index.nonempty_classes();
  if (classes.size() < static_cast<std::size_t>(way)) {
    throw TaskSamplingError("meta-task: only " + std::to_string(classes.size()) +
                            " fine classes available for a " + std::to_string(way) + "-way task");
  }
  Rng rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);
  classes.resize(static_cast<std::size_t>(way));
  const auto need = static_cast<std::size_t>(shot + query);
  MetaTask task;
  task.classes = classes;
  for (int c = 0; c < way; ++c) {
    const int label = classes[static_cast<std::size_t>(c)];
    std::vector<std::size_t> pool = index.members()[static_cast<std::size_t>(label)];
    if (pool.size() < need) {
      throw TaskSamplingError("meta-task: class " + std::to_string(label) + " has " +
                              std::to_string(pool.size()) + " instances, needs " +
                              std::to_string(need));
    }
    // Partial Fisher-Yates: the first shot + query entries become a uniform draw without replacement.
    for (std::size_t i = 0; i < need; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    for (int i = 0; i < shot; ++i) {
      task.support.push_back(pool[static_cast<std::size_t>(i)]);
      task.support_labels.push_back(c);
    }
    for (int i = 0; i < query; ++i) {
      task.query.push_back(pool[static_cast<std::size_t>(shot + i)]);
      task.query_labels.push_back(c);
    }
  }
  return task;
}

MetaTask sample_meta_task(const Dataset& data, int way, int shot, int query, std::uint64_t seed) {
  return sample_meta_task(FineClassIndex(data), way, shot, query, seed);
}

}  // namespace facile
