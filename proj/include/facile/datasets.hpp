#pragma once

// Data sources for the pipeline: CIFAR-100 ingestion, a synthetic
// superclass/fine-class hierarchy, set-level (coarse) task builders and
// meta-task sampling.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "facile/rng.hpp"

namespace facile {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  bool is_image() const { return height > 0 && width > 0 && channels > 0; }
  std::size_t numel() const { return height * width * channels; }
};

struct LabeledInstance {
  std::vector<double> features;
  int fine_label = 0;
  int super_label = 0;
};

// Total map fine class -> superclass.
struct HierarchySpec {
  int num_super = 0;
  std::vector<int> fine_to_super;

  // num_super superclasses each owning fine_per_super consecutive fine classes.
  static HierarchySpec uniform(int num_super, int fine_per_super);

  int num_fine() const { return static_cast<int>(fine_to_super.size()); }
  int super_of(int fine) const { return fine_to_super.at(static_cast<std::size_t>(fine)); }
  // ConfigError unless the map is total and surjective onto [0, num_super).
  void validate() const;
};

struct Dataset {
  std::vector<LabeledInstance> items;
  HierarchySpec hierarchy;
  std::size_t dim = 0;
  ImageShape image;  // empty for non-image features

  std::size_t size() const { return items.size(); }
  const LabeledInstance& operator[](std::size_t i) const { return items[i]; }
};

using DatasetPtr = std::shared_ptr<const Dataset>;

// FNV-1a digest over labels and feature bytes; recorded in run manifests.
std::uint64_t dataset_digest(const Dataset& data);

// ---------------------------------------------------------------------------
// CIFAR-100 binary layout: per record 1 byte coarse label, 1 byte fine label,
// then 3072 pixel bytes as R, G, B planes of 32x32 row-major.

inline constexpr std::size_t kCifarRecordBytes = 3074;
inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr int kCifarCoarseClasses = 20;
inline constexpr int kCifarFineClasses = 100;
inline constexpr std::size_t kCifarTrainRecords = 50000;
inline constexpr std::size_t kCifarTestRecords = 10000;

// Validates length and label bytes without materializing features; returns the record count.
std::size_t scan_cifar100(const std::filesystem::path& path);

// Loads every record; features are pixel / 255 in file (plane) order.
// FormatError when the length is not a multiple of 3074, CorruptRecordError
// for a label byte outside its class range.
Dataset read_cifar100(const std::filesystem::path& path);

struct CifarSplits {
  Dataset train;
  Dataset test;
};

// Reads both files. With `require_standard_sizes` the record counts must be 50,000 and 10,000.
CifarSplits load_cifar100(const std::filesystem::path& train_path,
                          const std::filesystem::path& test_path,
                          bool require_standard_sizes = true);

// ---------------------------------------------------------------------------
// Synthetic hierarchy: superclass centers ~ N(0, s_super^2 I), fine centers
// ~ N(center_super, (s_super / 4)^2 I), instances ~ N(center_fine, s_fine^2 I).

struct SyntheticSpec {
  HierarchySpec hierarchy;
  std::size_t per_class = 0;
  std::size_t dim = 0;
  double sigma_fine = 1.0;
  double sigma_super = 1.0;
  std::uint64_t seed = 0;
};

Dataset gen_synthetic_hierarchy(const SyntheticSpec& spec);

// Deterministic split keeping the first `per_class - test_per_class`
// instances of each fine class for training and the rest for testing.
std::pair<Dataset, Dataset> split_per_class(const Dataset& data, std::size_t test_per_class);

// ---------------------------------------------------------------------------
// Coarse (set-level) tasks.

enum class CoarseTask { unique_count, most_frequent };

const char* to_string(CoarseTask task);
CoarseTask coarse_task_from_string(const std::string& name);

struct SizeRange {
  std::size_t min = 6;
  std::size_t max = 10;
};

struct CoarseSetExample {
  std::vector<std::size_t> members;  // indices into the source dataset; may repeat
  int label = 0;
};

struct CoarseCorpus {
  DatasetPtr source;
  std::vector<CoarseSetExample> sets;
  CoarseTask task = CoarseTask::most_frequent;
  SizeRange size_range;

  // Categorical label count: superclasses, or max set size + 1 for counts.
  int num_labels() const;
  std::size_t size() const { return sets.size(); }
};

// Number of distinct superclasses among the members.
int unique_superclass_count(const Dataset& data, std::span<const std::size_t> members);

// Superclasses attaining the maximal member count, ascending.
std::vector<int> superclass_modes(const Dataset& data, std::span<const std::size_t> members);

// Mode of `super_labels`; ties resolved by a uniform draw from `rng`.
int most_frequent_label(std::span<const int> super_labels, Rng& rng);

CoarseCorpus build_unique_count_sets(DatasetPtr data, std::size_t num_sets, SizeRange sizes,
                                     std::uint64_t seed);
CoarseCorpus build_most_frequent_sets(DatasetPtr data, std::size_t num_sets, SizeRange sizes,
                                      std::uint64_t seed);
CoarseCorpus build_coarse_sets(CoarseTask task, DatasetPtr data, std::size_t num_sets,
                               SizeRange sizes, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Meta-tasks.

struct MetaTask {
  std::vector<std::size_t> support;  // dataset indices
  std::vector<int> support_labels;   // remapped to [0, way)
  std::vector<std::size_t> query;
  std::vector<int> query_labels;
  std::vector<int> classes;  // classes[remapped] = original fine label

  int way() const { return static_cast<int>(classes.size()); }
};

// Instance indices grouped by fine label.
class FineClassIndex {
 public:
  explicit FineClassIndex(const Dataset& data);
  const std::vector<std::vector<std::size_t>>& members() const { return members_; }
  std::vector<int> nonempty_classes() const;

 private:
  std::vector<std::vector<std::size_t>> members_;
};

MetaTask sample_meta_task(const FineClassIndex& index, int way, int shot, int query,
                          std::uint64_t seed);
MetaTask sample_meta_task(const Dataset& data, int way, int shot, int query = 15,
                          std::uint64_t seed = 0);

}  // namespace facile
