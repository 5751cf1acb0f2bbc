#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"

#include "facile/datasets.hpp"
#include "facile/error.hpp"
#include "facile/fewshot_eval.hpp"
#include "facile/pipeline.hpp"
#include "selftest.hpp"

using namespace facile;
namespace fs = std::filesystem;

namespace {

Dataset synthetic(int super, int fine, std::size_t per_class, std::size_t dim, std::uint64_t seed,
                  double sigma_fine = 1.0, double sigma_super = 1.0) {
  SyntheticSpec spec;
  spec.hierarchy = HierarchySpec::uniform(super, fine);
  spec.per_class = per_class;
  spec.dim = dim;
  spec.sigma_fine = sigma_fine;
  spec.sigma_super = sigma_super;
  spec.seed = seed;
  return gen_synthetic_hierarchy(spec);
}

// One instance per superclass, super label = index.
Dataset one_per_super(int super) {
  Dataset d;
  d.hierarchy = HierarchySpec::uniform(super, 1);
  d.dim = 1;
  for (int s = 0; s < super; ++s) d.items.push_back({{static_cast<double>(s)}, s, s});
  return d;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("hierarchy validation") {
  const HierarchySpec h = HierarchySpec::uniform(20, 5);
  CHECK(h.num_fine() == 100);
  CHECK(h.super_of(99) == 19);
  HierarchySpec bad{3, {0, 1, 1}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("synthetic generator counts, determinism and separability") {
  const Dataset d = synthetic(2, 2, 10, 4, 1);
  CHECK(d.size() == 40);
  std::set<int> fines;
  for (const auto& it : d.items) {
    fines.insert(it.fine_label);
    CHECK(d.hierarchy.super_of(it.fine_label) == it.super_label);
  }
  CHECK(fines.size() == 4);
  const Dataset again = synthetic(2, 2, 10, 4, 1);
  CHECK(dataset_digest(d) == dataset_digest(again));
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i].features == again[i].features);
  CHECK_THROWS_AS(synthetic(2, 2, 0, 4, 1), ContractError);

  const Dataset sharp = synthetic(4, 3, 20, 8, 9, 0.01, 10.0);
  const MatrixXd x = feature_matrix(sharp);
  std::vector<int> y;
  for (const auto& it : sharp.items) y.push_back(it.fine_label);
  const NearestCentroid nc = nc_fit(x, y, sharp.hierarchy.num_fine());
  CHECK(nc_predict(nc, x) == y);
}

TEST_CASE("split keeps per-class counts") {
  const Dataset d = synthetic(2, 2, 10, 3, 4);
  const auto [train, test] = split_per_class(d, 3);
  CHECK(train.size() == 28);
  CHECK(test.size() == 12);
  CHECK_THROWS(split_per_class(d, 11));
}

TEST_CASE("unique superclass count examples") {
  const Dataset d = one_per_super(13);
  const std::vector<std::size_t> members{3, 3, 7, 7, 7, 12};
  CHECK(unique_superclass_count(d, members) == 3);
  const std::vector<std::size_t> same{4, 4, 4, 4, 4, 4};
  CHECK(unique_superclass_count(d, same) == 1);
  const std::vector<std::size_t> distinct{0, 1, 2, 3, 4, 5};
  CHECK(unique_superclass_count(d, distinct) == 6);
}

TEST_CASE("most frequent label examples and tie rule") {
  Rng rng(1);
  CHECK(most_frequent_label(std::vector<int>{5, 5, 9}, rng) == 5);
  CHECK(most_frequent_label(std::vector<int>{7}, rng) == 7);
  std::map<int, int> counts;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    Rng r(mix_seed(s, 77));
    ++counts[most_frequent_label(std::vector<int>{5, 9}, r)];
  }
  CHECK(counts.size() == 2);
  CHECK(counts[5] >= 450);
  CHECK(counts[5] <= 550);
  CHECK(counts[9] >= 450);
  CHECK(counts[9] <= 550);
}

TEST_CASE("coarse builders re-derive their labels") {
  auto data = std::make_shared<const Dataset>(synthetic(20, 5, 6, 4, 3));
  const CoarseCorpus uc = build_unique_count_sets(data, 500, {6, 10}, 8);
  std::set<std::size_t> sizes;
  for (const auto& s : uc.sets) {
    CHECK(unique_superclass_count(*data, s.members) == s.label);
    sizes.insert(s.members.size());
  }
  CHECK(*sizes.begin() == 6);
  CHECK(*sizes.rbegin() == 10);
  CHECK(uc.num_labels() == 11);

  const CoarseCorpus mf = build_most_frequent_sets(data, 500, {6, 10}, 8);
  CHECK(mf.num_labels() == 20);
  for (const auto& s : mf.sets) {
    const auto modes = superclass_modes(*data, s.members);
    if (modes.size() == 1) {
      CHECK(modes.front() == s.label);
    } else {
      CHECK(std::find(modes.begin(), modes.end(), s.label) != modes.end());
    }
  }
  const CoarseCorpus again = build_most_frequent_sets(data, 500, {6, 10}, 8);
  for (std::size_t i = 0; i < mf.size(); ++i) {
    CHECK(mf.sets[i].members == again.sets[i].members);
    CHECK(mf.sets[i].label == again.sets[i].label);
  }
  CHECK_THROWS_AS(build_unique_count_sets(data, 5, {0, 3}, 1), ContractError);
}

TEST_CASE("meta-task sampling") {
  const Dataset d = synthetic(4, 5, 25, 3, 2);
  const MetaTask t = sample_meta_task(d, 5, 5, 15, 42);
  CHECK(t.support.size() == 25);
  CHECK(t.query.size() == 75);
  const MetaTask u = sample_meta_task(d, 5, 5, 15, 42);
  CHECK(t.support == u.support);
  CHECK(t.query == u.query);

  const MetaTask one = sample_meta_task(d, 1, 1, 1, 3);
  CHECK(one.support.front() != one.query.front());
  CHECK(d[one.support.front()].fine_label == d[one.query.front()].fine_label);

  const FineClassIndex index(d);
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const MetaTask m = sample_meta_task(index, 5, 5, 15, s);
    std::vector<std::size_t> all = m.support;
    all.insert(all.end(), m.query.begin(), m.query.end());
    std::sort(all.begin(), all.end());
    REQUIRE(std::adjacent_find(all.begin(), all.end()) == all.end());
    std::vector<int> sc(5, 0), qc(5, 0);
    for (std::size_t i = 0; i < m.support.size(); ++i) {
      ++sc[static_cast<std::size_t>(m.support_labels[i])];
      REQUIRE(d[m.support[i]].fine_label == m.classes[static_cast<std::size_t>(m.support_labels[i])]);
    }
    for (int l : m.query_labels) ++qc[static_cast<std::size_t>(l)];
    REQUIRE(sc == std::vector<int>(5, 5));
    REQUIRE(qc == std::vector<int>(5, 15));
  }
  CHECK_THROWS_AS(sample_meta_task(d, 5, 15, 15, 1), TaskSamplingError);
}

TEST_CASE("CIFAR-100 fixture round trip and malformed inputs") {
  const fs::path path = temp_file("facile_test_cifar.bin");
  std::vector<unsigned char> first(kCifarPixels), second(kCifarPixels);
  for (std::size_t i = 0; i < kCifarPixels; ++i) {
    first[i] = static_cast<unsigned char>(i % 256);
    second[i] = static_cast<unsigned char>(255 - i % 256);
  }
  facile::testing::write_cifar_fixture(path.string(), {{0, 0, first}, {19, 99, second}});
  CHECK(fs::file_size(path) == 2 * kCifarRecordBytes);
  CHECK(scan_cifar100(path) == 2);
  const Dataset d = read_cifar100(path);
  REQUIRE(d.size() == 2);
  CHECK(d.image.channels == 3);
  CHECK(d[1].super_label == 19);
  CHECK(d[1].fine_label == 99);
  for (std::size_t i = 0; i < kCifarPixels; ++i) {
    REQUIRE(d[0].features[i] == first[i] / 255.0);
    REQUIRE(d[1].features[i] == second[i] / 255.0);
  }
  CHECK_THROWS_AS(load_cifar100(path, path, true), FormatError);
  const CifarSplits loose = load_cifar100(path, path, false);
  CHECK(loose.test.size() == 2);

  for (std::size_t cut : {std::size_t{3073}, std::size_t{1}, 2 * kCifarRecordBytes - 1}) {
    const fs::path bad = temp_file("facile_test_cifar_bad.bin");
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes(cut);
    in.read(bytes.data(), static_cast<std::streamsize>(cut));
    std::ofstream(bad, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(cut));
    CHECK_THROWS_AS(read_cifar100(bad), FormatError);
    fs::remove(bad);
  }

  const fs::path corrupt = temp_file("facile_test_cifar_corrupt.bin");
  facile::testing::write_cifar_fixture(corrupt.string(), {{20, 0, first}});
  CHECK_THROWS_AS(read_cifar100(corrupt), CorruptRecordError);
  facile::testing::write_cifar_fixture(corrupt.string(), {{0, 100, first}});
  CHECK_THROWS_AS(read_cifar100(corrupt), CorruptRecordError);
  CHECK_THROWS_AS(read_cifar100(temp_file("facile_no_such_file.bin")), FormatError);
  fs::remove(corrupt);
  fs::remove(path);
}
