#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace facile::testing {

struct PropertyCheck {
  std::string name;
  std::function<bool()> run;  // true on success; exceptions count as failures
};

struct SelftestReport {
  std::size_t passed = 0;
  std::size_t failed = 0;
};

// Quick property suite covering every module; prints one line per check.
std::vector<PropertyCheck> property_suite();
SelftestReport run_checks(const std::vector<PropertyCheck>& checks, std::ostream& out);
SelftestReport run_selftest(std::ostream& out);

// Writes a CIFAR-100 style file of `records` from (coarse, fine, pixel fill) triples.
struct CifarRecordSpec {
  unsigned char coarse = 0;
  unsigned char fine = 0;
  std::vector<unsigned char> pixels;  // 3072 bytes
};
void write_cifar_fixture(const std::string& path, const std::vector<CifarRecordSpec>& records);

}  // namespace facile::testing
