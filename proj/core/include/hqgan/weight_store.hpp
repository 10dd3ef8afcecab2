#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hqgan/nn.hpp"
#include "hqgan/tensor.hpp"

namespace hqgan {

/// One named tensor payload inside a store.
struct WeightRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Ordered collection of named weights with a simple binary file format:
/// little-endian, length-prefixed records and a trailing content checksum.
/// The format is deliberately dumb so other tools can produce it.
class WeightStore {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  void add(std::string name, Shape shape, std::vector<double> values);
  const WeightRecord* find(const std::string& name) const;
  const std::vector<WeightRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }

 private:
  std::vector<WeightRecord> records_;
};

/// Serialization. Load verifies the checksum and the format version.
void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

/// Copies live network state into a store / back. Import requires every
/// entry to be present with an identical shape and reports the first
/// mismatching layer by name.
WeightStore export_state(const std::vector<StateEntry>& entries);
void import_state(std::vector<StateEntry> entries, const WeightStore& store);

}  // namespace hqgan
