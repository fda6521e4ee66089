#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fdq/autodiff.hpp"
#include "fdq/tensor.hpp"

namespace fdq {

// FDQ1 layout (all integers little-endian):
//   "FDQ1" | u32 version | u64 count |
//   count × { u32 name_bytes | name (UTF-8) | u32 rank | rank × u64 dim } |
//   payloads: f32 values of each entry, in manifest order.
// Scalar metadata is stored as shape {1} entries under "meta/"; the estimator
// type is the entry "meta/type/<tag>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

class Checkpoint {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  void add(std::string name, Tensor tensor);
  void add_parameters(const ParameterSet& params, std::string_view prefix = "");
  void load_parameters(ParameterSet& params, std::string_view prefix = "") const;

  void set_meta(std::string_view key, double value);
  double meta(std::string_view key) const;
  std::optional<double> find_meta(std::string_view key) const;

  void set_type(std::string_view tag);
  std::string type() const;

  bool has(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  std::string to_bytes() const;
  static Checkpoint from_bytes(std::string_view bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<Entry> entries_;
};

}  // namespace fdq
