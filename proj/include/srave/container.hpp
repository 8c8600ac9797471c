#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "srave/error.hpp"
#include "srave/tensor.hpp"

namespace srave {

/// Portable named-tensor file.
///
///   "SRAV" | version u32 | count u32 |
///   per entry: name_len u16 | name (UTF-8) | rank u8 | dims u32 x rank | float32 payload
///
/// All integers and floats little-endian.
class WeightContainer {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(std::string name, Tensor t);         ///< throws on duplicate name
  void set(std::string name, Tensor t);         ///< insert or replace
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;  ///< throws ModelError if absent
  const Tensor* find(std::string_view name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Text stored as one float per byte in a 1-D tensor.
  void put_text(std::string name, std::string_view text);
  std::string get_text(std::string_view name) const;

  bool operator==(const WeightContainer&) const = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

class ContainerError : public ModelError {
 public:
  enum class Kind { BadMagic, VersionMismatch, Truncated, DuplicateName, Io, Malformed };
  ContainerError(Kind kind, const std::string& what) : ModelError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<char> serialize_container(const WeightContainer& c);
WeightContainer parse_container(const std::vector<char>& bytes);

void save_container(const WeightContainer& c, const std::filesystem::path& path);
WeightContainer load_container(const std::filesystem::path& path);

}  // namespace srave
