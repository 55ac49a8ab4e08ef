#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "adu/core/tensor.hpp"

namespace adu {

enum class Role { teacher, student, adapter, uem };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered, uniquely named parameter tensors. The order is the checkpoint
/// layout and the optimizer-state layout.
class ModelParams {
 public:
  explicit ModelParams(Role role = Role::student) : role_(role) {}

  Role role() const { return role_; }
  void set_role(Role role) { role_ = role; }

  /// Registers a new leaf. Throws ContractError on duplicate names.
  Tensor& add(std::string name, Tensor tensor);
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  bool contains(std::string_view name) const;

  /// Appends every entry of `other` (names must stay unique).
  void append(const ModelParams& other);

  std::size_t size() const { return entries_.size(); }
  std::size_t total_numel() const;
  void zero_grad();
  /// Fresh leaves with copied values; gradients are not copied.
  ModelParams deep_copy() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  Role role_;
  std::deque<NamedTensor> entries_;  // stable references across add()
};

/// FNV-1a over names, shapes and the raw bytes of every value.
std::uint64_t checksum(const ModelParams& params);

}  // namespace adu
