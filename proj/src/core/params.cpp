#include "adu/core/params.hpp"

#include <cstring>

#include "adu/error.hpp"

namespace adu {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::teacher: return "teacher";
    case Role::student: return "student";
    case Role::adapter: return "adapter";
    case Role::uem: return "uem";
  }
  return "unknown";
}

Role parse_role(std::string_view name) {
  if (name == "teacher") return Role::teacher;
  if (name == "student") return Role::student;
  if (name == "adapter") return Role::adapter;
  if (name == "uem") return Role::uem;
  throw ConfigError("unknown parameter role '" + std::string(name) + "'");
}

Tensor& ModelParams::add(std::string name, Tensor tensor) {
  if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(tensor)});
  return entries_.back().tensor;
}

const Tensor& ModelParams::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

Tensor& ModelParams::at(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ModelParams&>(*this).at(name));
}

bool ModelParams::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

void ModelParams::append(const ModelParams& other) {
  for (const auto& e : other) add(e.name, e.tensor);
}

std::size_t ModelParams::total_numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

ModelParams ModelParams::deep_copy() const {
  ModelParams out(role_);
  for (const auto& e : entries_) out.add(e.name, e.tensor.clone(e.tensor.requires_grad()));
  return out;
}

std::uint64_t checksum(const ModelParams& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& e : params) {
    mix(e.name.data(), e.name.size());
    for (auto d : e.tensor.shape()) mix(&d, sizeof d);
    auto data = e.tensor.data();
    mix(data.data(), data.size() * sizeof(double));
  }
  return h;
}

}  // namespace adu
