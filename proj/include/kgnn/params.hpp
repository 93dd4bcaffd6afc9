#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgnn/tensor.hpp"

namespace kgnn {

// Wire values are fixed; they appear in the checkpoint and protocol encodings.
enum class ParamKind : std::uint8_t {
  kEntityEmb = 0,
  kRelationEmb = 1,
  kHyperplane = 2,
  kProjMatrix = 3,
  kAttnWeight = 4,
  kLstmWeight = 5,
  kAttrProj = 6,
};

inline constexpr std::uint8_t kNumParamKinds = 7;

std::string_view to_string(ParamKind kind);
std::optional<ParamKind> param_kind_from_byte(std::uint8_t b);

struct ParamKey {
  ParamKind kind = ParamKind::kEntityEmb;
  std::uint64_t id = 0;

  friend auto operator<=>(const ParamKey&, const ParamKey&) = default;
};

std::string to_string(const ParamKey& key);

struct ParamKeyHash {
  std::size_t operator()(const ParamKey& k) const noexcept {
    return std::hash<std::uint64_t>{}((k.id << 3) ^ static_cast<std::uint64_t>(k.kind));
  }
};

// Sparse key -> tensor maps. Sorted so that iteration order is deterministic.
using ParameterSet = std::map<ParamKey, Tensor>;
using GradientMap = std::map<ParamKey, Tensor>;

}  // namespace kgnn
