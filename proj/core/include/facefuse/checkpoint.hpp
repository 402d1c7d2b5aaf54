#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "facefuse/nn/layers.hpp"

// Versioned single-file container holding a network kind, its configuration
// (JSON text) and named float32 parameter tensors.
namespace facefuse::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
  std::string kind;
  std::string config_json;
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;
};

std::vector<std::uint8_t> encode(const Checkpoint& ckpt);
Checkpoint decode(std::span<const std::uint8_t> data);
void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

Checkpoint capture(std::string kind, std::string config_json,
                   const nn::ParameterSet<float>& params);
// Copies stored values into `params`; names and shapes must match exactly.
void restore(const Checkpoint& ckpt, nn::ParameterSet<float>& params);

}  // namespace facefuse::checkpoint
