// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "fcnet/model.hpp"
#include "fcnet/optim.hpp"

namespace fcnet {

inline constexpr char kCheckpointMagic[8] = {'F', 'C', 'N', 'E', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers and floats little-endian:
///   magic[8] "FCNETCKP", u32 version
///   str model config (canonical key=value text)
///   u64 epoch, str rng state
///   u64 adam steps, f32 lr, f32 beta1, f32 beta2, f32 eps
///   u32 parameter count, then per parameter in model order:
///     str name, u32 rank, u32 extents[rank], f32 value[numel],
///     f32 first_moment[numel], f32 second_moment[numel]
/// where str is a u32 byte length followed by the bytes.
struct Checkpoint {
  std::unique_ptr<Model> model;
  Adam optimizer;
  std::uint64_t epoch = 0;
  std::string rng_state;
};

std::string encode_checkpoint(const Model& model, const Adam& optimizer, std::uint64_t epoch,
                              const std::string& rng_state);
Checkpoint decode_checkpoint(const std::string& bytes, const ModelConfig* expected = nullptr);

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam& optimizer,
                     std::uint64_t epoch, const std::string& rng_state);
/// Throws ConfigMismatch when `expected` is given and differs from the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace fcnet
