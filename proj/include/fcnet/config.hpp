// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fcnet/losses.hpp"
#include "fcnet/model.hpp"

namespace fcnet {

struct TrainConfig {
  float lr = 1e-4f;
  float lr_decay = 0.8f;
  int lr_decay_every = 50;  // epochs
  int epochs = 150;
  int max_steps = 0;        // 0 = no cap
  float lambda_ps = 4000.0f;
  std::string loss_terms = "r+pr+ps";
  int region_size = 4;
  std::uint64_t seed = 0;
  int max_side = 512;       // training images are downscaled to this longer side
  int checkpoint_every = 10;  // epochs; the final epoch is always written

  /// Learning rate in effect during 1-based `epoch`.
  float lr_at_epoch(int epoch) const;
  void validate() const;
};

/// Ordered key=value pairs; later assignments override earlier ones.
/// '#' starts a comment line.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);

/// Builds a config from the recognised keys; `depth` and `preset` are applied
/// before the per-level lists.
ModelConfig model_config_from(const KeyValues& kv);
TrainConfig train_config_from(const KeyValues& kv);

/// Rejects keys that belong to neither config.
void check_known_keys(const KeyValues& kv);

/// Canonical text listing every field; parses back to an equal config.
std::string to_text(const ModelConfig& cfg);
std::string to_text(const TrainConfig& cfg);

}  // namespace fcnet
