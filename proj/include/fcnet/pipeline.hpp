// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fcnet/checkpoint.hpp"
#include "fcnet/config.hpp"
#include "fcnet/data.hpp"
#include "fcnet/losses.hpp"
#include "fcnet/model.hpp"

namespace fcnet {

struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  std::string scene;
  int frames = 0;
  float lr = 0.0f;
  double reconstruction = 0.0;
  double pyramid = 0.0;
  double spatial = 0.0;
  double total = 0.0;

  /// One JSON object on a single line.
  std::string to_json() const;
};

/// Owns a model and its optimizer for one training run.
class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig train);
  /// Resumes from a checkpoint; the stored epoch and RNG state carry over.
  Trainer(Checkpoint checkpoint, TrainConfig train);

  /// One optimization step on a loaded scene. Gradients are cleared afterwards.
  StepRecord step(const SceneImages& scene, float lr);

  /// Epoch loop over `scenes`. Writes loss_log.jsonl (flushed per step) and
  /// checkpoints into `out_dir`; `on_step` sees every step record.
  void run(const std::vector<SceneRecord>& scenes, const std::filesystem::path& out_dir,
           const std::function<void(const StepRecord&)>& on_step = {});

  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  Adam& optimizer() { return optimizer_; }
  std::mt19937_64& rng() { return rng_; }
  std::uint64_t epoch() const { return epoch_; }
  std::int64_t steps() const { return optimizer_.step_count(); }
  std::string rng_state() const;
  void save(const std::filesystem::path& path) const;

 private:
  TrainConfig train_;
  std::unique_ptr<Model> model_;
  Adam optimizer_;
  std::mt19937_64 rng_;
  std::uint64_t epoch_ = 0;
  LossTerms terms_;
};

/// Runs the model without recording a graph; returns O¹.
Tensor infer(const Model& model, const ExposureSequence& seq);

/// Reads the inputs, writes O¹ clamped to 8-bit PNG. With `dump_dir`, also
/// writes F_l<i>.png and O_l<i>.png for every level.
void infer_files(const Model& model, const std::vector<std::filesystem::path>& inputs,
                 const std::filesystem::path& out, const std::filesystem::path& dump_dir = {});

enum class EvalBypass {
  None,       // run the model
  GroundTruth,  // score the ground truth against itself
  BestInput,  // score the best single input frame of each run
};

struct EvalRow {
  std::string scene;
  std::string task;
  double psnr = 0.0;
  double ssim = 0.0;

  std::string to_json() const;
};

struct EvalReport {
  std::vector<EvalRow> scenes;
  EvalRow mean;

  /// Per-scene rows followed by one summary row (scene "mean").
  std::string to_jsonl() const;
};

/// Scores every scene under the task's EV runs. SEC averages the five
/// single-exposure runs of a scene. `model` may be null when bypassing.
EvalReport evaluate(const Model* model, const std::vector<SceneRecord>& scenes, Task task, EvalBypass bypass,
                    int workers = 1);

/// Writes base and detail levels of the Laplacian decomposition as PNGs
/// (details shifted by +0.5). Returns the written paths.
std::vector<std::filesystem::path> pyramid_debug(const std::filesystem::path& image, int depth,
                                                 const std::filesystem::path& out_dir);

/// Parameter count plus FLOPs for K ∈ {1, 5} at 256/512/1024 square inputs.
std::string inspect_table(const ModelConfig& config);

}  // namespace fcnet
