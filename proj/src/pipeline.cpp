// SPDX-License-Identifier: Apache-2.0

#include "fcnet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

#include "fcnet/image_io.hpp"
#include "fcnet/metrics.hpp"

namespace fcnet {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string StepRecord::to_json() const {
  json j = {{"epoch", epoch}, {"step", step},        {"scene", scene},   {"frames", frames},
            {"lr", lr},       {"L_r", reconstruction}, {"L_pr", pyramid}, {"L_ps", spatial},
            {"total", total}};
  return j.dump();
}

Trainer::Trainer(ModelConfig model, TrainConfig train)
    : train_(std::move(train)), rng_(train_.seed), terms_(LossTerms::from_name(train_.loss_terms)) {
  train_.validate();
  model_ = std::make_unique<Model>(std::move(model), train_.seed);
  optimizer_ = Adam(model_->parameters(), AdamOptions{train_.lr});
}

Trainer::Trainer(Checkpoint checkpoint, TrainConfig train)
    : train_(std::move(train)),
      model_(std::move(checkpoint.model)),
      optimizer_(std::move(checkpoint.optimizer)),
      epoch_(checkpoint.epoch),
      terms_(LossTerms::from_name(train_.loss_terms)) {
  train_.validate();
  if (checkpoint.rng_state.empty()) {
    rng_.seed(train_.seed);
  } else {
    std::istringstream in(checkpoint.rng_state);
    in >> rng_;
    if (!in) throw FormatError("checkpoint holds a malformed RNG state");
  }
}

std::string Trainer::rng_state() const {
  std::ostringstream out;
  out << rng_;
  return out.str();
}

void Trainer::save(const fs::path& path) const { save_checkpoint(path, *model_, optimizer_, epoch_, rng_state()); }

StepRecord Trainer::step(const SceneImages& scene, float lr) {
  const ForwardResult fwd = model_->forward(scene.sequence);
  const PyramidTarget target = gaussian_pyramid(scene.ground_truth, model_->config().depth);
  const LossBreakdown loss = total_loss(fwd.outputs, target, LossWeights{train_.lambda_ps},
                                        SpatialLossConfig{train_.region_size}, terms_);
  ad::backward(loss.total);
  optimizer_.options().lr = lr;
  optimizer_.step(model_->parameters());
  model_->parameters().zero_grad();

  StepRecord rec;
  rec.step = optimizer_.step_count();
  rec.frames = scene.sequence.size();
  rec.lr = lr;
  rec.reconstruction = loss.reconstruction;
  rec.pyramid = loss.pyramid;
  rec.spatial = loss.spatial;
  rec.total = loss.total.value().item();
  return rec;
}

void Trainer::run(const std::vector<SceneRecord>& scenes, const fs::path& out_dir,
                  const std::function<void(const StepRecord&)>& on_step) {
  if (scenes.empty()) throw InvalidArgument("training manifest holds no scenes");
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "loss_log.jsonl", epoch_ == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot open " + (out_dir / "loss_log.jsonl").string());

  std::vector<std::size_t> order(scenes.size());
  bool capped = false;
  while (static_cast<int>(epoch_) < train_.epochs && !capped) {
    const int epoch = static_cast<int>(epoch_) + 1;
    const float lr = train_.lr_at_epoch(epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t idx : order) {
      const SceneRecord& scene = scenes[idx];
      const std::vector<double> evs = sample_subsequence(scene, rng_);
      SceneImages images;
      try {
        images = load_scene(scene, evs, train_.max_side);
      } catch (const IoError& e) {
        throw IoError("scene " + scene.id + ": " + e.what());
      }
      StepRecord rec = step(images, lr);
      rec.epoch = epoch;
      rec.scene = scene.id;
      log << rec.to_json() << '\n';
      log.flush();
      if (on_step) on_step(rec);
      if (train_.max_steps > 0 && optimizer_.step_count() >= train_.max_steps) {
        capped = true;
        break;
      }
    }
    epoch_ = static_cast<std::uint64_t>(epoch);
    const bool last = capped || epoch == train_.epochs;
    if (last || (train_.checkpoint_every > 0 && epoch % train_.checkpoint_every == 0)) {
      std::ostringstream name;
      name << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
      save(out_dir / name.str());
      save(out_dir / "latest.ckpt");
    }
  }
}

Tensor infer(const Model& model, const ExposureSequence& seq) {
  ad::NoGradGuard guard;
  return model.forward(seq).output.value();
}

namespace {

ExposureSequence read_sequence(const std::vector<fs::path>& inputs) {
  if (inputs.empty()) throw InvalidArgument("at least one input image is required");
  ExposureSequence seq;
  for (const fs::path& p : inputs) seq.frames.push_back(read_png(p));
  for (std::size_t i = 1; i < seq.frames.size(); ++i)
    if (seq.frames[i].shape() != seq.frames[0].shape())
      throw ShapeError("input " + inputs[i].string() + " has extents " + to_string(seq.frames[i].shape()) +
                       ", expected " + to_string(seq.frames[0].shape()));
  seq.validate();
  return seq;
}

}  // namespace

void infer_files(const Model& model, const std::vector<fs::path>& inputs, const fs::path& out,
                 const fs::path& dump_dir) {
  const ExposureSequence seq = read_sequence(inputs);
  ad::NoGradGuard guard;
  const ForwardResult fwd = model.forward(seq);
  if (!dump_dir.empty()) {
    fs::create_directories(dump_dir);
    for (int level = 1; level <= model.config().depth; ++level) {
      const auto idx = static_cast<std::size_t>(level - 1);
      if (fwd.fused[idx].defined())
        write_png(dump_dir / ("F_l" + std::to_string(level) + ".png"), fwd.fused[idx].value());
      write_png(dump_dir / ("O_l" + std::to_string(level) + ".png"), fwd.outputs[idx].value());
    }
  }
  write_png(out, fwd.output.value());
}

std::string EvalRow::to_json() const {
  return json{{"scene", scene}, {"task", task}, {"psnr", psnr}, {"ssim", ssim}}.dump();
}

std::string EvalReport::to_jsonl() const {
  std::string out;
  for (const EvalRow& r : scenes) out += r.to_json() + "\n";
  out += mean.to_json() + "\n";
  return out;
}

namespace {

EvalRow evaluate_scene(const Model* model, const SceneRecord& scene, Task task, EvalBypass bypass) {
  EvalRow row{scene.id, to_string(task), 0.0, 0.0};
  const auto runs = task_runs(task);
  int counted = 0;
  for (const auto& evs : runs) {
    std::vector<double> present;
    for (double ev : evs)
      if (scene.exposures.count(ev)) present.push_back(ev);
    if (present.empty()) continue;
    const SceneImages images = load_scene(scene, present, 0);
    const Tensor& gt = images.ground_truth;
    Tensor out;
    switch (bypass) {
      case EvalBypass::GroundTruth:
        out = gt;
        break;
      case EvalBypass::BestInput: {
        double best = -1.0;
        for (const Tensor& f : images.sequence.frames) {
          const double p = psnr(f, gt);
          if (p > best) {
            best = p;
            out = f;
          }
        }
        break;
      }
      case EvalBypass::None:
        if (!model) throw InvalidArgument("evaluation without bypass requires a model");
        out = infer(*model, images.sequence);
        break;
    }
    row.psnr += psnr(out, gt);
    row.ssim += ssim(out, gt);
    ++counted;
  }
  if (counted == 0) throw InvalidArgument("scene " + scene.id + " has none of the exposures task " + to_string(task) + " needs");
  row.psnr /= counted;
  row.ssim /= counted;
  return row;
}

}  // namespace

EvalReport evaluate(const Model* model, const std::vector<SceneRecord>& scenes, Task task, EvalBypass bypass,
                    int workers) {
  EvalReport report;
  report.scenes.resize(scenes.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < scenes.size(); i = next++) {
      try {
        report.scenes[i] = evaluate_scene(model, scenes[i], task, bypass);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::clamp(workers, 1, std::max(1, static_cast<int>(scenes.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  report.mean = {"mean", to_string(task), 0.0, 0.0};
  for (const EvalRow& r : report.scenes) {
    report.mean.psnr += r.psnr;
    report.mean.ssim += r.ssim;
  }
  if (!report.scenes.empty()) {
    report.mean.psnr /= static_cast<double>(report.scenes.size());
    report.mean.ssim /= static_cast<double>(report.scenes.size());
  }
  return report;
}

std::vector<fs::path> pyramid_debug(const fs::path& image, int depth, const fs::path& out_dir) {
  const Tensor img = read_png(image);
  const LaplacianStack stack = lp_decompose(img, depth);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < stack.details.size(); ++i) {
    Tensor shifted = stack.details[i];
    for (float& v : shifted.values()) v += 0.5f;
    const fs::path p = out_dir / ("detail_l" + std::to_string(i + 1) + ".png");
    write_png(p, shifted);
    written.push_back(p);
  }
  const fs::path base = out_dir / ("base_l" + std::to_string(depth) + ".png");
  write_png(base, stack.base);
  written.push_back(base);
  return written;
}

std::string inspect_table(const ModelConfig& config) {
  std::ostringstream out;
  out << "params " << count_params(config) << "\n";
  out << "frames  size   flops(MAC)\n";
  for (int k : {1, 5})
    for (int side : {256, 512, 1024})
      out << std::setw(6) << k << "  " << std::setw(4) << side << "  " << count_flops(config, k, side, side) << "\n";
  return out.str();
}

}  // namespace fcnet
