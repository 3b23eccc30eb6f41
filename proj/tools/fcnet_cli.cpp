// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Talks to the library only through the C API.

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fcnet/fcnet.h"

namespace {

struct ModelHandle {
  fcnet_model* ptr = nullptr;
  ~ModelHandle() { fcnet_model_destroy(ptr); }
};

int report(fcnet_status status, const std::string& context) {
  if (status == FCNET_OK) return 0;
  std::cerr << "fcnet " << context << ": " << fcnet_status_string(status) << ": " << fcnet_last_error() << "\n";
  return 1;
}

// Config file contents followed by flag overrides; later keys win.
struct ConfigSource {
  std::string file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  bool empty() const { return file.empty() && overrides.empty() && !seed; }

  std::string text() const {
    std::string out;
    if (!file.empty()) {
      std::ifstream in(file, std::ios::binary);
      if (!in) throw std::runtime_error("cannot read config file " + file);
      std::ostringstream ss;
      ss << in.rdbuf();
      out = ss.str();
      if (!out.empty() && out.back() != '\n') out += '\n';
    }
    for (const std::string& kv : overrides) out += kv + "\n";
    if (seed) out += "seed=" + std::to_string(*seed) + "\n";
    return out;
  }
};

void add_config_flags(CLI::App* cmd, ConfigSource& src) {
  cmd->add_option("--config", src.file, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", src.overrides, "override one config key (key=value); repeatable");
  cmd->add_option("--seed", src.seed, "RNG seed");
}

int eval_workers() {
  const char* env = std::getenv("FCNET_EVAL_WORKERS");
  if (!env || !*env) return 1;
  try {
    const int n = std::stoi(env);
    return n > 0 ? n : 1;
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("FCNET_EVAL_WORKERS is not an integer: ") + env);
  }
}

void print_line(const char* line, void*) { std::cout << line << "\n" << std::flush; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fusion-correction network for exposure correction and multi-exposure fusion"};
  app.require_subcommand(1);

  ConfigSource train_cfg, infer_cfg, eval_cfg, inspect_cfg;

  std::string train_manifest, train_out, train_resume;
  CLI::App* train = app.add_subcommand("train", "train on a JSONL scene manifest");
  train->add_option("--manifest", train_manifest, "scene manifest")->required();
  train->add_option("--out", train_out, "output directory for checkpoints and loss_log.jsonl")->required();
  train->add_option("--checkpoint", train_resume, "resume from this checkpoint");
  add_config_flags(train, train_cfg);

  std::string infer_ckpt, infer_out, infer_dump;
  std::vector<std::string> infer_inputs;
  CLI::App* infer = app.add_subcommand("infer", "run a trained model on 1..K exposures");
  infer->add_option("--checkpoint", infer_ckpt, "model checkpoint")->required();
  infer->add_option("--out", infer_out, "output PNG")->required();
  infer->add_option("--dump-intermediates", infer_dump, "directory for per-level F/O images");
  infer->add_option("inputs", infer_inputs, "input PNGs, same extents")->required();
  add_config_flags(infer, infer_cfg);

  std::string eval_ckpt, eval_manifest, eval_task = "mef", eval_out, eval_bypass = "none";
  CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM report over a manifest");
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint");
  eval->add_option("--manifest", eval_manifest, "scene manifest")->required();
  eval->add_option("--task", eval_task, "task preset")
      ->check(CLI::IsMember({"sec", "under-ef", "over-ef", "mef"}));
  eval->add_option("--out", eval_out, "write the JSONL report here");
  eval->add_option("--bypass", eval_bypass, "score without the model")
      ->check(CLI::IsMember({"none", "gt", "best-input"}));
  add_config_flags(eval, eval_cfg);

  CLI::App* inspect = app.add_subcommand("inspect", "parameter and FLOP counts for a config");
  add_config_flags(inspect, inspect_cfg);

  std::string pd_image, pd_out;
  int pd_depth = 4;
  CLI::App* pd = app.add_subcommand("pyramid-debug", "dump Laplacian levels of an image");
  pd->add_option("image", pd_image, "input PNG")->required();
  pd->add_option("--out", pd_out, "output directory")->required();
  pd->add_option("--depth", pd_depth, "pyramid depth")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const std::string cfg = train_cfg.text();
      return report(fcnet_train(train_manifest.c_str(), cfg.c_str(), train_out.c_str(),
                                train_resume.empty() ? nullptr : train_resume.c_str(), print_line, nullptr),
                    "train");
    }
    if (*infer) {
      ModelHandle model;
      const std::string cfg = infer_cfg.text();
      if (int rc = report(fcnet_model_load(infer_ckpt.c_str(), infer_cfg.empty() ? nullptr : cfg.c_str(), &model.ptr),
                          "infer"))
        return rc;
      std::vector<const char*> paths;
      for (const std::string& p : infer_inputs) paths.push_back(p.c_str());
      return report(fcnet_infer_files(model.ptr, paths.data(), static_cast<int>(paths.size()), infer_out.c_str(),
                                      infer_dump.empty() ? nullptr : infer_dump.c_str()),
                    "infer");
    }
    if (*eval) {
      ModelHandle model;
      if (eval_bypass == "none") {
        if (eval_ckpt.empty()) {
          std::cerr << "fcnet eval: --checkpoint is required unless --bypass is given\n";
          return 1;
        }
        const std::string cfg = eval_cfg.text();
        if (int rc = report(fcnet_model_load(eval_ckpt.c_str(), eval_cfg.empty() ? nullptr : cfg.c_str(), &model.ptr),
                            "eval"))
          return rc;
      }
      return report(fcnet_eval(model.ptr, eval_manifest.c_str(), eval_task.c_str(), eval_bypass.c_str(),
                               eval_workers(), eval_out.empty() ? nullptr : eval_out.c_str(), print_line, nullptr),
                    "eval");
    }
    if (*inspect) {
      const std::string cfg = inspect_cfg.text();
      std::uint64_t params = 0;
      if (int rc = report(fcnet_count_params(cfg.c_str(), &params), "inspect")) return rc;
      std::printf("params %llu (%.3fM)\n", static_cast<unsigned long long>(params), params / 1e6);
      std::printf("%6s %6s %16s %10s\n", "frames", "side", "flops", "GFLOPs");
      for (int k : {1, 5})
        for (int side : {256, 512, 1024}) {
          std::uint64_t flops = 0;
          if (int rc = report(fcnet_count_flops(cfg.c_str(), k, side, side, &flops), "inspect")) return rc;
          std::printf("%6d %6d %16llu %10.3f\n", k, side, static_cast<unsigned long long>(flops), flops / 1e9);
        }
      return 0;
    }
    if (*pd) return report(fcnet_pyramid_debug(pd_image.c_str(), pd_depth, pd_out.c_str()), "pyramid-debug");
  } catch (const std::exception& e) {
    std::cerr << "fcnet: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
