// SPDX-License-Identifier: Apache-2.0

#include "fcnet/fcnet.h"

#include <cstring>
#include <exception>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "fcnet/checkpoint.hpp"
#include "fcnet/config.hpp"
#include "fcnet/image_io.hpp"
#include "fcnet/pipeline.hpp"

struct fcnet_model {
  fcnet::Checkpoint state;
};

namespace {

thread_local std::string g_last_error;

fcnet_status fail(fcnet_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
fcnet_status guarded(F&& body) {
  try {
    body();
    return FCNET_OK;
  } catch (const fcnet::ConfigMismatch& e) {
    return fail(FCNET_ERR_CONFIG_MISMATCH, e.what());
  } catch (const fcnet::ShapeError& e) {
    return fail(FCNET_ERR_SHAPE, e.what());
  } catch (const fcnet::InvalidArgument& e) {
    return fail(FCNET_ERR_INVALID_ARGUMENT, e.what());
  } catch (const fcnet::IoError& e) {
    return fail(FCNET_ERR_IO, e.what());
  } catch (const fcnet::FormatError& e) {
    return fail(FCNET_ERR_FORMAT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(FCNET_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(FCNET_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FCNET_ERR_INTERNAL, "unknown failure");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw fcnet::InvalidArgument(what);
}

fcnet::KeyValues parse_config(const char* text) {
  fcnet::KeyValues kv = fcnet::parse_key_values(text ? text : "");
  fcnet::check_known_keys(kv);
  return kv;
}

}  // namespace

extern "C" {

const char* fcnet_status_string(fcnet_status status) {
  switch (status) {
    case FCNET_OK: return "ok";
    case FCNET_ERR_INVALID_ARGUMENT: return "invalid argument";
    case FCNET_ERR_SHAPE: return "shape error";
    case FCNET_ERR_IO: return "i/o error";
    case FCNET_ERR_FORMAT: return "format error";
    case FCNET_ERR_CONFIG_MISMATCH: return "config mismatch";
    case FCNET_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* fcnet_last_error(void) { return g_last_error.c_str(); }

fcnet_status fcnet_model_create(const char* config_text, uint64_t seed, fcnet_model** out) {
  return guarded([&] {
    require(out != nullptr, "fcnet_model_create: out is null");
    *out = nullptr;
    const fcnet::ModelConfig cfg = fcnet::model_config_from(parse_config(config_text));
    auto handle = std::make_unique<fcnet_model>();
    handle->state.model = std::make_unique<fcnet::Model>(cfg, seed);
    handle->state.optimizer = fcnet::Adam(handle->state.model->parameters(), fcnet::AdamOptions{});
    *out = handle.release();
  });
}

fcnet_status fcnet_model_load(const char* path, const char* config_text, fcnet_model** out) {
  return guarded([&] {
    require(out != nullptr, "fcnet_model_load: out is null");
    require(path != nullptr, "fcnet_model_load: path is null");
    *out = nullptr;
    auto handle = std::make_unique<fcnet_model>();
    if (config_text) {
      const fcnet::ModelConfig expected = fcnet::model_config_from(parse_config(config_text));
      handle->state = fcnet::load_checkpoint(path, &expected);
    } else {
      handle->state = fcnet::load_checkpoint(path);
    }
    *out = handle.release();
  });
}

fcnet_status fcnet_model_save(const fcnet_model* model, const char* path) {
  return guarded([&] {
    require(model != nullptr && path != nullptr, "fcnet_model_save: null argument");
    fcnet::save_checkpoint(path, *model->state.model, model->state.optimizer, model->state.epoch,
                           model->state.rng_state);
  });
}

void fcnet_model_destroy(fcnet_model* model) { delete model; }

fcnet_status fcnet_model_param_count(const fcnet_model* model, uint64_t* out) {
  return guarded([&] {
    require(model != nullptr && out != nullptr, "fcnet_model_param_count: null argument");
    *out = model->state.model->parameters().scalar_count();
  });
}

fcnet_status fcnet_model_depth(const fcnet_model* model, int* out) {
  return guarded([&] {
    require(model != nullptr && out != nullptr, "fcnet_model_depth: null argument");
    *out = model->state.model->config().depth;
  });
}

fcnet_status fcnet_model_forward(const fcnet_model* model, const float* frames, int k, int h, int w, float* out) {
  return guarded([&] {
    require(model != nullptr && frames != nullptr && out != nullptr, "fcnet_model_forward: null argument");
    require(k >= 1 && h >= 1 && w >= 1, "fcnet_model_forward: k, h and w must be positive");
    const std::size_t frame = static_cast<std::size_t>(3) * h * w;
    fcnet::ExposureSequence seq;
    for (int i = 0; i < k; ++i) {
      fcnet::Tensor t({1, 3, h, w});
      std::memcpy(t.data(), frames + frame * i, frame * sizeof(float));
      seq.frames.push_back(std::move(t));
    }
    const fcnet::Tensor result = fcnet::infer(*model->state.model, seq);
    std::memcpy(out, result.data(), frame * sizeof(float));
  });
}

fcnet_status fcnet_count_params(const char* config_text, uint64_t* out) {
  return guarded([&] {
    require(out != nullptr, "fcnet_count_params: out is null");
    *out = fcnet::count_params(fcnet::model_config_from(parse_config(config_text)));
  });
}

fcnet_status fcnet_count_flops(const char* config_text, int k, int h, int w, uint64_t* out) {
  return guarded([&] {
    require(out != nullptr, "fcnet_count_flops: out is null");
    *out = fcnet::count_flops(fcnet::model_config_from(parse_config(config_text)), k, h, w);
  });
}

fcnet_status fcnet_config_canonical(const char* config_text, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    const fcnet::KeyValues kv = parse_config(config_text);
    const std::string text = fcnet::to_text(fcnet::model_config_from(kv)) + fcnet::to_text(fcnet::train_config_from(kv));
    if (needed) *needed = text.size() + 1;
    if (buffer && capacity > 0) {
      const std::size_t n = std::min(capacity - 1, text.size());
      std::memcpy(buffer, text.data(), n);
      buffer[n] = '\0';
    }
  });
}

fcnet_status fcnet_infer_files(const fcnet_model* model, const char* const* inputs, int count, const char* out_path,
                               const char* dump_dir) {
  return guarded([&] {
    require(model != nullptr && out_path != nullptr, "fcnet_infer_files: null argument");
    require(count >= 1 && inputs != nullptr, "fcnet_infer_files: at least one input is required");
    std::vector<std::filesystem::path> paths;
    for (int i = 0; i < count; ++i) {
      require(inputs[i] != nullptr, "fcnet_infer_files: null input path");
      paths.emplace_back(inputs[i]);
    }
    fcnet::infer_files(*model->state.model, paths, out_path, dump_dir ? dump_dir : "");
  });
}

fcnet_status fcnet_train(const char* manifest, const char* config_text, const char* out_dir,
                         const char* resume_checkpoint, fcnet_line_callback on_step, void* user) {
  return guarded([&] {
    require(manifest != nullptr && out_dir != nullptr, "fcnet_train: manifest and out_dir are required");
    const fcnet::KeyValues kv = parse_config(config_text);
    const fcnet::ModelConfig model_cfg = fcnet::model_config_from(kv);
    const fcnet::TrainConfig train_cfg = fcnet::train_config_from(kv);
    const std::vector<fcnet::SceneRecord> scenes = fcnet::load_manifest(manifest);
    std::unique_ptr<fcnet::Trainer> trainer;
    if (resume_checkpoint) {
      trainer = std::make_unique<fcnet::Trainer>(fcnet::load_checkpoint(resume_checkpoint, &model_cfg), train_cfg);
    } else {
      trainer = std::make_unique<fcnet::Trainer>(model_cfg, train_cfg);
    }
    std::function<void(const fcnet::StepRecord&)> cb;
    if (on_step)
      cb = [&](const fcnet::StepRecord& rec) { on_step(rec.to_json().c_str(), user); };
    trainer->run(scenes, out_dir, cb);
  });
}

fcnet_status fcnet_eval(const fcnet_model* model, const char* manifest, const char* task, const char* bypass,
                        int workers, const char* report_path, fcnet_line_callback on_row, void* user) {
  return guarded([&] {
    require(manifest != nullptr && task != nullptr, "fcnet_eval: manifest and task are required");
    fcnet::EvalBypass mode = fcnet::EvalBypass::None;
    const std::string b = bypass ? bypass : "none";
    if (b == "gt") {
      mode = fcnet::EvalBypass::GroundTruth;
    } else if (b == "best-input") {
      mode = fcnet::EvalBypass::BestInput;
    } else if (b != "none") {
      throw fcnet::InvalidArgument("unknown bypass '" + b + "' (expected none, gt, best-input)");
    }
    require(mode != fcnet::EvalBypass::None || model != nullptr, "fcnet_eval: a model is required without bypass");
    const std::vector<fcnet::SceneRecord> scenes = fcnet::load_manifest(manifest);
    const fcnet::EvalReport report = fcnet::evaluate(model ? model->state.model.get() : nullptr, scenes,
                                                     fcnet::parse_task(task), mode, workers);
    if (report_path) fcnet::write_file_atomic(report_path, report.to_jsonl());
    if (on_row) {
      for (const fcnet::EvalRow& row : report.scenes) on_row(row.to_json().c_str(), user);
      on_row(report.mean.to_json().c_str(), user);
    }
  });
}

fcnet_status fcnet_pyramid_debug(const char* image, int depth, const char* out_dir) {
  return guarded([&] {
    require(image != nullptr && out_dir != nullptr, "fcnet_pyramid_debug: null argument");
    fcnet::pyramid_debug(image, depth, out_dir);
  });
}

}  // extern "C"
