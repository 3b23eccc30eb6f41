// SPDX-License-Identifier: Apache-2.0

#include "fcnet/data.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "fcnet/image_io.hpp"

namespace fcnet {

namespace fs = std::filesystem;
using json = nlohmann::json;

double canonical_ev(double tag) {
  for (double ev : kCanonicalEvs)
    if (std::fabs(ev - tag) < 1e-9) return ev;
  throw FormatError("unknown EV tag " + std::to_string(tag));
}

std::vector<double> SceneRecord::available_evs() const {
  std::vector<double> evs;
  for (const auto& [ev, _] : exposures) evs.push_back(ev);
  return evs;
}

namespace {

SceneRecord parse_record(const json& j, const fs::path& root, int line_no) {
  SceneRecord rec;
  if (!j.is_object() || !j.contains("scene") || !j["scene"].is_string())
    throw FormatError("manifest line " + std::to_string(line_no) + ": missing scene id");
  rec.id = j["scene"].get<std::string>();
  auto fail = [&](const std::string& why) { throw FormatError("scene " + rec.id + ": " + why); };

  if (!j.contains("gt") || !j["gt"].is_string() || j["gt"].get<std::string>().empty())
    fail("missing ground-truth path");
  rec.ground_truth = root / j["gt"].get<std::string>();
  if (!j.contains("exposures") || !j["exposures"].is_object() || j["exposures"].empty())
    fail("no exposures listed");
  for (const auto& [key, value] : j["exposures"].items()) {
    double tag = 0.0;
    try {
      std::size_t used = 0;
      tag = std::stod(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      fail("malformed EV tag '" + key + "'");
    }
    double ev = 0.0;
    try {
      ev = canonical_ev(tag);
    } catch (const FormatError&) {
      fail("unknown EV tag '" + key + "'");
    }
    if (!value.is_string()) fail("exposure path for EV " + key + " is not a string");
    rec.exposures[ev] = root / value.get<std::string>();
  }

  const auto extents = [&](const fs::path& p) {
    try {
      return png_extents(p);
    } catch (const IoError& e) {
      fail(e.what());
    }
    return std::pair<int, int>{};
  };
  const auto gt_extents = extents(rec.ground_truth);
  for (const auto& [ev, p] : rec.exposures)
    if (extents(p) != gt_extents) fail("extent mismatch between " + p.string() + " and ground truth");
  return rec;
}

}  // namespace

std::vector<SceneRecord> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path root = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::vector<SceneRecord> scenes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      scenes.push_back(parse_record(j, root, line_no));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return scenes;
}

std::vector<double> sample_subsequence(const SceneRecord& scene, std::mt19937_64& rng) {
  const std::vector<double> evs = scene.available_evs();
  if (evs.empty()) throw InvalidArgument("scene " + scene.id + " has no exposures");
  const int max_len = std::min(kMaxSampledFrames, 2 * static_cast<int>(evs.size()));
  std::uniform_int_distribution<int> length(1, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, evs.size() - 1);
  const int len = length(rng);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) out.push_back(evs[pick(rng)]);
  return out;
}

std::string to_string(Task t) {
  switch (t) {
    case Task::SEC: return "sec";
    case Task::UnderEF: return "under-ef";
    case Task::OverEF: return "over-ef";
    case Task::MEF: return "mef";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "sec") return Task::SEC;
  if (s == "under-ef") return Task::UnderEF;
  if (s == "over-ef") return Task::OverEF;
  if (s == "mef") return Task::MEF;
  throw InvalidArgument("unknown task: " + s + " (expected sec, under-ef, over-ef, mef)");
}

std::vector<std::vector<double>> task_runs(Task task) {
  switch (task) {
    case Task::SEC: {
      std::vector<std::vector<double>> runs;
      for (double ev : kCanonicalEvs) runs.push_back({ev});
      return runs;
    }
    case Task::UnderEF: return {{0.0, -1.0, -1.5}};
    case Task::OverEF: return {{0.0, 1.0, 1.5}};
    case Task::MEF: return {kCanonicalEvs};
  }
  return {};
}

SceneImages load_scene(const SceneRecord& scene, const std::vector<double>& evs, int max_side) {
  SceneImages out;
  out.ground_truth = limit_longer_side(read_png(scene.ground_truth), max_side);
  // Each distinct exposure is decoded once even when sampled repeatedly.
  std::map<double, Tensor> cache;
  for (double ev : evs) {
    auto it = scene.exposures.find(ev);
    if (it == scene.exposures.end())
      throw InvalidArgument("scene " + scene.id + " has no exposure at EV " + std::to_string(ev));
    auto [pos, inserted] = cache.try_emplace(ev);
    if (inserted) pos->second = limit_longer_side(read_png(it->second), max_side);
    out.sequence.frames.push_back(pos->second);
    out.sequence.ev_tags.push_back(ev);
  }
  out.sequence.validate();
  return out;
}

}  // namespace fcnet
