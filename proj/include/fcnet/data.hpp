// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fcnet/model.hpp"

namespace fcnet {

/// The five exposure values every scene is rendered at.
inline const std::vector<double> kCanonicalEvs = {-1.5, -1.0, 0.0, 1.0, 1.5};

/// Maps a tag onto the canonical EV it names; throws FormatError otherwise.
double canonical_ev(double tag);

struct SceneRecord {
  std::string id;
  std::map<double, std::filesystem::path> exposures;  // EV → image
  std::filesystem::path ground_truth;

  std::vector<double> available_evs() const;
};

/// Reads a manifest: one JSON object per line,
///   {"scene": "a0001", "exposures": {"-1.5": "a0001/m15.png", ...}, "gt": "a0001/gt.png"}
/// Relative paths resolve against the manifest's directory. Blank lines and
/// lines starting with '#' are skipped. Every referenced file must exist and
/// all images of a scene must share extents.
std::vector<SceneRecord> load_manifest(const std::filesystem::path& path);

/// Training draw: a length L uniform in [1, min(10, 2·available)], then L
/// exposures sampled uniformly with replacement.
std::vector<double> sample_subsequence(const SceneRecord& scene, std::mt19937_64& rng);

inline constexpr int kMaxSampledFrames = 10;

enum class Task { SEC, UnderEF, OverEF, MEF };

std::string to_string(Task t);
Task parse_task(const std::string& s);

/// EV subsets evaluated per scene. SEC yields one single-frame run per EV;
/// the fusion tasks yield a single run over their subset.
std::vector<std::vector<double>> task_runs(Task task);

/// Loads the ground truth and the requested exposures; images are
/// downscaled so the longer side is at most `max_side` (0 keeps full size).
struct SceneImages {
  ExposureSequence sequence;
  Tensor ground_truth;
};
SceneImages load_scene(const SceneRecord& scene, const std::vector<double>& evs, int max_side = 0);

}  // namespace fcnet
