// SPDX-License-Identifier: Apache-2.0
//
// Drives the fcnet executable as a subprocess.

#include <doctest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Scratch {
  fs::path path;
  explicit Scratch(const std::string& tag) {
    std::random_device rd;
    path = fs::temp_directory_path() / ("fcnet_cli_" + tag + "_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Result run(const std::string& args, const fs::path& scratch, const std::string& env = "") {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = env + " " + std::string(FCNET_CLI) + " " + args + " 2>" + err.string();
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

const std::string kTiny =
    "--set depth=2 --set preset=small_small --set fusion_channels=8 --set correction=2x8,2x8 "
    "--set max_side=32 --set lr=0.001 --set checkpoint_every=1";

fs::path fixture(const fs::path& dir, int scenes) {
  const std::string cmd = std::string(FCNET_MAKE_FIXTURE) + " " + dir.string() + " " + std::to_string(scenes) + " 32 9";
  REQUIRE(std::system(cmd.c_str()) == 0);
  return dir / "manifest.jsonl";
}

}  // namespace

TEST_CASE("inspect prints the parameter count and FLOPs table") {
  Scratch s("inspect");
  Result r = run("inspect", s.path);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("params 2078092") != std::string::npos);
  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() == 8);
  for (std::size_t i = 2; i < 8; ++i) {
    std::istringstream row(lines[i]);
    int k = 0, side = 0;
    unsigned long long flops = 0;
    row >> k >> side >> flops;
    CHECK((k == 1 || k == 5));
    CHECK((side == 256 || side == 512 || side == 1024));
    CHECK(flops > 0);
  }

  const fs::path cfg = s.path / "small.cfg";
  std::ofstream(cfg) << "# ablation\npreset=small_small\n";
  Result small = run("inspect --config " + cfg.string(), s.path);
  REQUIRE(small.code == 0);
  CHECK(small.out.find("params 2078092") == std::string::npos);
  Result overridden = run("inspect --config " + cfg.string() + " --set preset=large_small", s.path);
  CHECK(overridden.out.find("params 2078092") != std::string::npos);

  Result bad = run("inspect --set nonsense=1", s.path);
  CHECK(bad.code != 0);
  CHECK(bad.err.find("nonsense") != std::string::npos);
}

TEST_CASE("train is deterministic under a fixed seed and infer/eval consume its output") {
  Scratch s("flow");
  const fs::path manifest = fixture(s.path / "data", 2);
  const std::string base = "train --manifest " + manifest.string() + " " + kTiny + " --set epochs=2 --seed 4 --out ";
  Result a = run(base + (s.path / "a").string(), s.path);
  REQUIRE(a.code == 0);
  Result b = run(base + (s.path / "b").string(), s.path);
  REQUIRE(b.code == 0);
  CHECK(a.out == b.out);
  CHECK(lines_of(a.out).size() == 4);
  CHECK(slurp(s.path / "a" / "latest.ckpt") == slurp(s.path / "b" / "latest.ckpt"));

  const std::string ckpt = (s.path / "a" / "latest.ckpt").string();
  const fs::path scene = s.path / "data" / "scene0";
  Result one = run("infer --checkpoint " + ckpt + " --out " + (s.path / "one.png").string() + " " +
                       (scene / "ev0.png").string(),
                   s.path);
  CHECK(one.code == 0);
  CHECK(fs::exists(s.path / "one.png"));
  std::string all;
  for (const char* tag : {"-1.5", "-1", "0", "1", "1.5"}) all += " " + (scene / (std::string("ev") + tag + ".png")).string();
  Result five = run("infer --checkpoint " + ckpt + " --out " + (s.path / "five.png").string() +
                        " --dump-intermediates " + (s.path / "dump").string() + all,
                    s.path);
  CHECK(five.code == 0);
  CHECK(fs::exists(s.path / "five.png"));
  CHECK(fs::exists(s.path / "dump" / "O_l2.png"));

  Result ev = run("eval --checkpoint " + ckpt + " --manifest " + manifest.string() + " --task under-ef --out " +
                      (s.path / "report.jsonl").string(),
                  s.path, "FCNET_EVAL_WORKERS=2");
  REQUIRE(ev.code == 0);
  const auto rows = lines_of(slurp(s.path / "report.jsonl"));
  REQUIRE(rows.size() == 3);
  double sum = 0;
  for (std::size_t i = 0; i < 2; ++i) sum += json::parse(rows[i])["psnr"].get<double>();
  CHECK(std::fabs(json::parse(rows[2])["psnr"].get<double>() - sum / 2) <= 1e-9);
  CHECK(lines_of(ev.out) == rows);

  Result gt = run("eval --bypass gt --task mef --manifest " + manifest.string(), s.path);
  REQUIRE(gt.code == 0);
  for (const auto& row : lines_of(gt.out)) {
    CHECK(json::parse(row)["psnr"].get<double>() == 100.0);
    CHECK(json::parse(row)["ssim"].get<double>() == 1.0);
  }

  Result resumed = run("train --manifest " + manifest.string() + " " + kTiny + " --set epochs=3 --seed 4 --checkpoint " +
                           ckpt + " --out " + (s.path / "c").string(),
                       s.path);
  CHECK(resumed.code == 0);
  CHECK(lines_of(resumed.out).size() == 2);
}

TEST_CASE("validation failures exit nonzero without partial outputs") {
  Scratch s("errors");
  const fs::path manifest = fixture(s.path / "data", 1);
  Result t = run("train --manifest " + manifest.string() + " " + kTiny + " --set epochs=1 --out " +
                     (s.path / "run").string(),
                 s.path);
  REQUIRE(t.code == 0);
  const std::string ckpt = (s.path / "run" / "latest.ckpt").string();

  std::ofstream(s.path / "empty.png").close();
  Result empty = run("infer --checkpoint " + ckpt + " --out " + (s.path / "o.png").string() + " " +
                         (s.path / "empty.png").string(),
                     s.path);
  CHECK(empty.code != 0);
  CHECK(empty.err.find("empty.png") != std::string::npos);
  CHECK(!fs::exists(s.path / "o.png"));

  Result missing = run("infer --checkpoint " + ckpt + " --out " + (s.path / "o.png").string() + " " +
                           (s.path / "nothere.png").string(),
                       s.path);
  CHECK(missing.code != 0);
  CHECK(missing.err.find("nothere.png") != std::string::npos);

  Result mismatch = run("infer --checkpoint " + ckpt + " --set depth=3 --out " + (s.path / "o.png").string() + " " +
                            (s.path / "data" / "scene0" / "ev0.png").string(),
                        s.path);
  CHECK(mismatch.code != 0);
  CHECK(!fs::exists(s.path / "o.png"));

  std::ofstream(s.path / "bad.jsonl") << "{\"scene\":\"broken\",\"exposures\":{\"0\":\"x.png\"}}\n";
  Result bad_manifest = run("train --manifest " + (s.path / "bad.jsonl").string() + " " + kTiny + " --out " +
                                (s.path / "never").string(),
                            s.path);
  CHECK(bad_manifest.code != 0);
  CHECK(bad_manifest.err.find("broken") != std::string::npos);
  CHECK(!fs::exists(s.path / "never" / "latest.ckpt"));

  Result task = run("eval --bypass gt --task hdr --manifest " + manifest.string(), s.path);
  CHECK(task.code != 0);
  Result no_ckpt = run("eval --task mef --manifest " + manifest.string(), s.path);
  CHECK(no_ckpt.code != 0);
  CHECK(no_ckpt.err.find("--checkpoint") != std::string::npos);
  CHECK(run("", s.path).code != 0);
}

TEST_CASE("pyramid-debug writes one image per level") {
  Scratch s("pd");
  fixture(s.path / "data", 1);
  Result r = run("pyramid-debug " + (s.path / "data" / "scene0" / "gt.png").string() + " --depth 3 --out " +
                     (s.path / "lp").string(),
                 s.path);
  REQUIRE(r.code == 0);
  for (const char* f : {"detail_l1.png", "detail_l2.png", "base_l3.png"}) CHECK(fs::exists(s.path / "lp" / f));
  Result deep = run("pyramid-debug " + (s.path / "data" / "scene0" / "gt.png").string() + " --depth 9 --out " +
                        (s.path / "lp9").string(),
                    s.path);
  CHECK(deep.code != 0);
}
