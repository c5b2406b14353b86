#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
  const fs::path out = fs::temp_directory_path() / "vqtt_cli_capture.txt";
  const std::string cmd = std::string(VQTT_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream f(out);
  r.output.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("--help exits zero for every command") {
  CHECK(run_cli("--help").exit_code == 0);
  for (const char* sub : {"prepare", "train", "transfer", "eval", "diagnose"}) {
    const auto r = run_cli(std::string(sub) + " --help");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("--") != std::string::npos);
  }
}

TEST_CASE("prepare is deterministic and honors --pairs 0") {
  TempDir dir("vqtt_cli_prepare");
  const std::string base = "prepare --pairs 4 --seed 7 ";
  const std::string cfg =
      " --config " + (dir.path / "cfg.json").string();
  {
    std::ofstream f(dir.path / "cfg.json");
    f << R"({"data": {"segment_seconds": 2.0, "track": {"seconds": 10.0}}})";
  }
  const auto r1 = run_cli(base + "--out " + (dir.path / "a").string() + cfg);
  CHECK(r1.exit_code == 0);
  CHECK(r1.output.find("pairs: 4") != std::string::npos);
  const auto r2 = run_cli(base + "--out " + (dir.path / "b").string() + cfg);
  CHECK(r2.exit_code == 0);
  CHECK(slurp(dir.path / "a" / "manifest.jsonl") == slurp(dir.path / "b" / "manifest.jsonl"));

  const auto r0 = run_cli("prepare --pairs 0 --seed 7 --out " + (dir.path / "c").string() + cfg);
  CHECK(r0.exit_code == 0);
  CHECK(fs::exists(dir.path / "c" / "manifest.jsonl"));
}

TEST_CASE("invalid config keys are named and exit 1") {
  TempDir dir("vqtt_cli_badcfg");
  {
    std::ofstream f(dir.path / "bad.json");
    f << R"({"train": {"learning_ratee": 0.1}})";
  }
  const auto r = run_cli("prepare --pairs 1 --out " + (dir.path / "out").string() +
                         " --config " + (dir.path / "bad.json").string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("learning_ratee") != std::string::npos);
}

TEST_CASE("train then transfer round trip through the binary") {
  TempDir dir("vqtt_cli_train");
  {
    std::ofstream f(dir.path / "cfg.json");
    f << R"({"data": {"segment_seconds": 2.0, "track": {"seconds": 10.0}},
             "train": {"epochs": 1, "batch_size": 3, "learning_rate": 0.001}})";
  }
  const std::string cfg = " --config " + (dir.path / "cfg.json").string();
  REQUIRE(run_cli("prepare --pairs 3 --seed 5 --out " + (dir.path / "data").string() + cfg)
              .exit_code == 0);

  const auto tr = run_cli("train --data " + (dir.path / "data" / "manifest.jsonl").string() +
                          " --out " + (dir.path / "run").string() + cfg);
  CHECK(tr.exit_code == 0);
  CHECK(tr.output.find("epoch 1:") != std::string::npos);
  REQUIRE(fs::exists(dir.path / "run" / "best.bin"));

  const std::string transfer_cmd =
      "transfer --ckpt " + (dir.path / "run" / "best.bin").string() + " --content " +
      (dir.path / "data" / "pair_00000_x.wav").string() + " --style " +
      (dir.path / "data" / "pair_00001_y.wav").string() + " --gl-iters 4 --out ";
  const auto t1 = run_cli(transfer_cmd + (dir.path / "out1.wav").string());
  CHECK(t1.exit_code == 0);
  REQUIRE(fs::exists(dir.path / "out1.wav"));
  const auto t2 = run_cli(transfer_cmd + (dir.path / "out2.wav").string());
  CHECK(t2.exit_code == 0);
  CHECK(slurp(dir.path / "out1.wav") == slurp(dir.path / "out2.wav"));

  // duration matches the content input within one hop (2 s at 125 samples/hop)
  CHECK(fs::file_size(dir.path / "out1.wav") ==
        fs::file_size(dir.path / "data" / "pair_00000_x.wav"));

  const auto diag = run_cli("diagnose --ckpt " + (dir.path / "run" / "best.bin").string() +
                            " --data " + (dir.path / "data" / "manifest.jsonl").string());
  CHECK(diag.exit_code == 0);
  CHECK(diag.output.find("codes used:") != std::string::npos);
  CHECK(diag.output.find("120 bpm:") != std::string::npos);

  // corrupt checkpoint -> exit 1
  {
    std::ofstream f(dir.path / "junk.bin", std::ios::binary);
    f << "garbage";
  }
  const auto bad = run_cli("transfer --ckpt " + (dir.path / "junk.bin").string() +
                           " --content " + (dir.path / "data" / "pair_00000_x.wav").string() +
                           " --style " + (dir.path / "data" / "pair_00001_y.wav").string() +
                           " --out " + (dir.path / "nope.wav").string());
  CHECK(bad.exit_code == 1);

  // missing manifest -> exit 1
  const auto missing = run_cli("train --data " + (dir.path / "nothere.jsonl").string() +
                               " --out " + (dir.path / "run2").string() + cfg);
  CHECK(missing.exit_code == 1);
}

TEST_CASE("eval runs end to end against generated outputs") {
  TempDir dir("vqtt_cli_eval");
  {
    std::ofstream f(dir.path / "cfg.json");
    f << R"({"data": {"segment_seconds": 2.0, "track": {"seconds": 10.0}},
             "train": {"epochs": 1, "batch_size": 4, "learning_rate": 0.001},
             "eval": {"gl_iterations": 4}})";
  }
  const std::string cfg = " --config " + (dir.path / "cfg.json").string();
  // triplet training wants >= 50 pairs
  REQUIRE(run_cli("prepare --pairs 52 --seed 6 --out " + (dir.path / "data").string() + cfg)
              .exit_code == 0);
  REQUIRE(run_cli("prepare --benchmark --pairs 3 --seed 60 --out " +
                  (dir.path / "bench").string() + cfg)
              .exit_code == 0);
  REQUIRE(run_cli("train --data " + (dir.path / "data" / "manifest.jsonl").string() + " --out " +
                  (dir.path / "run").string() + cfg)
              .exit_code == 0);

  const auto ev = run_cli(
      "eval --ckpt " + (dir.path / "run" / "best.bin").string() + " --outputs " +
      (dir.path / "outputs").string() + " --manifest " +
      (dir.path / "bench" / "benchmark.jsonl").string() + " --mode real --report " +
      (dir.path / "report.txt").string() + " --triplet-data " +
      (dir.path / "data" / "manifest.jsonl").string() + " --triplet-out " +
      (dir.path / "triplet.json").string() + cfg);
  CHECK(ev.exit_code == 0);
  REQUIRE(fs::exists(dir.path / "report.txt"));
  REQUIRE(fs::exists(dir.path / "report.txt.jsonl"));
  REQUIRE(fs::exists(dir.path / "triplet.json"));
  const std::string table = slurp(dir.path / "report.txt");
  CHECK(table.find("cp-content") != std::string::npos);
  CHECK(table.find("cp-style") != std::string::npos);
  CHECK(table.find("Timbre_S") != std::string::npos);
  CHECK(table.find("LSD_T") == std::string::npos);  // real mode omits target columns

  // artificial mode on the same outputs, reusing the fitted triplet model
  const auto ev2 = run_cli(
      "eval --outputs " + (dir.path / "outputs").string() + " --manifest " +
      (dir.path / "bench" / "benchmark.jsonl").string() + " --mode artificial --report " +
      (dir.path / "report_art.txt").string() + " --triplet " +
      (dir.path / "triplet.json").string() + cfg);
  CHECK(ev2.exit_code == 0);
  const std::string table2 = slurp(dir.path / "report_art.txt");
  CHECK(table2.find("LSD_T") != std::string::npos);
}

}  // TEST_SUITE

