#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sgmc/corpus.hpp"

#ifndef SGMC_CLI_PATH
#error "SGMC_CLI_PATH must point at the sgmc binary"
#endif

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(SGMC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Desk profile shrunk to seconds.
const char* kMicroConfig =
    "profile = desk\n"
    "seed = 5\n"
    "[synthetic]\n"
    "n_clips = 8\n"
    "n_subjects = 4\n"
    "channels = 2\n"
    "time_len = 8\n"
    "[pretrain]\n"
    "epochs = 4\n"
    "checkpoint_every = 2\n"
    "[finetune]\n"
    "epochs = 2\n"
    "batch = 8\n"
    "runs = 2\n";

fs::path write_config(const TempDir& dir, const std::string& text) {
  fs::path p = dir.path / "run.cfg";
  std::ofstream(p) << text;
  return p;
}

// iteration records of a pretrain log, "iter <epoch> <i> <loss> <acc>"
std::vector<std::string> iter_lines(const fs::path& log, long min_epoch) {
  std::vector<std::string> out;
  std::ifstream in(log);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    long epoch;
    if (ss >> tag >> epoch && tag == "iter" && epoch >= min_epoch) out.push_back(line);
  }
  return out;
}

}  // namespace

TEST_CASE("gen-data produces a readable corpus and is deterministic") {
  TempDir a("sgmc_cli_gen_a"), b("sgmc_cli_gen_b");
  std::string cfg =
      "profile = desk\nseed = 7\n[synthetic]\nn_clips = 4\nn_subjects = 4\n"
      "channels = 4\ntime_len = 16\n";
  fs::path cfga = write_config(a, cfg);
  CHECK(run_cli("gen-data --config " + cfga.string() + " --out " + a.path.string()) == 0);
  sgmc::Corpus c = sgmc::read_corpus((a.path / "corpus.bin").string());
  CHECK(c.n_clips() == 4);
  CHECK(c.n_subjects() == 4);
  CHECK(c.has_splits());

  fs::path cfgb = write_config(b, cfg);
  CHECK(run_cli("gen-data --config " + cfgb.string() + " --out " + b.path.string()) == 0);
  CHECK(slurp(a.path / "corpus.bin") == slurp(b.path / "corpus.bin"));
}

TEST_CASE("gen-data rejects an empty synthetic spec with exit code 2") {
  TempDir dir("sgmc_cli_gen_bad");
  fs::path cfg = write_config(dir, "profile = desk\n[synthetic]\nn_clips = 0\n");
  CHECK(run_cli("gen-data --config " + cfg.string() + " --out " + dir.path.string()) == 2);
}

TEST_CASE("pretrain runs, checkpoints, and resumes identically") {
  TempDir full("sgmc_cli_pre_full"), resumed("sgmc_cli_pre_res");
  fs::path cfg = write_config(full, kMicroConfig);
  CHECK(run_cli("pretrain --config " + cfg.string() + " --out " + full.path.string()) == 0);
  CHECK(fs::exists(full.path / "ckpt-2.bin"));
  CHECK(fs::exists(full.path / "ckpt-final.bin"));
  CHECK(fs::exists(full.path / "pretrain_log.txt"));

  CHECK(run_cli("pretrain --config " + cfg.string() + " --out " + resumed.path.string() +
                " --resume " + (full.path / "ckpt-2.bin").string()) == 0);
  // epochs 2..3 of the resumed run replay the uninterrupted run exactly
  auto tail_full = iter_lines(full.path / "pretrain_log.txt", 2);
  auto tail_res = iter_lines(resumed.path / "pretrain_log.txt", 2);
  REQUIRE_FALSE(tail_full.empty());
  CHECK(tail_full == tail_res);
}

TEST_CASE("infeasible sampler demand exits with code 2") {
  TempDir dir("sgmc_cli_pre_bad");
  fs::path cfg = write_config(
      dir, std::string(kMicroConfig) + "[pretrain]\nq = 4\n");  // 2Q=8 > 4 subjects
  CHECK(run_cli("pretrain --config " + cfg.string() + " --out " + dir.path.string()) == 2);
}

TEST_CASE("a diverging run exits with code 3") {
  TempDir dir("sgmc_cli_pre_div");
  fs::path cfg = write_config(
      dir, std::string(kMicroConfig) + "[pretrain]\nlr = 1e30\nepochs = 8\n");
  CHECK(run_cli("pretrain --config " + cfg.string() + " --out " + dir.path.string()) == 3);
}

TEST_CASE("finetune, eval, ablate, sweep and variant dispatch round trip") {
  TempDir dir("sgmc_cli_pipeline");
  fs::path cfg = write_config(dir, kMicroConfig);
  REQUIRE(run_cli("pretrain --config " + cfg.string() + " --out " + dir.path.string()) == 0);

  // missing checkpoint is a config error
  CHECK(run_cli("finetune --config " + cfg.string() + " --out " + dir.path.string()) == 2);

  CHECK(run_cli("finetune --config " + cfg.string() + " --out " + dir.path.string() +
                " --checkpoint " + (dir.path / "ckpt-final.bin").string()) == 0);
  CHECK(fs::exists(dir.path / "finetune_metrics.txt"));
  CHECK(fs::exists(dir.path / "model.bin"));

  CHECK(run_cli("finetune --config " + cfg.string() + " --out " + dir.path.string() +
                " --from-scratch --labels-per-class 1") == 0);

  CHECK(run_cli("eval --config " + cfg.string() + " --out " + dir.path.string() +
                " --model " + (dir.path / "model.bin").string() + " --split test") == 0);
  CHECK(fs::exists(dir.path / "eval.txt"));

  CHECK(run_cli("pretrain --config " + cfg.string() + " --out " + dir.path.string() +
                " --variant non-consistent") == 0);
  CHECK(run_cli("pretrain --config " + cfg.string() + " --out " + dir.path.string() +
                " --variant bogus") == 2);

  fs::path fast = write_config(
      dir, std::string(kMicroConfig) + "[pretrain]\nepochs = 1\n[finetune]\nepochs = 1\nruns = 1\n");
  CHECK(run_cli("ablate --config " + fast.string() + " --out " + dir.path.string()) == 0);
  std::string table = slurp(dir.path / "ablation.txt");
  for (const char* name : {"complete", "non-group", "non-augment", "mixup-augment",
                           "non-consistent", "consistent-only"})
    CHECK(table.find(name) != std::string::npos);

  CHECK(run_cli("sweep --config " + fast.string() + " --out " + dir.path.string() +
                " --p-list 2 --q-list 1,4") == 0);
  std::string sweep = slurp(dir.path / "sweep.txt");
  CHECK(sweep.find("infeasible") != std::string::npos);
}

TEST_CASE("gradcheck command passes on a small shape budget") {
  CHECK(run_cli("gradcheck --shapes 2") == 0);
}
