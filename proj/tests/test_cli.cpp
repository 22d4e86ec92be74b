#define DOCTEST_CONFIG_IMPLEMENT
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_root;

int run(const std::string& args) {
  const std::string cmd = g_cli + " " + args;
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int run_quiet(const std::string& args) {
  return run(args + " >/dev/null 2>/dev/null");
}

int run_to(const std::string& args, const fs::path& out_file) {
  return run(args + " >" + out_file.string() + " 2>&1");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file: ", p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

std::string data_flags() {
  return "--corpus " + (g_root / "data/corpus.jsonl").string() + " --vocab " +
         (g_root / "data/vocab.txt").string();
}

const std::string kSmallEncoder =
    " --layers 1 --d-model 8 --heads 2 --d-ff 16 --max-len 32 --dropout 0";

// Generates corpus + vocab + a one-epoch pretrain checkpoint once; later
// tests reuse the artifacts.
void ensure_pipeline() {
  static bool done = false;
  if (done) return;
  done = true;
  REQUIRE(run_quiet("gen-corpus --n 30 --misparse-rate 0 --positive-rate 0.4"
                    " --seed 3 --out " + (g_root / "data").string()) == 0);
  REQUIRE(run_quiet("build-vocab --corpus " +
                    (g_root / "data/corpus.jsonl").string() +
                    " --size 200 --out " + (g_root / "data").string()) == 0);
  REQUIRE(run_quiet("pretrain " + data_flags() + kSmallEncoder +
                    " --epochs 1 --batch-size 8 --lr 0.001 --seed 4 --out " +
                    (g_root / "pt").string()) == 0);
}

}  // namespace

TEST_CASE("bad invocations exit with the usage code") {
  CHECK(run_quiet("") == 1);
  CHECK(run_quiet("no-such-command") == 1);
  CHECK(run_quiet("gen-corpus --definitely-not-a-flag 1") == 1);
  CHECK(run_quiet("build-vocab") == 1);  // missing required --corpus
  CHECK(run_quiet("--help") == 0);
  CHECK(run_quiet("gen-corpus --help") == 0);
}

TEST_CASE("missing input files exit with the data code") {
  CHECK(run_quiet("build-vocab --corpus " +
                  (g_root / "nope/corpus.jsonl").string() + " --out " +
                  (g_root / "nope-out").string()) == 2);
  CHECK(run_quiet("baseline --corpus " +
                  (g_root / "nope/corpus.jsonl").string()) == 2);
}

TEST_CASE("gen-corpus writes a deterministic jsonl corpus") {
  fs::path a = g_root / "gen-a", b = g_root / "gen-b";
  const std::string flags =
      "gen-corpus --n 25 --misparse-rate 0.2 --seed 11 --out ";
  REQUIRE(run_quiet(flags + a.string()) == 0);
  REQUIRE(run_quiet(flags + b.string()) == 0);

  std::string ja = slurp(a / "corpus.jsonl");
  CHECK(count_lines(ja) == 25);
  CHECK(ja == slurp(b / "corpus.jsonl"));

  fs::path c = g_root / "gen-c";
  REQUIRE(run_quiet("gen-corpus --n 25 --misparse-rate 0.2 --seed 12 --out " +
                    c.string()) == 0);
  CHECK(ja != slurp(c / "corpus.jsonl"));
}

TEST_CASE("build-vocab reports the vocabulary hash") {
  ensure_pipeline();
  fs::path out = g_root / "vocab-stdout.txt";
  REQUIRE(run_to("build-vocab --corpus " +
                 (g_root / "data/corpus.jsonl").string() +
                 " --size 200 --out " + (g_root / "data2").string(), out) == 0);
  std::string text = slurp(out);
  CHECK(text.find("hash ") != std::string::npos);
  CHECK(slurp(g_root / "data2/vocab.txt") ==
        slurp(g_root / "data/vocab.txt"));
}

TEST_CASE("mask-stats prints the corruption table") {
  ensure_pipeline();
  fs::path out = g_root / "mask-stdout.txt";
  REQUIRE(run_to("mask-stats " + data_flags() +
                 " --n 20000 --max-len 64 --seed 9", out) == 0);
  std::string text = slurp(out);
  CHECK(text.find("selected") != std::string::npos);
  CHECK(text.find("expect 0.200") != std::string::npos);
}

TEST_CASE("pretrain leaves checkpoints, a curve and a config dump") {
  ensure_pipeline();
  CHECK(fs::exists(g_root / "pt/pretrain.ckpt"));
  CHECK(fs::exists(g_root / "pt/pretrain.best.ckpt"));
  std::string curve = slurp(g_root / "pt/pretrain-curve.csv");
  CHECK(curve.find("epoch,split,value\n") == 0);
  CHECK(curve.find("0,val,") != std::string::npos);
  std::string cfg = slurp(g_root / "pt/pretrain-config.txt");
  CHECK(cfg.find("epochs = 1") != std::string::npos);
  CHECK(cfg.find("[encoder]") != std::string::npos);

  // Usage errors in flag values use exit code 1.
  CHECK(run_quiet("pretrain " + data_flags() + kSmallEncoder +
                  " --epochs 0 --out " + (g_root / "pt-bad").string()) == 1);
}

TEST_CASE("finetune trains a task head from the pretrained checkpoint") {
  ensure_pipeline();
  REQUIRE(run_quiet("finetune " + data_flags() +
                    " --task biopsy --from " +
                    (g_root / "pt/pretrain.best.ckpt").string() +
                    " --epochs 1 --batch-size 8 --seed 5 --out " +
                    (g_root / "ft").string()) == 0);
  CHECK(fs::exists(g_root / "ft/biopsy.ckpt"));
  CHECK(fs::exists(g_root / "ft/biopsy-curve.csv"));
  std::string cfg = slurp(g_root / "ft/biopsy-config.txt");
  CHECK(cfg.find("gamma = 0.25") != std::string::npos);

  // Mixing --from with encoder-shape flags is contradictory.
  CHECK(run_quiet("finetune " + data_flags() + " --task biopsy --from " +
                  (g_root / "pt/pretrain.best.ckpt").string() +
                  " --layers 2 --epochs 1 --out " +
                  (g_root / "ft-bad").string()) == 1);
}

TEST_CASE("label emits one json line per report") {
  ensure_pipeline();
  REQUIRE(fs::exists(g_root / "ft/biopsy.ckpt"));
  REQUIRE(run_quiet("label " + data_flags() + " --checkpoint " +
                    (g_root / "ft/biopsy.ckpt").string() + " --out " +
                    (g_root / "lab").string()) == 0);
  std::string labels = slurp(g_root / "lab/labels.jsonl");
  CHECK(count_lines(labels) == 30);
  CHECK(labels.find("\"id\"") != std::string::npos);
  CHECK(labels.find("\"label\"") != std::string::npos);
  CHECK(labels.find("\"probs\"") != std::string::npos);

  // A pretrain-only checkpoint carries no classifier head.
  CHECK(run_quiet("label " + data_flags() + " --checkpoint " +
                  (g_root / "pt/pretrain.best.ckpt").string() + " --out " +
                  (g_root / "lab-bad").string()) == 2);
}

TEST_CASE("evaluate writes per-fold csv deterministically") {
  ensure_pipeline();
  const std::string common = "evaluate " + data_flags() + kSmallEncoder +
                             " --task biopsy --epochs 1 --k 2 --seed 6 --out ";
  fs::path a = g_root / "ev-a", b = g_root / "ev-b";
  REQUIRE(run_quiet(common + a.string()) == 0);
  REQUIRE(run_quiet(common + b.string()) == 0);

  std::string csv = slurp(a / "cv-biopsy.csv");
  CHECK(csv.find("fold,metric,value\n") == 0);
  CHECK(csv.find("1,accuracy,") != std::string::npos);
  CHECK(csv.find("avg,mcc,") != std::string::npos);
  CHECK(csv == slurp(b / "cv-biopsy.csv"));
}

TEST_CASE("baseline prints its confusion counts") {
  ensure_pipeline();
  fs::path out = g_root / "baseline-stdout.txt";
  REQUIRE(run_to("baseline --corpus " +
                 (g_root / "data/corpus.jsonl").string(), out) == 0);
  std::string text = slurp(out);
  CHECK(text.find("accuracy") != std::string::npos);
  CHECK(text.find("confusion tn ") != std::string::npos);
}

TEST_CASE("config files feed the pipeline stages") {
  ensure_pipeline();
  fs::path cfg = g_root / "run.ini";
  {
    std::ofstream f(cfg);
    f << "[corpus]\nn_reports = 12\nseed = 44\n";
  }
  REQUIRE(run_quiet("gen-corpus --config " + cfg.string() + " --out " +
                    (g_root / "gen-cfg").string()) == 0);
  CHECK(count_lines(slurp(g_root / "gen-cfg/corpus.jsonl")) == 12);

  // Flags override the file.
  REQUIRE(run_quiet("gen-corpus --config " + cfg.string() + " --n 7 --out " +
                    (g_root / "gen-cfg2").string()) == 0);
  CHECK(count_lines(slurp(g_root / "gen-cfg2/corpus.jsonl")) == 7);

  fs::path bad = g_root / "bad.ini";
  {
    std::ofstream f(bad);
    f << "[corpus]\nnot_a_key = 1\n";
  }
  CHECK(run_quiet("gen-corpus --config " + bad.string() + " --out " +
                  (g_root / "gen-cfg3").string()) == 1);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <medlabel-cli-path> [doctest args]\n",
                 argv[0]);
    return 1;
  }
  g_cli = argv[1];
  g_root = fs::temp_directory_path() /
           ("medlabel-cli-test-" + std::to_string(::getpid()));
  fs::create_directories(g_root);

  doctest::Context ctx;
  ctx.applyCommandLine(argc - 1, argv + 1);
  const int rc = ctx.run();
  fs::remove_all(g_root);
  return rc;
}
