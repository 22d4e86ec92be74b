#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "doctest.h"
#include "medlabel/config.hpp"
#include "medlabel/errors.hpp"

using namespace medlabel;
namespace fs = std::filesystem;

namespace {

std::string thrown_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  FAIL("expected an exception");
  return "";
}

}  // namespace

TEST_CASE("ini parsing: sections, comments and trimming") {
  const std::string text =
      "# leading comment\n"
      "[corpus]\n"
      "n_reports = 250\n"
      "  seed=7  \n"
      "; another comment style\n"
      "\n"
      "[finetune]\n"
      "selection_metric = macro_f1\n"
      "gamma = 0.25\n";
  ConfigFile f = ConfigFile::parse_string(text, "inline");

  CHECK(f.has("corpus", "n_reports"));
  CHECK(*f.get("corpus", "n_reports") == "250");
  CHECK(*f.get("corpus", "seed") == "7");
  CHECK(*f.get("finetune", "selection_metric") == "macro_f1");
  CHECK_FALSE(f.has("corpus", "missing"));
  CHECK_FALSE(f.has("encoder", "layers"));
  CHECK_FALSE(f.get("nope", "nope").has_value());
}

TEST_CASE("later assignments override earlier ones") {
  ConfigFile f = ConfigFile::parse_string(
      "[pretrain]\nepochs = 5\nepochs = 9\n", "inline");
  CHECK(*f.get("pretrain", "epochs") == "9");
}

TEST_CASE("parse errors carry the origin and line number") {
  auto msg1 = thrown_message([] {
    ConfigFile::parse_string("[corpus]\nbroken line\n", "test.ini");
  });
  CHECK(msg1.find("test.ini:2") != std::string::npos);

  auto msg2 = thrown_message([] {
    ConfigFile::parse_string("key = value\n", "test.ini");
  });
  CHECK(msg2.find("test.ini:1") != std::string::npos);

  CHECK_THROWS_AS(ConfigFile::parse_string("[unclosed\n", "x"), UsageError);
  CHECK_THROWS_AS(ConfigFile::parse_string("[s]\n = value\n", "x"),
                  UsageError);
}

TEST_CASE("file parsing") {
  fs::path p = fs::temp_directory_path() / "medlabel-config-test.ini";
  {
    std::ofstream out(p);
    out << "[encoder]\nlayers = 2\nd_model = 16\n";
  }
  ConfigFile f = ConfigFile::parse(p);
  CHECK(*f.get("encoder", "layers") == "2");
  fs::remove(p);

  CHECK_THROWS_AS(
      ConfigFile::parse(fs::temp_directory_path() / "medlabel-no-config.ini"),
      UsageError);
}

TEST_CASE("corpus section overlays the generator defaults") {
  ConfigFile f = ConfigFile::parse_string(
      "[corpus]\nn_reports = 500\nmisparse_rate = 0.2\nseed = 99\n", "inline");
  GeneratorConfig cfg;
  apply_corpus_section(f, cfg);
  CHECK(cfg.n_reports == 500);
  CHECK(cfg.misparse_rate == 0.2);
  CHECK(cfg.seed == 99);
  CHECK(cfg.biopsy_positive_rate == 0.266);  // untouched default

  GeneratorConfig untouched;
  ConfigFile empty = ConfigFile::parse_string("", "inline");
  apply_corpus_section(empty, untouched);
  CHECK(untouched.n_reports == 100);
}

TEST_CASE("encoder section overlays dimensions but never the vocab size") {
  ConfigFile f = ConfigFile::parse_string(
      "[encoder]\nlayers = 6\nd_ff = 512\ndropout = 0.2\n", "inline");
  EncoderConfig cfg;
  apply_encoder_section(f, cfg);
  CHECK(cfg.layers == 6);
  CHECK(cfg.d_ff == 512);
  CHECK(cfg.dropout == 0.2);
  CHECK(cfg.d_model == 64);

  // vocab_size comes from the vocabulary file, not the config.
  ConfigFile bad = ConfigFile::parse_string(
      "[encoder]\nvocab_size = 99\n", "inline");
  EncoderConfig cfg2;
  auto msg = thrown_message([&] { apply_encoder_section(bad, cfg2); });
  CHECK(msg.find("vocab_size") != std::string::npos);
}

TEST_CASE("pretrain and finetune sections overlay their configs") {
  ConfigFile f = ConfigFile::parse_string(
      "[pretrain]\nepochs = 30\nlr = 0.0005\n"
      "[finetune]\ngamma = 0.5\ntemperature = 1.5\nselection_metric = "
      "macro_f1\n",
      "inline");
  PretrainConfig pc;
  apply_pretrain_section(f, pc);
  CHECK(pc.epochs == 30);
  CHECK(pc.lr == 0.0005);
  CHECK(pc.batch_size == 8);

  FineTuneConfig fc;
  apply_finetune_section(f, fc);
  CHECK(fc.gamma == 0.5);
  CHECK(fc.temperature == 1.5);
  CHECK(fc.selection_metric == "macro_f1");
  CHECK(fc.lr_base == 1e-4);
}

TEST_CASE("unknown keys and malformed numbers are rejected") {
  ConfigFile f = ConfigFile::parse_string(
      "[pretrain]\nlearning_rate = 0.1\n", "inline");
  PretrainConfig pc;
  auto msg = thrown_message([&] { apply_pretrain_section(f, pc); });
  CHECK(msg.find("learning_rate") != std::string::npos);
  CHECK(msg.find("pretrain") != std::string::npos);

  ConfigFile bad = ConfigFile::parse_string(
      "[corpus]\nn_reports = many\n", "inline");
  GeneratorConfig gc;
  CHECK_THROWS_AS(apply_corpus_section(bad, gc), UsageError);

  ConfigFile frac = ConfigFile::parse_string(
      "[encoder]\nlayers = 2.5\n", "inline");
  EncoderConfig ec;
  CHECK_THROWS_AS(apply_encoder_section(frac, ec), UsageError);
}

TEST_CASE("describe output round trips through the parser") {
  GeneratorConfig gc;
  gc.n_reports = 321;
  gc.misparse_rate = 0.125;
  gc.seed = 5;
  ConfigFile f =
      ConfigFile::parse_string("[corpus]\n" + describe(gc), "describe");
  GeneratorConfig back;
  apply_corpus_section(f, back);
  CHECK(back.n_reports == gc.n_reports);
  CHECK(back.misparse_rate == gc.misparse_rate);
  CHECK(back.seed == gc.seed);

  PretrainConfig pc;
  pc.epochs = 17;
  pc.lr = 3e-4;
  pc.val_fraction = 0.2;
  ConfigFile pf =
      ConfigFile::parse_string("[pretrain]\n" + describe(pc), "describe");
  PretrainConfig pback;
  apply_pretrain_section(pf, pback);
  CHECK(pback.epochs == 17);
  CHECK(pback.lr == 3e-4);
  CHECK(pback.val_fraction == 0.2);

  FineTuneConfig fc;
  fc.gamma = 1.0 / 3.0;
  fc.temperature = std::sqrt(2.0);
  fc.epsilon = 1.0 / 3.0;
  fc.selection_metric = "macro_f1";
  ConfigFile ff =
      ConfigFile::parse_string("[finetune]\n" + describe(fc), "describe");
  FineTuneConfig fback;
  apply_finetune_section(ff, fback);
  CHECK(fback.gamma == fc.gamma);  // shortest-round-trip float formatting
  CHECK(fback.temperature == fc.temperature);
  CHECK(fback.epsilon == fc.epsilon);
  CHECK(fback.selection_metric == "macro_f1");

  EncoderConfig ec;
  ec.vocab_size = 123;
  std::string desc = describe(ec);
  CHECK(desc.find("vocab_size = 123\n") != std::string::npos);
  CHECK(desc.find("layers = 4\n") != std::string::npos);
}
