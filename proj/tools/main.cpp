// medlabel: synthetic-corpus generation, DS-MLM pretraining, fine-tuning,
// evaluation and labeling from one binary. Every command accepts --seed
// (default 42) and is deterministic given (seed, config, data).
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "medlabel/baseline.hpp"
#include "medlabel/birads_mask.hpp"
#include "medlabel/checkpoint.hpp"
#include "medlabel/config.hpp"
#include "medlabel/corpus.hpp"
#include "medlabel/errors.hpp"
#include "medlabel/evaluate.hpp"
#include "medlabel/format.hpp"
#include "medlabel/masking.hpp"
#include "medlabel/metrics.hpp"
#include "medlabel/training.hpp"
#include "medlabel/vocab.hpp"

namespace {

using namespace medlabel;
namespace fs = std::filesystem;

constexpr std::uint64_t kDefaultSeed = 42;
constexpr std::uint64_t kStreamInit = 9;  // matches the pretrain init stream

fs::path out_dir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

ConfigFile maybe_config(const std::string& path) {
  return path.empty() ? ConfigFile{} : ConfigFile::parse(path);
}

void check_vocab(const Checkpoint& ckpt, const Vocab& vocab,
                 const std::string& ckpt_path) {
  if (ckpt.vocab_hash != vocab_hash(vocab))
    throw DataError("checkpoint '" + ckpt_path +
                    "' was built with a different vocabulary (hash mismatch)");
}

struct EncoderFlags {
  std::optional<int> layers, d_model, n_heads, d_ff, max_len;
  std::optional<double> dropout;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--layers", layers, "Encoder blocks");
    cmd->add_option("--d-model", d_model, "Model width");
    cmd->add_option("--heads", n_heads, "Attention heads");
    cmd->add_option("--d-ff", d_ff, "Feed-forward width");
    cmd->add_option("--max-len", max_len, "Sequence length");
    cmd->add_option("--dropout", dropout, "Dropout rate");
  }
  void apply(EncoderConfig& cfg) const {
    if (layers) cfg.layers = *layers;
    if (d_model) cfg.d_model = *d_model;
    if (n_heads) cfg.n_heads = *n_heads;
    if (d_ff) cfg.d_ff = *d_ff;
    if (max_len) cfg.max_len = *max_len;
    if (dropout) cfg.dropout = *dropout;
  }
  bool any() const {
    return layers || d_model || n_heads || d_ff || max_len || dropout;
  }
};

struct FineTuneFlags {
  std::optional<double> lr_base, gamma, temperature, epsilon;
  std::optional<int> batch_size, epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> selection_metric;

  void add_to(CLI::App* cmd, bool with_seed) {
    cmd->add_option("--lr-base", lr_base, "Base learning rate");
    cmd->add_option("--gamma", gamma, "Layer-wise decay factor");
    cmd->add_option("--batch-size", batch_size, "Batch size");
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--temperature", temperature, "Softmax temperature");
    cmd->add_option("--epsilon", epsilon, "Label smoothing");
    cmd->add_option("--selection-metric", selection_metric,
                    "accuracy or macro_f1");
    if (with_seed) cmd->add_option("--seed", seed, "Run seed");
  }
  void apply(FineTuneConfig& cfg) const {
    if (lr_base) cfg.lr_base = *lr_base;
    if (gamma) cfg.gamma = *gamma;
    if (batch_size) cfg.batch_size = *batch_size;
    if (epochs) cfg.epochs = *epochs;
    if (temperature) cfg.temperature = *temperature;
    if (epsilon) cfg.epsilon = *epsilon;
    if (seed) cfg.seed = *seed;
    if (selection_metric) cfg.selection_metric = *selection_metric;
  }
};

LabelKind parse_task(const std::string& task) {
  if (task == "biopsy") return LabelKind::biopsy;
  if (task == "birads") return LabelKind::birads;
  throw UsageError("unknown task '" + task + "' (expected biopsy or birads)");
}

FineTuneConfig task_defaults(LabelKind task) {
  return task == LabelKind::biopsy ? biopsy_finetune_defaults()
                                   : birads_finetune_defaults();
}

MaskRuleSet resolve_rules(const std::string& rules_path) {
  return rules_path.empty() ? MaskRuleSet::defaults()
                            : load_mask_rules(rules_path);
}

// Pretrained checkpoint when given, otherwise a seeded random
// initialization of the flag/config-defined encoder.
Parameters initial_params(const std::string& from, const Vocab& vocab,
                          const EncoderConfig& enc_cfg, bool enc_flags_given,
                          std::uint64_t seed) {
  if (!from.empty()) {
    if (enc_flags_given)
      throw UsageError(
          "encoder shape flags conflict with --from (the checkpoint fixes "
          "the architecture)");
    Checkpoint ckpt = load_checkpoint(from);
    check_vocab(ckpt, vocab, from);
    return std::move(ckpt.params);
  }
  EncoderConfig cfg = enc_cfg;
  cfg.vocab_size = vocab.size();
  cfg.validate();
  Rng init_rng = Rng(seed).derive(kStreamInit);
  return init_params(cfg, init_rng);
}

// ---------------------------------------------------------------- commands

struct GenOpts {
  std::string out = ".", config;
  std::optional<int> n;
  std::optional<double> misparse, positive;
  std::optional<std::uint64_t> seed;
};

void run_gen(const GenOpts& o) {
  GeneratorConfig cfg;
  apply_corpus_section(maybe_config(o.config), cfg);
  if (o.n) cfg.n_reports = *o.n;
  if (o.misparse) cfg.misparse_rate = *o.misparse;
  if (o.positive) cfg.biopsy_positive_rate = *o.positive;
  if (o.seed) cfg.seed = *o.seed;

  std::cerr << "[corpus]\n" << describe(cfg);
  const Corpus corpus = generate_synthetic_corpus(cfg);
  const fs::path path = out_dir(o.out) / "corpus.jsonl";
  save_corpus(corpus, path);
  std::cout << "wrote " << corpus.size() << " reports to " << path.string()
            << '\n';
}

struct VocabOpts {
  std::string corpus, out = ".";
  int size = 2000;
};

void run_vocab(const VocabOpts& o) {
  const Corpus corpus = load_corpus(o.corpus);
  const Vocab vocab = build_vocab(corpus, o.size);
  const fs::path path = out_dir(o.out) / "vocab.txt";
  save_vocab(vocab, path);
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(vocab_hash(vocab)));
  std::cout << "wrote " << vocab.size() << " tokens to " << path.string()
            << " (hash " << hash << ")\n";
}

struct MaskStatsOpts {
  std::string corpus, vocab;
  std::int64_t n = 100000;
  int max_len = 128;
  std::uint64_t seed = kDefaultSeed;
};

void run_mask_stats(const MaskStatsOpts& o) {
  const Corpus corpus = load_corpus(o.corpus);
  const Vocab vocab = load_vocab(o.vocab);
  const DomainTokenTable table = build_domain_table(corpus, vocab);
  const MaskStats stats =
      compute_mask_stats(corpus, vocab, table, o.max_len, o.n, o.seed);
  std::cout << format_mask_stats(stats);
}

struct PretrainOpts {
  std::string corpus, vocab, out = ".", config;
  EncoderFlags enc;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr, val_fraction;
  std::optional<std::uint64_t> seed;
};

void run_pretrain(const PretrainOpts& o) {
  const Corpus corpus = load_corpus(o.corpus);
  const Vocab vocab = load_vocab(o.vocab);
  const ConfigFile file = maybe_config(o.config);

  EncoderConfig ec;
  apply_encoder_section(file, ec);
  o.enc.apply(ec);
  ec.vocab_size = vocab.size();

  PretrainConfig pt;
  apply_pretrain_section(file, pt);
  if (o.epochs) pt.epochs = *o.epochs;
  if (o.batch_size) pt.batch_size = *o.batch_size;
  if (o.lr) pt.lr = *o.lr;
  if (o.val_fraction) pt.val_fraction = *o.val_fraction;
  if (o.seed) pt.seed = *o.seed;

  const std::string resolved =
      "[encoder]\n" + describe(ec) + "\n[pretrain]\n" + describe(pt);
  std::cerr << resolved;
  const fs::path dir = out_dir(o.out);
  write_file(dir / "pretrain-config.txt", resolved);

  const PretrainResult result = pretrain(corpus, vocab, ec, pt, &std::cerr);

  const std::uint64_t vhash = vocab_hash(vocab);
  save_checkpoint({result.final_params, std::nullopt, "", false, vhash},
                  dir / "pretrain.ckpt");
  save_checkpoint({result.best_params, std::nullopt, "", false, vhash},
                  dir / "pretrain.best.ckpt");
  write_file(dir / "pretrain-curve.csv", curve_to_csv(result.curve));
  std::cout << "best epoch " << result.best_epoch << " val loss "
            << format_fixed(result.best_val_loss, 4) << " top1 "
            << format_fixed(result.best_val_top1, 4) << '\n'
            << "wrote " << (dir / "pretrain.best.ckpt").string() << '\n';
}

struct FinetuneOpts {
  std::string corpus, vocab, task, from, out = ".", config, rules;
  EncoderFlags enc;
  FineTuneFlags ft;
  double val_fraction = 0.15;
  bool no_birads_mask = false;
};

void run_finetune(const FinetuneOpts& o) {
  const Corpus corpus = load_corpus(o.corpus);
  const Vocab vocab = load_vocab(o.vocab);
  const LabelKind task = parse_task(o.task);
  const ConfigFile file = maybe_config(o.config);

  EncoderConfig ec;
  apply_encoder_section(file, ec);
  o.enc.apply(ec);

  FineTuneConfig ft = task_defaults(task);
  apply_finetune_section(file, ft);
  o.ft.apply(ft);
  ft.validate();

  const std::string resolved = "[finetune]\n" + describe(ft);
  std::cerr << resolved;
  const fs::path dir = out_dir(o.out);
  write_file(dir / (o.task + "-config.txt"), resolved);

  const Parameters init =
      initial_params(o.from, vocab, ec, o.enc.any(), ft.seed);

  Corpus labeled = labeled_subset(corpus, task);
  const bool mask_text = task == LabelKind::birads && !o.no_birads_mask;
  if (mask_text) {
    const MaskRuleSet rules = resolve_rules(o.rules);
    for (Report& r : labeled.reports)
      r.text = mask_birads_mentions(r.text, rules).text;
  }
  auto [train_corpus, valid_corpus] =
      stratified_holdout(labeled, task, o.val_fraction, ft.seed);
  const int n_classes = n_classes_for(task);
  const int max_len = init.config.max_len;
  const std::vector<LabeledExample> train =
      make_examples(train_corpus, task, vocab, max_len);
  const std::vector<LabeledExample> valid =
      make_examples(valid_corpus, task, vocab, max_len);

  std::vector<int> train_classes(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    train_classes[i] = train[i].cls;

  const FineTuneResult result =
      finetune(init, train, valid, n_classes,
               dense_class_weights(train_classes, n_classes), ft, &std::cerr);

  Checkpoint ckpt{result.params, result.head, o.task, mask_text,
                  vocab_hash(vocab)};
  save_checkpoint(ckpt, dir / (o.task + ".ckpt"));
  write_file(dir / (o.task + "-curve.csv"), curve_to_csv(result.curve));
  std::cout << "best epoch " << result.best_epoch << ' ' << ft.selection_metric
            << ' ' << format_fixed(result.best_metric, 4) << '\n'
            << "wrote " << (dir / (o.task + ".ckpt")).string() << '\n';
}

struct EvaluateOpts {
  std::string corpus, vocab, task, from, out = ".", config, rules;
  EncoderFlags enc;
  FineTuneFlags ft;
  int k = 5;
  int jobs = 1;
  std::uint64_t seed = kDefaultSeed;
  bool no_birads_mask = false;
};

void run_evaluate(const EvaluateOpts& o) {
  const Corpus corpus = load_corpus(o.corpus);
  const Vocab vocab = load_vocab(o.vocab);
  const LabelKind task = parse_task(o.task);
  const ConfigFile file = maybe_config(o.config);

  EncoderConfig ec;
  apply_encoder_section(file, ec);
  o.enc.apply(ec);

  FineTuneConfig ft = task_defaults(task);
  apply_finetune_section(file, ft);
  o.ft.apply(ft);
  ft.validate();

  const std::string resolved = "[finetune]\n" + describe(ft);
  std::cerr << resolved;
  const fs::path dir = out_dir(o.out);
  write_file(dir / ("evaluate-" + o.task + "-config.txt"), resolved);

  const Parameters init =
      initial_params(o.from, vocab, ec, o.enc.any(), o.seed);

  const MaskRuleSet rules = resolve_rules(o.rules);
  const bool mask_text = task == LabelKind::birads && !o.no_birads_mask;
  const CvResult result =
      cross_validate(corpus, task, vocab, init, ft, o.k, o.seed, o.jobs,
                     mask_text ? &rules : nullptr,
                     o.jobs == 1 ? &std::cerr : nullptr);

  for (const std::string& w : result.warnings)
    std::cerr << "warning: " << w << '\n';
  write_file(dir / ("cv-" + o.task + ".csv"), cv_to_csv(result));
  std::cout << format_cv_table(result);
}

struct BaselineOpts {
  std::string corpus, keywords;
};

void run_baseline(const BaselineOpts& o) {
  const Corpus corpus = load_corpus(o.corpus);
  const std::vector<std::string> keywords =
      o.keywords.empty() ? default_biopsy_keywords() : load_keywords(o.keywords);
  const FoldReport report = baseline_metrics(corpus, keywords);
  std::cout << format_fold_report(report) << '\n';
  std::cout << "confusion tn " << report.confusion.at(0, 0) << " fp "
            << report.confusion.at(0, 1) << " fn " << report.confusion.at(1, 0)
            << " tp " << report.confusion.at(1, 1) << '\n';
}

struct LabelOpts {
  std::string corpus, vocab, checkpoint, out = ".", rules;
  int batch_size = 8;
};

void run_label(const LabelOpts& o) {
  const Corpus corpus = load_corpus(o.corpus);
  const Vocab vocab = load_vocab(o.vocab);
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  check_vocab(ckpt, vocab, o.checkpoint);
  if (!ckpt.head)
    throw DataError("checkpoint '" + o.checkpoint +
                    "' has no classifier head; run finetune first");
  const LabelKind task = parse_task(ckpt.task);

  const MaskRuleSet rules = resolve_rules(o.rules);
  std::vector<LabeledExample> examples;
  examples.reserve(corpus.size());
  for (const Report& r : corpus.reports) {
    const std::string text =
        ckpt.birads_masked ? mask_birads_mentions(r.text, rules).text : r.text;
    examples.push_back({tokenize(text, vocab, ckpt.params.config.max_len), 0});
  }
  const std::vector<Vec> probs =
      predict_probs(ckpt.params, *ckpt.head, examples, o.batch_size);

  std::string out;
  for (std::size_t i = 0; i < corpus.reports.size(); ++i) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(probs[i].size()); ++c)
      if (probs[i][c] > probs[i][best]) best = c;
    nlohmann::ordered_json j;
    j["id"] = corpus.reports[i].id;
    if (task == LabelKind::biopsy)
      j["label"] = best == 1;
    else
      j["label"] = birads_class_value(best);
    std::vector<double> p(probs[i].data(), probs[i].data() + probs[i].size());
    j["probs"] = p;
    out += j.dump();
    out += '\n';
  }
  const fs::path path = out_dir(o.out) / "labels.jsonl";
  write_file(path, out);
  std::cout << "wrote " << corpus.size() << " labels to " << path.string()
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Medical-report labeling pipeline"};
  app.require_subcommand(1);

  auto gen = std::make_shared<GenOpts>();
  {
    auto* cmd = app.add_subcommand("gen-corpus",
                                   "Generate a synthetic bilingual corpus");
    cmd->add_option("--n", gen->n, "Number of reports");
    cmd->add_option("--misparse-rate", gen->misparse,
                    "Fraction with truncated assessments");
    cmd->add_option("--positive-rate", gen->positive,
                    "Biopsy-positive fraction");
    cmd->add_option("--seed", gen->seed, "Generator seed");
    cmd->add_option("--config", gen->config, "Config file ([corpus] section)");
    cmd->add_option("--out", gen->out, "Output directory");
    cmd->callback([gen] { run_gen(*gen); });
  }

  auto voc = std::make_shared<VocabOpts>();
  {
    auto* cmd = app.add_subcommand("build-vocab",
                                   "Induce a WordPiece vocabulary");
    cmd->add_option("--corpus", voc->corpus, "Corpus JSONL")->required();
    cmd->add_option("--size", voc->size, "Target vocabulary size");
    cmd->add_option("--out", voc->out, "Output directory");
    cmd->callback([voc] { run_vocab(*voc); });
  }

  auto ms = std::make_shared<MaskStatsOpts>();
  {
    auto* cmd = app.add_subcommand("mask-stats",
                                   "Empirical corruption-rate audit");
    cmd->add_option("--corpus", ms->corpus, "Corpus JSONL")->required();
    cmd->add_option("--vocab", ms->vocab, "vocab.txt")->required();
    cmd->add_option("--n", ms->n, "Minimum eligible tokens");
    cmd->add_option("--max-len", ms->max_len, "Sequence length");
    cmd->add_option("--seed", ms->seed, "Sampling seed");
    cmd->callback([ms] { run_mask_stats(*ms); });
  }

  auto pt = std::make_shared<PretrainOpts>();
  {
    auto* cmd = app.add_subcommand("pretrain", "DS-MLM pretraining");
    cmd->add_option("--corpus", pt->corpus, "Corpus JSONL")->required();
    cmd->add_option("--vocab", pt->vocab, "vocab.txt")->required();
    pt->enc.add_to(cmd);
    cmd->add_option("--epochs", pt->epochs, "Training epochs");
    cmd->add_option("--batch-size", pt->batch_size, "Batch size");
    cmd->add_option("--lr", pt->lr, "Learning rate");
    cmd->add_option("--val-fraction", pt->val_fraction,
                    "Held-out fraction (default 0.15)");
    cmd->add_option("--seed", pt->seed, "Run seed");
    cmd->add_option("--config", pt->config,
                    "Config file ([encoder], [pretrain])");
    cmd->add_option("--out", pt->out, "Output directory");
    cmd->callback([pt] { run_pretrain(*pt); });
  }

  auto ftop = std::make_shared<FinetuneOpts>();
  {
    auto* cmd = app.add_subcommand("finetune",
                                   "Fine-tune a classifier head");
    cmd->add_option("--corpus", ftop->corpus, "Labeled corpus JSONL")
        ->required();
    cmd->add_option("--vocab", ftop->vocab, "vocab.txt")->required();
    cmd->add_option("--task", ftop->task, "biopsy or birads")->required();
    cmd->add_option("--from", ftop->from, "Pretrained checkpoint");
    ftop->enc.add_to(cmd);
    ftop->ft.add_to(cmd, true);
    cmd->add_option("--val-fraction", ftop->val_fraction,
                    "Held-out fraction for model selection");
    cmd->add_option("--birads-rules", ftop->rules, "Mask rules file");
    cmd->add_flag("--no-birads-mask", ftop->no_birads_mask,
                  "Skip BI-RADS mention masking");
    cmd->add_option("--config", ftop->config,
                    "Config file ([encoder], [finetune])");
    cmd->add_option("--out", ftop->out, "Output directory");
    cmd->callback([ftop] { run_finetune(*ftop); });
  }

  auto ev = std::make_shared<EvaluateOpts>();
  {
    auto* cmd = app.add_subcommand("evaluate",
                                   "Stratified k-fold evaluation");
    cmd->add_option("--corpus", ev->corpus, "Labeled corpus JSONL")
        ->required();
    cmd->add_option("--vocab", ev->vocab, "vocab.txt")->required();
    cmd->add_option("--task", ev->task, "biopsy or birads")->required();
    cmd->add_option("--from", ev->from, "Pretrained checkpoint");
    ev->enc.add_to(cmd);
    ev->ft.add_to(cmd, false);
    cmd->add_option("--k", ev->k, "Fold count");
    cmd->add_option("--jobs", ev->jobs, "Concurrent fold workers");
    cmd->add_option("--seed", ev->seed, "Harness seed");
    cmd->add_option("--birads-rules", ev->rules, "Mask rules file");
    cmd->add_flag("--no-birads-mask", ev->no_birads_mask,
                  "Skip BI-RADS mention masking");
    cmd->add_option("--config", ev->config,
                    "Config file ([encoder], [finetune])");
    cmd->add_option("--out", ev->out, "Output directory");
    cmd->callback([ev] { run_evaluate(*ev); });
  }

  auto bl = std::make_shared<BaselineOpts>();
  {
    auto* cmd = app.add_subcommand("baseline",
                                   "Keyword baseline on a labeled corpus");
    cmd->add_option("--corpus", bl->corpus, "Labeled corpus JSONL")
        ->required();
    cmd->add_option("--keywords", bl->keywords,
                    "Keywords file (default: built-in list)");
    cmd->callback([bl] { run_baseline(*bl); });
  }

  auto lb = std::make_shared<LabelOpts>();
  {
    auto* cmd = app.add_subcommand("label",
                                   "Label a corpus with a classifier");
    cmd->add_option("--corpus", lb->corpus, "Corpus JSONL")->required();
    cmd->add_option("--vocab", lb->vocab, "vocab.txt")->required();
    cmd->add_option("--checkpoint", lb->checkpoint, "Classifier checkpoint")
        ->required();
    cmd->add_option("--batch-size", lb->batch_size, "Inference batch size");
    cmd->add_option("--birads-rules", lb->rules, "Mask rules file");
    cmd->add_option("--out", lb->out, "Output directory");
    cmd->callback([lb] { run_label(*lb); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
