#include "medlabel/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include "medlabel/errors.hpp"
#include "medlabel/format.hpp"
#include "medlabel/metrics.hpp"

namespace medlabel {
namespace {

// Sub-stream tags for Rng::derive; one block per purpose keeps every
// random decision independent of loop restructuring.
enum : std::uint64_t {
  kStreamInit = 9,
  kStreamSplit = 10,
  kStreamValPlan = 11,
  kStreamShuffle = 12,
  kStreamTrainPlan = 13,
  kStreamDropout = 14,
  kStreamHeadInit = 30,
  kStreamFtShuffle = 31,
  kStreamFtDropout = 32,
  kStreamHoldout = 40,
};

struct MlmEval {
  double loss = 0;
  double top1 = 0;
  std::int64_t targets = 0;
};

// Builds one forward batch plus flattened prediction sites.
void fill_mlm_batch(const std::vector<MaskedSequence>& masked,
                    std::size_t begin, std::size_t end, Batch& batch,
                    MlmTargets& sel) {
  batch = Batch{};
  sel = MlmTargets{};
  for (std::size_t i = begin; i < end; ++i) {
    const int b = static_cast<int>(i - begin);
    batch.add(masked[i].corrupted);
    for (const auto& [pos, original] : masked[i].targets) {
      sel.rows.push_back(b * batch.seq_len + pos);
      sel.targets.push_back(original);
    }
  }
}

MlmEval evaluate_mlm(const Parameters& params,
                     const std::vector<MaskedSequence>& masked,
                     int batch_size) {
  MlmEval eval;
  double loss_sum = 0;
  std::int64_t top1_hits = 0;
  Batch batch;
  MlmTargets sel;
  for (std::size_t begin = 0; begin < masked.size(); begin += batch_size) {
    const std::size_t end = std::min(masked.size(),
                                     begin + static_cast<std::size_t>(batch_size));
    fill_mlm_batch(masked, begin, end, batch, sel);
    if (sel.rows.empty()) continue;
    const Mat z = encoder_forward(params, batch, Mode::inference, nullptr,
                                  nullptr);
    const double mean = mlm_loss(params, z, sel, nullptr, nullptr);
    const auto n = static_cast<std::int64_t>(sel.rows.size());
    loss_sum += mean * static_cast<double>(n);
    eval.targets += n;

    for (std::size_t i = 0; i < sel.rows.size(); ++i) {
      const Eigen::RowVectorXd logits =
          z.row(sel.rows[i]) * params.tok_embedding.transpose() +
          params.mlm_bias.row(0);
      Eigen::Index best = 0;
      logits.maxCoeff(&best);
      if (static_cast<int>(best) == sel.targets[i]) ++top1_hits;
    }
  }
  if (eval.targets > 0) {
    eval.loss = loss_sum / static_cast<double>(eval.targets);
    eval.top1 = static_cast<double>(top1_hits) /
                static_cast<double>(eval.targets);
  }
  return eval;
}

double metric_value(const std::string& name, std::span<const int> truth,
                    std::span<const int> pred, int n_classes) {
  if (name == "accuracy") return accuracy(truth, pred);
  if (name == "macro_f1") return macro_f1(truth, pred, n_classes);
  throw UsageError("unknown selection metric '" + name + "'");
}

}  // namespace

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "epoch,split,value\n";
  for (const CurvePoint& p : curve) {
    out += std::to_string(p.epoch);
    out += ',';
    out += p.split;
    out += ',';
    out += format_double(p.value);
    out += '\n';
  }
  return out;
}

void PretrainConfig::validate() const {
  if (epochs < 1) throw UsageError("pretrain: epochs must be >= 1");
  if (batch_size < 1) throw UsageError("pretrain: batch_size must be >= 1");
  if (lr <= 0) throw UsageError("pretrain: learning rate must be > 0");
  if (val_fraction <= 0 || val_fraction >= 1)
    throw UsageError("pretrain: val_fraction must be in (0,1)");
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> pretrain_split(
    std::size_t n, double val_fraction, Rng& rng) {
  if (n < 2) throw UsageError("pretrain split needs at least 2 items");
  if (val_fraction <= 0 || val_fraction >= 1)
    throw UsageError("val_fraction must be in (0,1)");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  shuffle(idx, rng);
  auto n_val = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * val_fraction));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> val(idx.end() - static_cast<std::ptrdiff_t>(n_val),
                               idx.end());
  idx.resize(n - n_val);
  return {std::move(idx), std::move(val)};
}

PretrainResult pretrain(const Corpus& corpus, const Vocab& vocab,
                        const EncoderConfig& enc_cfg, const PretrainConfig& cfg,
                        std::ostream* log) {
  cfg.validate();
  if (corpus.size() < 2)
    throw DataError("pretraining needs at least 2 reports");
  EncoderConfig ec = enc_cfg;
  ec.vocab_size = vocab.size();
  ec.validate();

  const Rng root(cfg.seed);

  std::vector<TokenSequence> seqs;
  seqs.reserve(corpus.size());
  for (const Report& r : corpus.reports)
    seqs.push_back(tokenize(r.text, vocab, ec.max_len));

  const DomainTokenTable table = build_domain_table(corpus, vocab);

  Rng split_rng = root.derive(kStreamSplit);
  auto [train_idx, val_idx] = pretrain_split(corpus.size(), cfg.val_fraction,
                                             split_rng);

  // Validation corruption is sampled once so epoch losses are comparable.
  std::vector<MaskedSequence> val_masked;
  val_masked.reserve(val_idx.size());
  for (std::size_t i : val_idx) {
    Rng plan_rng = root.derive(kStreamValPlan, i);
    const MaskingPlan plan = sample_masking_plan(seqs[i], table, vocab,
                                                 plan_rng);
    val_masked.push_back(apply_plan(seqs[i], plan, vocab));
  }

  Rng init_rng = root.derive(kStreamInit);
  PretrainResult result;
  result.final_params = init_params(ec, init_rng);

  AdamState state;
  Parameters grads = Parameters::zeros(ec);
  const std::vector<NamedTensor> tensors =
      collect_tensors(result.final_params, grads);
  const std::map<std::string, double> lrs = flat_lr_map(ec.layers, cfg.lr);

  const MlmEval init_eval = evaluate_mlm(result.final_params, val_masked,
                                         cfg.batch_size);
  result.curve.push_back({0, "val", init_eval.loss});
  result.best_params = result.final_params;
  result.best_epoch = 0;
  result.best_val_loss = init_eval.loss;
  result.best_val_top1 = init_eval.top1;
  if (log)
    *log << "epoch 0 val " << format_fixed(init_eval.loss, 4) << " top1 "
         << format_fixed(init_eval.top1, 4) << '\n';

  std::vector<MaskedSequence> batch_masked;
  Batch batch;
  MlmTargets sel;
  ForwardTrace trace;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    Rng shuffle_rng = root.derive(kStreamShuffle,
                                  static_cast<std::uint64_t>(epoch));
    shuffle(order, shuffle_rng);

    double loss_sum = 0;
    std::int64_t target_count = 0;
    std::uint64_t batch_no = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(),
                                       begin + static_cast<std::size_t>(cfg.batch_size));
      batch_masked.clear();
      for (std::size_t j = begin; j < end; ++j) {
        const std::size_t i = order[j];
        // Dynamic masking: a fresh plan per epoch and report.
        Rng plan_rng = root.derive(kStreamTrainPlan,
                                   static_cast<std::uint64_t>(epoch), i);
        const MaskingPlan plan = sample_masking_plan(seqs[i], table, vocab,
                                                     plan_rng);
        batch_masked.push_back(apply_plan(seqs[i], plan, vocab));
      }
      fill_mlm_batch(batch_masked, 0, batch_masked.size(), batch, sel);
      if (sel.rows.empty()) continue;

      Rng dropout_rng = root.derive(kStreamDropout,
                                    static_cast<std::uint64_t>(epoch), batch_no);
      const Mat z = encoder_forward(result.final_params, batch, Mode::training,
                                    &dropout_rng, &trace);
      grads.set_zero();
      Mat d_output = Mat::Zero(batch.rows(), ec.d_model);
      const double mean = mlm_loss(result.final_params, z, sel, &d_output,
                                   &grads);
      encoder_backward(result.final_params, batch, trace, d_output, grads);
      adam_step(state, cfg.adam, lrs, tensors);

      const auto n = static_cast<std::int64_t>(sel.rows.size());
      loss_sum += mean * static_cast<double>(n);
      target_count += n;
    }

    const double train_loss =
        target_count > 0 ? loss_sum / static_cast<double>(target_count) : 0.0;
    const MlmEval val_eval = evaluate_mlm(result.final_params, val_masked,
                                          cfg.batch_size);
    result.curve.push_back({epoch, "train", train_loss});
    result.curve.push_back({epoch, "val", val_eval.loss});
    if (val_eval.loss < result.best_val_loss) {
      result.best_params = result.final_params;
      result.best_epoch = epoch;
      result.best_val_loss = val_eval.loss;
      result.best_val_top1 = val_eval.top1;
    }
    if (log)
      *log << "epoch " << epoch << " train " << format_fixed(train_loss, 4)
           << " val " << format_fixed(val_eval.loss, 4) << " top1 "
           << format_fixed(val_eval.top1, 4) << '\n';
  }
  return result;
}

void FineTuneConfig::validate() const {
  if (lr_base < 0) throw UsageError("finetune: lr_base must be >= 0");
  if (gamma <= 0 || gamma > 1)
    throw UsageError("finetune: gamma must be in (0,1]");
  if (batch_size < 1) throw UsageError("finetune: batch_size must be >= 1");
  if (epochs < 1) throw UsageError("finetune: epochs must be >= 1");
  if (temperature <= 0) throw UsageError("finetune: temperature must be > 0");
  if (epsilon < 0 || epsilon >= 1)
    throw UsageError("finetune: epsilon must be in [0,1)");
  if (selection_metric != "accuracy" && selection_metric != "macro_f1")
    throw UsageError("finetune: unknown selection metric '" +
                     selection_metric + "'");
}

FineTuneConfig biopsy_finetune_defaults() {
  FineTuneConfig cfg;
  cfg.gamma = 0.25;
  cfg.temperature = 1.0;
  cfg.epsilon = 0.0;
  return cfg;
}

FineTuneConfig birads_finetune_defaults() {
  FineTuneConfig cfg;
  cfg.gamma = 1.0 / 3.0;
  cfg.temperature = std::sqrt(2.0);
  cfg.epsilon = 1.0 / 3.0;
  cfg.selection_metric = "macro_f1";
  return cfg;
}

int n_classes_for(LabelKind kind) {
  return kind == LabelKind::biopsy ? 2 : kNumBiradsClasses;
}

int dense_class(int label, LabelKind kind) {
  if (kind == LabelKind::biopsy) {
    if (label != 0 && label != 1)
      throw DataError("biopsy label must be 0 or 1");
    return label;
  }
  return birads_class_index(label);
}

std::vector<LabeledExample> make_examples(const Corpus& corpus, LabelKind kind,
                                          const Vocab& vocab, int max_len) {
  std::vector<LabeledExample> out;
  for (const Report& r : corpus.reports) {
    if (!has_label(r, kind)) continue;
    out.push_back({tokenize(r.text, vocab, max_len),
                   dense_class(label_of(r, kind), kind)});
  }
  return out;
}

std::vector<double> dense_class_weights(const std::vector<int>& classes,
                                        int n_classes) {
  std::vector<std::int64_t> counts(n_classes, 0);
  for (int c : classes) {
    if (c < 0 || c >= n_classes)
      throw DataError("class index out of range: " + std::to_string(c));
    ++counts[c];
  }
  std::vector<double> w(n_classes, 1.0);
  for (int c = 0; c < n_classes; ++c)
    if (counts[c] > 0) w[c] = 1.0 / static_cast<double>(counts[c]);
  return w;
}

FineTuneResult finetune(const Parameters& pretrained,
                        const std::vector<LabeledExample>& train,
                        const std::vector<LabeledExample>& valid,
                        int n_classes, const std::vector<double>& class_weights,
                        const FineTuneConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (train.empty()) throw DataError("fine-tuning needs training examples");
  if (valid.empty())
    throw DataError("fine-tuning needs a non-empty validation set");
  std::set<int> classes_seen;
  for (const LabeledExample& ex : train) {
    if (ex.cls < 0 || ex.cls >= n_classes)
      throw DataError("training class index out of range: " +
                      std::to_string(ex.cls));
    classes_seen.insert(ex.cls);
  }
  if (classes_seen.size() < 2)
    throw DataError("training data contains a single class; need at least 2");

  LossConfig loss_cfg;
  loss_cfg.class_weights = class_weights;
  loss_cfg.epsilon = cfg.epsilon;
  loss_cfg.n_classes = n_classes;
  loss_cfg.validate();

  const EncoderConfig& ec = pretrained.config;
  const int S = static_cast<int>(train.front().seq.ids.size());
  const Rng root(cfg.seed);

  FineTuneResult result;
  Parameters params = pretrained;
  Rng head_rng = root.derive(kStreamHeadInit);
  ClassifierHead head = init_head(n_classes, ec.d_model, cfg.temperature,
                                  head_rng);

  Parameters grads = Parameters::zeros(ec);
  ClassifierHead head_grads = ClassifierHead::zeros(n_classes, ec.d_model,
                                                    cfg.temperature);
  std::vector<NamedTensor> tensors = collect_tensors(params, grads);
  collect_head_tensors(head, head_grads, tensors);
  const std::map<std::string, double> lrs =
      assign_param_lrs(ec.layers, cfg.lr_base, cfg.gamma);
  AdamState state;

  std::vector<int> truth(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) truth[i] = valid[i].cls;

  double best_metric = -1.0;
  Batch batch;
  ForwardTrace trace;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = root.derive(kStreamFtShuffle,
                                  static_cast<std::uint64_t>(epoch));
    shuffle(order, shuffle_rng);

    double loss_sum = 0;
    std::uint64_t batch_no = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(),
                                       begin + static_cast<std::size_t>(cfg.batch_size));
      batch = Batch{};
      for (std::size_t j = begin; j < end; ++j)
        batch.add(train[order[j]].seq);
      const int B = batch.batch_size;

      Rng dropout_rng = root.derive(kStreamFtDropout,
                                    static_cast<std::uint64_t>(epoch), batch_no);
      const Mat z = encoder_forward(params, batch, Mode::training, &dropout_rng,
                                    &trace);
      grads.set_zero();
      head_grads.weight.setZero();
      head_grads.bias.setZero();
      Mat d_output = Mat::Zero(batch.rows(), ec.d_model);

      const std::span<const std::uint8_t> valid_flags(batch.valid);
      for (int b = 0; b < B; ++b) {
        const LabeledExample& ex = train[order[begin + b]];
        const auto flags = valid_flags.subspan(
            static_cast<std::size_t>(b) * S, static_cast<std::size_t>(S));
        const Vec pooled = mean_pool(z.middleRows(b * S, S), flags);
        const Vec logits = head.weight * pooled + head.bias.row(0).transpose();
        Vec d_logits;
        loss_sum += wls_loss_from_logits(logits, cfg.temperature, ex.cls,
                                         loss_cfg, &d_logits);
        d_logits /= static_cast<double>(B);  // batch-mean objective
        head_grads.weight.noalias() += d_logits * pooled.transpose();
        head_grads.bias.row(0) += d_logits.transpose();
        const Vec d_pooled = head.weight.transpose() * d_logits;
        int n_valid = 0;
        for (int s = 0; s < S; ++s) n_valid += flags[s] ? 1 : 0;
        const Eigen::RowVectorXd spread =
            d_pooled.transpose() / static_cast<double>(n_valid);
        for (int s = 0; s < S; ++s)
          if (flags[s]) d_output.row(b * S + s) += spread;
      }
      encoder_backward(params, batch, trace, d_output, grads);
      adam_step(state, cfg.adam, lrs, tensors);
    }

    const double train_loss = loss_sum / static_cast<double>(train.size());
    const std::vector<int> preds = predict_classes(params, head, valid,
                                                   cfg.batch_size);
    const double metric = metric_value(cfg.selection_metric, truth, preds,
                                       n_classes);
    result.curve.push_back({epoch, "train", train_loss});
    result.curve.push_back({epoch, "val", metric});
    if (metric > best_metric) {
      best_metric = metric;
      result.params = params;
      result.head = head;
      result.best_epoch = epoch;
      result.best_metric = metric;
    }
    if (log)
      *log << "epoch " << epoch << " train " << format_fixed(train_loss, 4)
           << " val " << cfg.selection_metric << ' '
           << format_fixed(metric, 4) << '\n';
  }
  return result;
}

std::vector<Vec> predict_probs(const Parameters& params,
                               const ClassifierHead& head,
                               const std::vector<LabeledExample>& examples,
                               int batch_size) {
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  std::vector<Vec> probs;
  probs.reserve(examples.size());
  Batch batch;
  for (std::size_t begin = 0; begin < examples.size();
       begin += batch_size) {
    const std::size_t end = std::min(examples.size(),
                                     begin + static_cast<std::size_t>(batch_size));
    batch = Batch{};
    for (std::size_t j = begin; j < end; ++j) batch.add(examples[j].seq);
    const int S = batch.seq_len;
    const Mat z = encoder_forward(params, batch, Mode::inference, nullptr,
                                  nullptr);
    const std::span<const std::uint8_t> valid_flags(batch.valid);
    for (int b = 0; b < batch.batch_size; ++b) {
      const Vec pooled = mean_pool(
          z.middleRows(b * S, S),
          valid_flags.subspan(static_cast<std::size_t>(b) * S,
                              static_cast<std::size_t>(S)));
      probs.push_back(classify(head, pooled));
    }
  }
  return probs;
}

std::vector<int> predict_classes(const Parameters& params,
                                 const ClassifierHead& head,
                                 const std::vector<LabeledExample>& examples,
                                 int batch_size) {
  std::vector<int> preds;
  preds.reserve(examples.size());
  for (const Vec& p : predict_probs(params, head, examples, batch_size)) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(p.size()); ++c)
      if (p[c] > p[best]) best = c;
    preds.push_back(best);
  }
  return preds;
}

std::vector<double> predict_scores(const Parameters& params,
                                   const ClassifierHead& head,
                                   const std::vector<LabeledExample>& examples,
                                   int batch_size) {
  if (head.n_classes() != 2)
    throw UsageError("positive-class scores require a binary head");
  std::vector<double> scores;
  scores.reserve(examples.size());
  for (const Vec& p : predict_probs(params, head, examples, batch_size))
    scores.push_back(p[1]);
  return scores;
}

std::pair<Corpus, Corpus> stratified_holdout(const Corpus& corpus,
                                             LabelKind kind,
                                             double val_fraction,
                                             std::uint64_t seed) {
  if (val_fraction <= 0 || val_fraction >= 1)
    throw UsageError("val_fraction must be in (0,1)");
  const Rng root(seed);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < corpus.reports.size(); ++i) {
    if (!has_label(corpus.reports[i], kind)) continue;
    by_class[label_of(corpus.reports[i], kind)].push_back(i);
  }
  if (by_class.empty()) throw DataError("no labeled reports to split");

  std::vector<std::uint8_t> to_val(corpus.reports.size(), 0);
  for (auto& [cls, members] : by_class) {
    Rng rng = root.derive(kStreamHoldout, static_cast<std::uint64_t>(cls));
    shuffle(members, rng);
    if (members.size() < 2) continue;  // lone member stays in training
    auto n_val = static_cast<std::size_t>(std::llround(
        static_cast<double>(members.size()) * val_fraction));
    n_val = std::clamp<std::size_t>(n_val, 1, members.size() - 1);
    for (std::size_t j = 0; j < n_val; ++j) to_val[members[j]] = 1;
  }

  Corpus train, val;
  train.provenance = val.provenance = corpus.provenance;
  train.seed = val.seed = corpus.seed;
  for (std::size_t i = 0; i < corpus.reports.size(); ++i) {
    if (!has_label(corpus.reports[i], kind)) continue;
    (to_val[i] ? val : train).reports.push_back(corpus.reports[i]);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace medlabel
