#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "medlabel/corpus.hpp"
#include "medlabel/encoder.hpp"
#include "medlabel/heads.hpp"
#include "medlabel/masking.hpp"
#include "medlabel/optim.hpp"
#include "medlabel/vocab.hpp"

namespace medlabel {

// One row of a loss/metric curve CSV: (epoch, split, value). Train rows
// carry the objective; val rows carry MLM loss (pretraining) or the
// selection metric (fine-tuning).
struct CurvePoint {
  int epoch;
  std::string split;
  double value;
};

std::string curve_to_csv(const std::vector<CurvePoint>& curve);

struct PretrainConfig {
  int epochs = 20;
  int batch_size = 8;
  double lr = 1e-4;
  double val_fraction = 0.15;
  std::uint64_t seed = 42;
  AdamConfig adam;

  void validate() const;
};

// Deterministic shuffle of [0, n) followed by a rounded split; the
// validation side holds round(n * val_fraction) items, clamped to [1, n-1].
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> pretrain_split(
    std::size_t n, double val_fraction, Rng& rng);

struct PretrainResult {
  Parameters final_params;
  Parameters best_params;
  int best_epoch = 0;        // 0 = untrained initialization
  double best_val_loss = 0;
  double best_val_top1 = 0;  // masked-token top-1 recovery of best_params
  std::vector<CurvePoint> curve;
};

// DS-MLM pretraining: fresh corruption plans per epoch on the train side,
// plans fixed once on the validation side, Adam at a uniform rate. The
// curve starts with the epoch-0 validation loss of the random
// initialization (~ln |V|).
PretrainResult pretrain(const Corpus& corpus, const Vocab& vocab,
                        const EncoderConfig& enc_cfg, const PretrainConfig& cfg,
                        std::ostream* log = nullptr);

struct FineTuneConfig {
  double lr_base = 1e-4;
  double gamma = 0.25;       // layer-wise decay, (0, 1]
  int batch_size = 8;
  int epochs = 15;
  double temperature = 1.0;
  double epsilon = 0.0;      // label smoothing, [0, 1)
  std::uint64_t seed = 42;
  std::string selection_metric = "accuracy";  // or "macro_f1"
  AdamConfig adam;

  void validate() const;
};

// Published per-task settings: biopsy (gamma 1/4, T 1, eps 0) and BI-RADS
// (gamma 1/3, T sqrt 2, eps 1/3).
FineTuneConfig biopsy_finetune_defaults();
FineTuneConfig birads_finetune_defaults();

struct LabeledExample {
  TokenSequence seq;
  int cls = 0;  // dense class index
};

int n_classes_for(LabelKind kind);
int dense_class(int label, LabelKind kind);

// Tokenized, densely labeled view of the labeled reports.
std::vector<LabeledExample> make_examples(const Corpus& corpus, LabelKind kind,
                                          const Vocab& vocab, int max_len);

// Inverse-count weights over dense class indices; absent classes weight 1.
std::vector<double> dense_class_weights(const std::vector<int>& classes,
                                        int n_classes);

struct FineTuneResult {
  Parameters params;    // encoder of the best epoch
  ClassifierHead head;  // head of the best epoch
  int best_epoch = 1;
  double best_metric = 0;
  std::vector<CurvePoint> curve;
};

// Fine-tunes encoder + fresh classifier head with layer-wise learning
// rates and the weighted label-smoothing objective; keeps the epoch whose
// validation selection metric is highest (earliest on ties).
FineTuneResult finetune(const Parameters& pretrained,
                        const std::vector<LabeledExample>& train,
                        const std::vector<LabeledExample>& valid,
                        int n_classes, const std::vector<double>& class_weights,
                        const FineTuneConfig& cfg, std::ostream* log = nullptr);

// Classifier predictions (dense indices) over examples.
std::vector<int> predict_classes(const Parameters& params,
                                 const ClassifierHead& head,
                                 const std::vector<LabeledExample>& examples,
                                 int batch_size);

// Positive-class probability per example (binary heads only).
std::vector<double> predict_scores(const Parameters& params,
                                   const ClassifierHead& head,
                                   const std::vector<LabeledExample>& examples,
                                   int batch_size);

// Full class-probability vector per example.
std::vector<Vec> predict_probs(const Parameters& params,
                               const ClassifierHead& head,
                               const std::vector<LabeledExample>& examples,
                               int batch_size);

// Per-class deterministic holdout; every class keeps at least one training
// member, classes with a single member contribute no validation item.
std::pair<Corpus, Corpus> stratified_holdout(const Corpus& corpus,
                                             LabelKind kind,
                                             double val_fraction,
                                             std::uint64_t seed);

}  // namespace medlabel
