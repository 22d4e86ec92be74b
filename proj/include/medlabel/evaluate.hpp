#pragma once

#include <optional>
#include <string>
#include <vector>

#include "medlabel/birads_mask.hpp"
#include "medlabel/corpus.hpp"
#include "medlabel/metrics.hpp"
#include "medlabel/training.hpp"

namespace medlabel {

struct FoldReport {
  int fold_index = 0;
  double accuracy = 0;
  double macro_f1 = 0;
  double mcc = 0;
  std::optional<double> roc_auc;  // binary task only
  ConfusionMatrix confusion;
  int best_epoch = 0;
};

struct CvAverages {
  double accuracy = 0;
  double macro_f1 = 0;
  double mcc = 0;
  std::optional<double> roc_auc;
};

struct CvResult {
  std::vector<FoldReport> folds;
  CvAverages averages;           // unweighted over folds
  ConfusionMatrix pooled;        // summed over folds
  std::vector<std::string> warnings;
};

// Stratified k-fold protocol: per fold, fine-tune a fresh head (and the
// encoder) from init_params on the train side with fold-derived seeds,
// then score the best epoch's model on the held-out side. For the BI-RADS
// task, rules (when given) mask score mentions before tokenization.
// jobs > 1 trains folds on that many threads; results are identical to the
// sequential run.
CvResult cross_validate(const Corpus& corpus, LabelKind task,
                        const Vocab& vocab, const Parameters& init_params,
                        const FineTuneConfig& ft, int k, std::uint64_t seed,
                        int jobs, const MaskRuleSet* rules,
                        std::ostream* log = nullptr);

// Keyword-baseline metrics over all biopsy-labeled reports.
FoldReport baseline_metrics(const Corpus& corpus,
                            const std::vector<std::string>& keywords);

std::string cv_to_csv(const CvResult& result);
std::string format_cv_table(const CvResult& result);
std::string format_fold_report(const FoldReport& report);

}  // namespace medlabel
