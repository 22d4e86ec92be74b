#include "medlabel/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <ostream>
#include <thread>
#include <unordered_map>

#include "medlabel/baseline.hpp"
#include "medlabel/errors.hpp"
#include "medlabel/format.hpp"

namespace medlabel {
namespace {

constexpr std::uint64_t kStreamFoldSeed = 50;

std::optional<double> fold_auc(const Parameters& params,
                               const ClassifierHead& head,
                               const std::vector<LabeledExample>& valid,
                               const std::vector<int>& truth, int batch_size) {
  if (head.n_classes() != 2) return std::nullopt;
  const bool has_pos = std::find(truth.begin(), truth.end(), 1) != truth.end();
  const bool has_neg = std::find(truth.begin(), truth.end(), 0) != truth.end();
  if (!has_pos || !has_neg) return std::nullopt;
  return roc_auc(predict_scores(params, head, valid, batch_size), truth);
}

void append_metric_rows(std::string& csv, const std::string& fold,
                        const FoldReport& r) {
  auto row = [&](const char* metric, double v) {
    csv += fold + ',' + metric + ',' + format_double(v) + '\n';
  };
  row("accuracy", r.accuracy);
  if (r.roc_auc) row("roc_auc", *r.roc_auc);
  row("macro_f1", r.macro_f1);
  row("mcc", r.mcc);
}

}  // namespace

CvResult cross_validate(const Corpus& corpus, LabelKind task,
                        const Vocab& vocab, const Parameters& init_params,
                        const FineTuneConfig& ft, int k, std::uint64_t seed,
                        int jobs, const MaskRuleSet* rules,
                        std::ostream* log) {
  if (k < 2) throw UsageError("cross-validation needs k >= 2");
  if (jobs < 1) throw UsageError("jobs must be >= 1");
  ft.validate();

  Corpus labeled = labeled_subset(corpus, task);
  if (labeled.size() == 0) throw DataError("no labeled reports for this task");
  if (task == LabelKind::birads && rules) {
    for (Report& r : labeled.reports)
      r.text = mask_birads_mentions(r.text, *rules).text;
  }

  const int n_classes = n_classes_for(task);
  const int max_len = init_params.config.max_len;
  std::vector<TokenSequence> seqs;
  std::vector<int> classes;
  seqs.reserve(labeled.size());
  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < labeled.reports.size(); ++i) {
    const Report& r = labeled.reports[i];
    seqs.push_back(tokenize(r.text, vocab, max_len));
    classes.push_back(dense_class(label_of(r, task), task));
    index_of.emplace(r.id, i);
  }

  const KFoldResult split = stratified_kfold(labeled, task, k, seed);

  CvResult result;
  result.warnings = split.warnings;
  result.folds.resize(k);
  std::vector<std::exception_ptr> failures(k);

  auto run_fold = [&](int f, std::ostream* fold_log) {
    const FoldSplit& fold = split.folds[f];
    auto gather = [&](const std::vector<std::string>& ids) {
      std::vector<LabeledExample> out;
      out.reserve(ids.size());
      for (const std::string& id : ids) {
        const std::size_t i = index_of.at(id);
        out.push_back({seqs[i], classes[i]});
      }
      return out;
    };
    const std::vector<LabeledExample> train = gather(fold.train_ids);
    const std::vector<LabeledExample> valid = gather(fold.valid_ids);

    std::vector<int> train_classes(train.size());
    for (std::size_t i = 0; i < train.size(); ++i)
      train_classes[i] = train[i].cls;

    FineTuneConfig fold_ft = ft;
    fold_ft.seed = Rng(seed)
                       .derive(kStreamFoldSeed, static_cast<std::uint64_t>(f))
                       .next_u64();
    if (fold_log) *fold_log << "fold " << (f + 1) << '\n';
    const FineTuneResult tuned =
        finetune(init_params, train, valid, n_classes,
                 dense_class_weights(train_classes, n_classes), fold_ft,
                 fold_log);

    std::vector<int> truth(valid.size());
    for (std::size_t i = 0; i < valid.size(); ++i) truth[i] = valid[i].cls;
    const std::vector<int> preds =
        predict_classes(tuned.params, tuned.head, valid, ft.batch_size);

    FoldReport report;
    report.fold_index = f;
    report.confusion = ConfusionMatrix::from(truth, preds, n_classes);
    report.accuracy = accuracy(truth, preds);
    report.macro_f1 = macro_f1(report.confusion);
    report.mcc = matthews_corr(report.confusion);
    report.roc_auc = fold_auc(tuned.params, tuned.head, valid, truth,
                              ft.batch_size);
    report.best_epoch = tuned.best_epoch;
    result.folds[f] = std::move(report);
  };

  if (jobs == 1) {
    for (int f = 0; f < k; ++f) run_fold(f, log);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int f = next.fetch_add(1); f < k; f = next.fetch_add(1)) {
        try {
          run_fold(f, nullptr);
        } catch (...) {
          failures[f] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min(jobs, k);
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    for (int f = 0; f < k; ++f) {
      if (!failures[f]) continue;
      try {
        std::rethrow_exception(failures[f]);
      } catch (const std::exception& e) {
        throw DataError("fold " + std::to_string(f + 1) +
                        " failed: " + e.what());
      }
    }
  }

  result.pooled.n_classes = n_classes;
  result.pooled.counts.assign(
      static_cast<std::size_t>(n_classes) * n_classes, 0);
  bool all_auc = true;
  for (const FoldReport& r : result.folds) {
    result.averages.accuracy += r.accuracy / k;
    result.averages.macro_f1 += r.macro_f1 / k;
    result.averages.mcc += r.mcc / k;
    all_auc = all_auc && r.roc_auc.has_value();
    for (std::size_t i = 0; i < result.pooled.counts.size(); ++i)
      result.pooled.counts[i] += r.confusion.counts[i];
  }
  if (all_auc) {
    double sum = 0;
    for (const FoldReport& r : result.folds) sum += *r.roc_auc;
    result.averages.roc_auc = sum / k;
  }
  return result;
}

FoldReport baseline_metrics(const Corpus& corpus,
                            const std::vector<std::string>& keywords) {
  const Corpus labeled = labeled_subset(corpus, LabelKind::biopsy);
  if (labeled.size() == 0) throw DataError("no biopsy-labeled reports");
  std::vector<int> truth, preds;
  std::vector<double> scores;
  for (const Report& r : labeled.reports) {
    truth.push_back(label_of(r, LabelKind::biopsy));
    const bool hit = keyword_biopsy_classifier(r, keywords);
    preds.push_back(hit ? 1 : 0);
    scores.push_back(hit ? 1.0 : 0.0);
  }
  FoldReport report;
  report.confusion = ConfusionMatrix::from(truth, preds, 2);
  report.accuracy = accuracy(truth, preds);
  report.macro_f1 = macro_f1(report.confusion);
  report.mcc = matthews_corr(report.confusion);
  const bool has_pos = std::find(truth.begin(), truth.end(), 1) != truth.end();
  const bool has_neg = std::find(truth.begin(), truth.end(), 0) != truth.end();
  if (has_pos && has_neg) report.roc_auc = roc_auc(scores, truth);
  return report;
}

std::string cv_to_csv(const CvResult& result) {
  std::string csv = "fold,metric,value\n";
  for (const FoldReport& r : result.folds) {
    const std::string fold = std::to_string(r.fold_index + 1);
    append_metric_rows(csv, fold, r);
    csv += fold + ",best_epoch," + std::to_string(r.best_epoch) + '\n';
  }
  csv += "avg,accuracy," + format_double(result.averages.accuracy) + '\n';
  if (result.averages.roc_auc)
    csv += "avg,roc_auc," + format_double(*result.averages.roc_auc) + '\n';
  csv += "avg,macro_f1," + format_double(result.averages.macro_f1) + '\n';
  csv += "avg,mcc," + format_double(result.averages.mcc) + '\n';
  return csv;
}

std::string format_cv_table(const CvResult& result) {
  std::string out = "fold  accuracy  roc-auc  macro-f1      mcc\n";
  auto cell = [](const std::optional<double>& v) {
    return v ? format_fixed(*v, 4) : std::string("-");
  };
  auto line = [&](const std::string& name, double acc,
                  const std::optional<double>& auc, double f1, double mcc) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%4s  %8s  %7s  %8s  %7s\n", name.c_str(),
                  format_fixed(acc, 4).c_str(), cell(auc).c_str(),
                  format_fixed(f1, 4).c_str(), format_fixed(mcc, 4).c_str());
    out += buf;
  };
  for (const FoldReport& r : result.folds)
    line(std::to_string(r.fold_index + 1), r.accuracy, r.roc_auc, r.macro_f1,
         r.mcc);
  line("avg", result.averages.accuracy, result.averages.roc_auc,
       result.averages.macro_f1, result.averages.mcc);
  return out;
}

std::string format_fold_report(const FoldReport& report) {
  std::string out = "accuracy " + format_fixed(report.accuracy, 4);
  if (report.roc_auc) out += "  roc-auc " + format_fixed(*report.roc_auc, 4);
  out += "  macro-f1 " + format_fixed(report.macro_f1, 4);
  out += "  mcc " + format_fixed(report.mcc, 4);
  return out;
}

}  // namespace medlabel
