#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace medlabel {

// Row = true class, column = predicted class.
struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<std::int64_t> counts;  // n_classes * n_classes, row-major

  static ConfusionMatrix from(std::span<const int> truth,
                              std::span<const int> pred, int n_classes);
  std::int64_t& at(int t, int p) { return counts[t * n_classes + p]; }
  std::int64_t at(int t, int p) const { return counts[t * n_classes + p]; }
  std::int64_t total() const;
};

double accuracy(std::span<const int> truth, std::span<const int> pred);

// Unweighted mean of per-class F1; a class with no true and no predicted
// members scores 0.
double macro_f1(const ConfusionMatrix& cm);
double macro_f1(std::span<const int> truth, std::span<const int> pred,
                int n_classes);

// Multiclass Matthews correlation (the R_K generalization); 0 when either
// marginal has zero variance.
double matthews_corr(const ConfusionMatrix& cm);
double matthews_corr(std::span<const int> truth, std::span<const int> pred,
                     int n_classes);

// Mann-Whitney ROC-AUC over positive-class scores with half credit for
// ties; labels must contain both classes.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace medlabel
