#include "medlabel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "medlabel/errors.hpp"

namespace medlabel {
namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b)
    throw UsageError("metrics: prediction/label length mismatch (" +
                     std::to_string(a) + " vs " + std::to_string(b) + ")");
  if (a == 0) throw UsageError("metrics: empty inputs");
}

}  // namespace

ConfusionMatrix ConfusionMatrix::from(std::span<const int> truth,
                                      std::span<const int> pred,
                                      int n_classes) {
  check_lengths(truth.size(), pred.size());
  if (n_classes < 2) throw UsageError("metrics: n_classes must be >= 2");
  ConfusionMatrix cm;
  cm.n_classes = n_classes;
  cm.counts.assign(static_cast<std::size_t>(n_classes) * n_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes || pred[i] < 0 ||
        pred[i] >= n_classes)
      throw DataError("metrics: class index out of range at position " +
                      std::to_string(i));
    ++cm.at(truth[i], pred[i]);
  }
  return cm;
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

double accuracy(std::span<const int> truth, std::span<const int> pred) {
  check_lengths(truth.size(), pred.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] == pred[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double macro_f1(const ConfusionMatrix& cm) {
  double sum = 0;
  for (int c = 0; c < cm.n_classes; ++c) {
    std::int64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < cm.n_classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const std::int64_t denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) /
                                  static_cast<double>(denom);
  }
  return sum / cm.n_classes;
}

double macro_f1(std::span<const int> truth, std::span<const int> pred,
                int n_classes) {
  return macro_f1(ConfusionMatrix::from(truth, pred, n_classes));
}

double matthews_corr(const ConfusionMatrix& cm) {
  const double s = static_cast<double>(cm.total());
  double c = 0, pp = 0, tt = 0, pt = 0;
  for (int k = 0; k < cm.n_classes; ++k) {
    c += static_cast<double>(cm.at(k, k));
    double p_k = 0, t_k = 0;
    for (int o = 0; o < cm.n_classes; ++o) {
      p_k += static_cast<double>(cm.at(o, k));
      t_k += static_cast<double>(cm.at(k, o));
    }
    pp += p_k * p_k;
    tt += t_k * t_k;
    pt += p_k * t_k;
  }
  const double cov = c * s - pt;
  const double denom = std::sqrt((s * s - pp) * (s * s - tt));
  return denom == 0.0 ? 0.0 : cov / denom;
}

double matthews_corr(std::span<const int> truth, std::span<const int> pred,
                     int n_classes) {
  return matthews_corr(ConfusionMatrix::from(truth, pred, n_classes));
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size());
  std::int64_t n_pos = 0, n_neg = 0;
  for (int l : labels) {
    if (l == 1) ++n_pos;
    else if (l == 0) ++n_neg;
    else throw DataError("roc_auc: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw DataError("roc_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mid-rank assignment over tie groups; ranks are 1-based.
  double pos_rank_sum = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = (static_cast<double>(i + 1) +
                             static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += mid_rank;
    i = j;
  }
  const double u = pos_rank_sum -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace medlabel
