#pragma once

#include <span>
#include <vector>

#include "medlabel/encoder.hpp"

namespace medlabel {

// Affine classifier over the pooled embedding followed by a tempered
// softmax: p = softmax((W zhat + b) / T).
struct ClassifierHead {
  Mat weight;          // K x d
  Mat bias;            // 1 x K
  double temperature = 1.0;

  int n_classes() const { return static_cast<int>(weight.rows()); }
  void validate() const;
  static ClassifierHead zeros(int n_classes, int d_model, double temperature);
};

ClassifierHead init_head(int n_classes, int d_model, double temperature,
                         Rng& rng);

template <class Head, class Fn>
void visit_head_tensors(Head& h, Fn&& fn) {
  fn("head.weight", h.weight);
  fn("head.bias", h.bias);
}

// Arithmetic mean of the non-[PAD] rows ([CLS]/[SEP] included).
Vec mean_pool(const Mat& z, std::span<const std::uint8_t> valid);

// Numerically stable softmax of logits / T.
Vec tempered_softmax(const Vec& logits, double temperature);

Vec classify(const ClassifierHead& head, const Vec& pooled);

struct LossConfig {
  std::vector<double> class_weights;  // indexed by class, all > 0
  double epsilon = 0.0;               // label smoothing in [0,1)
  int n_classes = 0;

  void validate() const;
};

// Weighted label-smoothing loss
//   L = - sum_c w(c) [ (1-eps) y_c + eps/K ] log p_c
// with probabilities clamped at 1e-12 before the log.
double weighted_label_smoothing_loss(const Vec& probs, int true_class,
                                     const LossConfig& cfg);

// Same loss evaluated from the head logits (the training path); when
// d_logits is non-null the exact gradient w.r.t. the logits is written.
double wls_loss_from_logits(const Vec& logits, double temperature,
                            int true_class, const LossConfig& cfg,
                            Vec* d_logits);

// Mean -log softmax(logits)[target] over rows.
double mlm_cross_entropy(const Mat& logits, const std::vector<int>& targets);

}  // namespace medlabel
