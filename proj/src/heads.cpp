#include "medlabel/heads.hpp"

#include <cmath>

#include "medlabel/errors.hpp"

namespace medlabel {

void ClassifierHead::validate() const {
  if (weight.rows() < 2) throw UsageError("classifier head: need K >= 2");
  if (bias.rows() != 1 || bias.cols() != weight.rows())
    throw UsageError("classifier head: bias shape mismatch");
  if (!(temperature > 0.0))
    throw UsageError("classifier head: temperature must be > 0");
}

ClassifierHead ClassifierHead::zeros(int n_classes, int d_model,
                                     double temperature) {
  ClassifierHead h;
  h.weight = Mat::Zero(n_classes, d_model);
  h.bias = Mat::Zero(1, n_classes);
  h.temperature = temperature;
  h.validate();
  return h;
}

ClassifierHead init_head(int n_classes, int d_model, double temperature,
                         Rng& rng) {
  ClassifierHead h = ClassifierHead::zeros(n_classes, d_model, temperature);
  const double sigma = 0.02;
  for (int j = 0; j < h.weight.cols(); ++j)
    for (int i = 0; i < h.weight.rows(); ++i)
      h.weight(i, j) = rng.truncated_normal(sigma, 2.0 * sigma);
  return h;
}

Vec mean_pool(const Mat& z, std::span<const std::uint8_t> valid) {
  if (static_cast<std::size_t>(z.rows()) != valid.size())
    throw DataError("mean_pool: mask length mismatch");
  Vec sum = Vec::Zero(z.cols());
  int n = 0;
  for (int i = 0; i < z.rows(); ++i) {
    if (!valid[i]) continue;
    sum += z.row(i).transpose();
    ++n;
  }
  if (n == 0) throw DataError("mean_pool: all positions are padding");
  return sum / n;
}

Vec tempered_softmax(const Vec& logits, double temperature) {
  if (!(temperature > 0.0))
    throw UsageError("tempered_softmax: temperature must be > 0");
  if (!logits.allFinite())
    throw NumericError("tempered_softmax: non-finite logits");
  Vec scaled = logits / temperature;
  const double maxv = scaled.maxCoeff();
  Vec e = (scaled.array() - maxv).exp().matrix();
  return e / e.sum();
}

Vec classify(const ClassifierHead& head, const Vec& pooled) {
  if (pooled.size() != head.weight.cols())
    throw DataError("classify: pooled dimension mismatch");
  Vec logits = head.weight * pooled + head.bias.row(0).transpose();
  return tempered_softmax(logits, head.temperature);
}

void LossConfig::validate() const {
  if (n_classes < 2) throw UsageError("loss config: need K >= 2");
  if (static_cast<int>(class_weights.size()) != n_classes)
    throw UsageError("loss config: one weight per class required");
  for (double w : class_weights)
    if (!(w > 0.0)) throw UsageError("loss config: weights must be positive");
  if (epsilon < 0.0 || epsilon >= 1.0)
    throw UsageError("loss config: epsilon must be in [0,1)");
}

double weighted_label_smoothing_loss(const Vec& probs, int true_class,
                                     const LossConfig& cfg) {
  cfg.validate();
  if (probs.size() != cfg.n_classes)
    throw DataError("loss: probability vector has wrong length");
  if (true_class < 0 || true_class >= cfg.n_classes)
    throw DataError("loss: class index out of range");
  double loss = 0.0;
  for (int c = 0; c < cfg.n_classes; ++c) {
    const double y = c == true_class ? 1.0 : 0.0;
    const double q = (1.0 - cfg.epsilon) * y + cfg.epsilon / cfg.n_classes;
    const double p = std::max(probs(c), 1e-12);
    loss -= cfg.class_weights[c] * q * std::log(p);
  }
  return loss;
}

double wls_loss_from_logits(const Vec& logits, double temperature,
                            int true_class, const LossConfig& cfg,
                            Vec* d_logits) {
  cfg.validate();
  if (!(temperature > 0.0))
    throw UsageError("loss: temperature must be > 0");
  if (true_class < 0 || true_class >= cfg.n_classes)
    throw DataError("loss: class index out of range");
  Vec s = logits / temperature;
  const double maxv = s.maxCoeff();
  const double lse = maxv + std::log((s.array() - maxv).exp().sum());
  Vec p = (s.array() - lse).exp().matrix();

  double loss = 0.0;
  double wq_sum = 0.0;
  for (int c = 0; c < cfg.n_classes; ++c) {
    const double y = c == true_class ? 1.0 : 0.0;
    const double q = (1.0 - cfg.epsilon) * y + cfg.epsilon / cfg.n_classes;
    const double wq = cfg.class_weights[c] * q;
    loss -= wq * (s(c) - lse);
    wq_sum += wq;
  }
  if (d_logits) {
    d_logits->resize(cfg.n_classes);
    for (int c = 0; c < cfg.n_classes; ++c) {
      const double y = c == true_class ? 1.0 : 0.0;
      const double q = (1.0 - cfg.epsilon) * y + cfg.epsilon / cfg.n_classes;
      (*d_logits)(c) =
          (p(c) * wq_sum - cfg.class_weights[c] * q) / temperature;
    }
  }
  return loss;
}

double mlm_cross_entropy(const Mat& logits, const std::vector<int>& targets) {
  if (logits.rows() != static_cast<int>(targets.size()))
    throw DataError("mlm_cross_entropy: row/target count mismatch");
  if (targets.empty())
    throw DataError("mlm_cross_entropy: no prediction sites");
  double loss = 0.0;
  for (int i = 0; i < logits.rows(); ++i) {
    if (targets[i] < 0 || targets[i] >= logits.cols())
      throw DataError("mlm_cross_entropy: target out of range");
    const double maxv = logits.row(i).maxCoeff();
    const double lse =
        maxv + std::log((logits.row(i).array() - maxv).exp().sum());
    loss += lse - logits(i, targets[i]);
  }
  return loss / logits.rows();
}

}  // namespace medlabel
