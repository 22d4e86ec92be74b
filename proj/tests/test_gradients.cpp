#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <span>
#include <vector>

#include "doctest.h"
#include "medlabel/encoder.hpp"
#include "medlabel/heads.hpp"
#include "medlabel/optim.hpp"
#include "support/finite_diff.hpp"

using namespace medlabel;

namespace {

EncoderConfig grad_config() {
  EncoderConfig cfg;
  cfg.layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.max_len = 16;
  cfg.vocab_size = 13;
  cfg.dropout = 0.0;
  return cfg;
}

// Two fixed sequences over a 13-token id space, specials at 0..4.
Batch grad_batch() {
  Batch b;
  b.batch_size = 2;
  b.seq_len = 16;
  b.ids.assign(32, 0);
  b.valid.assign(32, 0);
  const int s0[] = {2, 5, 6, 7, 8, 9, 4, 10, 3};
  const int s1[] = {2, 11, 12, 5, 6, 3};
  for (int i = 0; i < 9; ++i) { b.ids[i] = s0[i]; b.valid[i] = 1; }
  for (int i = 0; i < 6; ++i) { b.ids[16 + i] = s1[i]; b.valid[16 + i] = 1; }
  return b;
}

}  // namespace

TEST_CASE("masked-prediction gradients match finite differences") {
  EncoderConfig cfg = grad_config();
  Rng init(21);
  Parameters params = init_params(cfg, init);
  Batch batch = grad_batch();

  MlmTargets sel;
  sel.rows = {2, 6, 18};
  sel.targets = {7, 9, 12};

  ForwardTrace trace;
  Mat z = encoder_forward(params, batch, Mode::training, nullptr, &trace);
  Parameters grads = Parameters::zeros(cfg);
  Mat d_output = Mat::Zero(batch.rows(), cfg.d_model);
  double loss = mlm_loss(params, z, sel, &d_output, &grads);
  encoder_backward(params, batch, trace, d_output, grads);
  CHECK(loss > 0.0);
  CHECK(grads.all_finite());

  auto loss_fn = [&]() {
    Mat zz = encoder_forward(params, batch, Mode::inference, nullptr, nullptr);
    return mlm_loss(params, zz, sel, nullptr, nullptr);
  };
  auto tensors = collect_tensors(params, grads);
  auto check = testsupport::check_gradients(tensors, loss_fn);
  INFO("worst tensor: ", check.worst);
  CHECK(check.max_rel <= 1e-4);
}

TEST_CASE("classification-path gradients match finite differences") {
  EncoderConfig cfg = grad_config();
  Rng init(22);
  Parameters params = init_params(cfg, init);
  Batch batch = grad_batch();
  const int S = cfg.max_len;
  const int B = batch.batch_size;

  Rng head_rng(23);
  const double temperature = std::sqrt(2.0);
  ClassifierHead head = init_head(3, cfg.d_model, temperature, head_rng);

  LossConfig loss_cfg;
  loss_cfg.class_weights = {0.7, 1.3, 1.0};
  loss_cfg.epsilon = 1.0 / 3.0;
  loss_cfg.n_classes = 3;
  const std::vector<int> classes = {0, 2};

  auto run = [&](Mat* d_output, Parameters* grads, ClassifierHead* head_grads,
                 ForwardTrace* trace) {
    Mode mode = trace ? Mode::training : Mode::inference;
    Mat z = encoder_forward(params, batch, mode, nullptr, trace);
    double total = 0.0;
    for (int b = 0; b < B; ++b) {
      std::span<const std::uint8_t> valid(batch.valid.data() + b * S, S);
      Vec pooled = mean_pool(z.middleRows(b * S, S), valid);
      Vec logits = head.weight * pooled + head.bias.row(0).transpose();
      Vec d_logits;
      total += wls_loss_from_logits(logits, head.temperature, classes[b],
                                    loss_cfg, d_output ? &d_logits : nullptr);
      if (!d_output) continue;
      d_logits /= static_cast<double>(B);
      head_grads->weight += d_logits * pooled.transpose();
      head_grads->bias.row(0) += d_logits.transpose();
      Vec d_pooled = head.weight.transpose() * d_logits;
      int n_valid = 0;
      for (int s = 0; s < S; ++s) n_valid += valid[s];
      for (int s = 0; s < S; ++s)
        if (valid[s])
          d_output->row(b * S + s) +=
              d_pooled.transpose() / static_cast<double>(n_valid);
    }
    return total / static_cast<double>(B);
  };

  ForwardTrace trace;
  Parameters grads = Parameters::zeros(cfg);
  ClassifierHead head_grads =
      ClassifierHead::zeros(3, cfg.d_model, temperature);
  Mat d_output = Mat::Zero(batch.rows(), cfg.d_model);
  double loss = run(&d_output, &grads, &head_grads, &trace);
  encoder_backward(params, batch, trace, d_output, grads);
  CHECK(loss > 0.0);

  auto loss_fn = [&]() { return run(nullptr, nullptr, nullptr, nullptr); };
  auto tensors = collect_tensors(params, grads);
  collect_head_tensors(head, head_grads, tensors);
  auto check = testsupport::check_gradients(tensors, loss_fn);
  INFO("worst tensor: ", check.worst);
  CHECK(check.max_rel <= 1e-4);
}

TEST_CASE("dropout gradients stay exact for the dropped network") {
  // With a fixed dropout stream the realized network is deterministic, so
  // finite differences of that same network must still match.
  EncoderConfig cfg = grad_config();
  cfg.dropout = 0.15;
  Rng init(24);
  Parameters params = init_params(cfg, init);
  Batch batch = grad_batch();

  MlmTargets sel;
  sel.rows = {1, 17};
  sel.targets = {5, 11};

  // Capture the realized dropout masks once via the trace, then reuse them
  // by replaying the identical rng stream inside the loss closure.
  auto forward_with_stream = [&](ForwardTrace* trace) {
    Rng drop(99);
    return encoder_forward(params, batch, Mode::training, &drop, trace);
  };

  ForwardTrace trace;
  Mat z = forward_with_stream(&trace);
  Parameters grads = Parameters::zeros(cfg);
  Mat d_output = Mat::Zero(batch.rows(), cfg.d_model);
  mlm_loss(params, z, sel, &d_output, &grads);
  encoder_backward(params, batch, trace, d_output, grads);

  auto loss_fn = [&]() {
    Mat zz = forward_with_stream(nullptr);
    return mlm_loss(params, zz, sel, nullptr, nullptr);
  };
  auto tensors = collect_tensors(params, grads);
  auto check = testsupport::check_gradients(tensors, loss_fn);
  INFO("worst tensor: ", check.worst);
  CHECK(check.max_rel <= 1e-4);
}
