#pragma once

#include <map>
#include <string>
#include <vector>

#include "medlabel/encoder.hpp"
#include "medlabel/heads.hpp"

namespace medlabel {

// Per-depth learning rate eta(l) = eta_base * gamma^l, where l counts
// encoder layers from the top (classifier head: l = 0; embeddings: l = L).
double layer_lr(double eta_base, double gamma, int depth_from_top);

// Learning rate per parameter group ("head", "layer.<i>", "embeddings",
// "mlm"). Storage index i counts from the input side, so layer.<L-1> is the
// topmost block (depth 0) and layer.0 receives eta_base * gamma^(L-1).
std::map<std::string, double> assign_param_lrs(int n_layers, double eta_base,
                                               double gamma);

// Uniform rate for every group (pretraining).
std::map<std::string, double> flat_lr_map(int n_layers, double lr);

double lr_for(const std::map<std::string, double>& lrs,
              const std::string& group);

struct NamedTensor {
  std::string name;
  Mat* value;
  const Mat* grad;
};

// Zips parameters with an identically shaped gradient struct.
std::vector<NamedTensor> collect_tensors(Parameters& params,
                                         const Parameters& grads);
void collect_head_tensors(ClassifierHead& head, const ClassifierHead& grads,
                          std::vector<NamedTensor>& out);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step = 0;
  std::map<std::string, Mat> m, v;  // first / second moments per tensor
};

// One bias-corrected Adam update. Rates come from the group of each tensor
// name; non-finite gradients raise NumericError naming the tensor.
void adam_step(AdamState& state, const AdamConfig& cfg,
               const std::map<std::string, double>& lrs,
               const std::vector<NamedTensor>& tensors);

}  // namespace medlabel
