#include "medlabel/optim.hpp"

#include <cmath>

#include "medlabel/errors.hpp"

namespace medlabel {

double layer_lr(double eta_base, double gamma, int depth_from_top) {
  if (eta_base < 0) throw UsageError("base learning rate must be >= 0");
  if (gamma <= 0 || gamma > 1)
    throw UsageError("layer-wise decay gamma must be in (0, 1]");
  if (depth_from_top < 0) throw UsageError("layer depth must be >= 0");
  return eta_base * std::pow(gamma, depth_from_top);
}

std::map<std::string, double> assign_param_lrs(int n_layers, double eta_base,
                                               double gamma) {
  if (n_layers < 1) throw UsageError("n_layers must be >= 1");
  std::map<std::string, double> lrs;
  lrs["head"] = layer_lr(eta_base, gamma, 0);
  for (int i = 0; i < n_layers; ++i)
    lrs["layer." + std::to_string(i)] =
        layer_lr(eta_base, gamma, n_layers - 1 - i);
  lrs["embeddings"] = layer_lr(eta_base, gamma, n_layers);
  lrs["mlm"] = lrs["embeddings"];
  return lrs;
}

std::map<std::string, double> flat_lr_map(int n_layers, double lr) {
  if (n_layers < 1) throw UsageError("n_layers must be >= 1");
  if (lr < 0) throw UsageError("learning rate must be >= 0");
  std::map<std::string, double> lrs;
  lrs["head"] = lr;
  for (int i = 0; i < n_layers; ++i) lrs["layer." + std::to_string(i)] = lr;
  lrs["embeddings"] = lr;
  lrs["mlm"] = lr;
  return lrs;
}

double lr_for(const std::map<std::string, double>& lrs,
              const std::string& group) {
  auto it = lrs.find(group);
  if (it == lrs.end())
    throw UsageError("no learning rate assigned to group '" + group + "'");
  return it->second;
}

std::vector<NamedTensor> collect_tensors(Parameters& params,
                                         const Parameters& grads) {
  std::vector<NamedTensor> out;
  visit_tensors(params, [&](const std::string& name, Mat& m) {
    out.push_back({name, &m, nullptr});
  });
  std::size_t i = 0;
  visit_tensors(grads, [&](const std::string& name, const Mat& g) {
    if (i >= out.size() || out[i].name != name)
      throw UsageError("parameter/gradient tensor mismatch at '" + name + "'");
    out[i++].grad = &g;
  });
  return out;
}

void collect_head_tensors(ClassifierHead& head, const ClassifierHead& grads,
                          std::vector<NamedTensor>& out) {
  std::size_t base = out.size();
  visit_head_tensors(head, [&](const std::string& name, Mat& m) {
    out.push_back({name, &m, nullptr});
  });
  std::size_t i = base;
  visit_head_tensors(grads, [&](const std::string& name, const Mat& g) {
    if (i >= out.size() || out[i].name != name)
      throw UsageError("head parameter/gradient mismatch at '" + name + "'");
    out[i++].grad = &g;
  });
}

void adam_step(AdamState& state, const AdamConfig& cfg,
               const std::map<std::string, double>& lrs,
               const std::vector<NamedTensor>& tensors) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const NamedTensor& t : tensors) {
    if (t.value == nullptr || t.grad == nullptr)
      throw UsageError("adam_step: tensor '" + t.name + "' missing gradient");
    const Mat& g = *t.grad;
    if (!g.allFinite())
      throw NumericError("non-finite gradient in tensor '" + t.name + "'");
    const double lr = lr_for(lrs, param_group(t.name));
    Mat& m = state.m[t.name];
    Mat& v = state.v[t.name];
    if (m.size() == 0) {
      m = Mat::Zero(g.rows(), g.cols());
      v = Mat::Zero(g.rows(), g.cols());
    } else if (m.rows() != g.rows() || m.cols() != g.cols()) {
      throw UsageError("adam_step: moment shape mismatch for '" + t.name + "'");
    }
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = (cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square()).matrix();
    const Mat m_hat = m / bc1;
    const Mat v_hat = v / bc2;
    t.value->array() -= lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
  }
}

}  // namespace medlabel
