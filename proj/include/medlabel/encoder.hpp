#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "medlabel/rng.hpp"
#include "medlabel/vocab.hpp"

namespace medlabel {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct EncoderConfig {
  int layers = 4;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int max_len = 128;
  int vocab_size = 0;
  double dropout = 0.1;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// All trainable arrays of the encoder. Vectors are stored as 1xN matrices
// so every tensor shares one type. Gradients reuse this struct.
struct LayerParams {
  Mat wq, wk, wv, wo;      // d x d
  Mat bq, bk, bv, bo;      // 1 x d
  Mat ln1_scale, ln1_shift;
  Mat ff_w1, ff_b1;        // d x d_ff, 1 x d_ff
  Mat ff_w2, ff_b2;        // d_ff x d, 1 x d
  Mat ln2_scale, ln2_shift;
};

struct Parameters {
  EncoderConfig config;
  Mat tok_embedding;       // vocab_size x d
  Mat pos_embedding;       // max_len x d
  Mat emb_ln_scale, emb_ln_shift;  // 1 x d
  std::vector<LayerParams> layers;
  Mat mlm_bias;            // 1 x vocab_size

  static Parameters zeros(const EncoderConfig& config);
  void set_zero();
  bool all_finite() const;
};

// Weights ~ Normal(0, 0.02^2) truncated at +-2 sigma; layer-norm scales 1,
// shifts and biases 0. Deterministic per rng stream.
Parameters init_params(const EncoderConfig& config, Rng& rng);

// Fixed-order visitation of every named tensor. Works on const and
// mutable Parameters; used by the optimizer, serialization and tests.
template <class Params, class Fn>
void visit_tensors(Params& p, Fn&& fn) {
  fn("embeddings.token", p.tok_embedding);
  fn("embeddings.position", p.pos_embedding);
  fn("embeddings.ln.scale", p.emb_ln_scale);
  fn("embeddings.ln.shift", p.emb_ln_shift);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const std::string prefix = "layer." + std::to_string(i) + ".";
    auto& l = p.layers[i];
    fn(prefix + "attn.wq", l.wq);
    fn(prefix + "attn.bq", l.bq);
    fn(prefix + "attn.wk", l.wk);
    fn(prefix + "attn.bk", l.bk);
    fn(prefix + "attn.wv", l.wv);
    fn(prefix + "attn.bv", l.bv);
    fn(prefix + "attn.wo", l.wo);
    fn(prefix + "attn.bo", l.bo);
    fn(prefix + "ln1.scale", l.ln1_scale);
    fn(prefix + "ln1.shift", l.ln1_shift);
    fn(prefix + "ffn.w1", l.ff_w1);
    fn(prefix + "ffn.b1", l.ff_b1);
    fn(prefix + "ffn.w2", l.ff_w2);
    fn(prefix + "ffn.b2", l.ff_b2);
    fn(prefix + "ln2.scale", l.ln2_scale);
    fn(prefix + "ln2.shift", l.ln2_shift);
  }
  fn("mlm.bias", p.mlm_bias);
}

// Learning-rate / optimizer grouping: "embeddings", "layer.<i>", "mlm",
// "head".
std::string param_group(const std::string& tensor_name);

// A batch of token sequences flattened to rows; row r = b * seq_len + s.
struct Batch {
  int batch_size = 0;
  int seq_len = 0;
  std::vector<int> ids;
  std::vector<std::uint8_t> valid;  // 1 = non-[PAD]

  int rows() const { return batch_size * seq_len; }
  void add(const TokenSequence& seq);
};

enum class Mode { inference, training };

struct LayerTrace {
  Mat input;                 // rows x d
  Mat q, k, v;               // rows x d
  Mat attn;                  // (batch*heads*seq) x seq, post-softmax
  Mat attn_keep;             // dropout multipliers, empty if no dropout
  Mat context;               // rows x d
  Mat attn_out_keep;         // rows x d dropout multipliers
  Mat ln1_xhat;              // rows x d
  Vec ln1_inv_std;           // rows
  Mat h1;                    // rows x d, FFN input
  Mat f1;                    // rows x d_ff, pre-GELU
  Mat g;                     // rows x d_ff, post-GELU
  Mat ffn_keep;              // rows x d dropout multipliers
  Mat ln2_xhat;
  Vec ln2_inv_std;
};

struct ForwardTrace {
  Mat emb_xhat;
  Vec emb_inv_std;
  Mat emb_keep;
  std::vector<LayerTrace> layers;
};

// Returns the contextual embeddings, rows() x d. In training mode with
// dropout > 0 an rng stream must be supplied; a trace is recorded whenever
// the pointer is non-null (required for backward).
Mat encoder_forward(const Parameters& params, const Batch& batch, Mode mode,
                    Rng* dropout_rng, ForwardTrace* trace);

// Accumulates exact reverse-mode gradients of every parameter into grads.
// d_output is the loss gradient w.r.t. the forward result.
void encoder_backward(const Parameters& params, const Batch& batch,
                      const ForwardTrace& trace, const Mat& d_output,
                      Parameters& grads);

struct EncoderOutput {
  Mat z;  // max_len x d
};

// Single-sequence convenience wrapper around encoder_forward.
EncoderOutput encode(const Parameters& params, const TokenSequence& seq,
                     Mode mode = Mode::inference, Rng* dropout_rng = nullptr,
                     ForwardTrace* trace = nullptr);

// Per-position vocabulary logits z_i E^T + b, output projection tied to the
// token embedding.
Mat mlm_logits(const Parameters& params, const EncoderOutput& output,
               const std::vector<int>& positions);

// Flattened MLM prediction sites within a batch.
struct MlmTargets {
  std::vector<int> rows;     // row index into the forward result
  std::vector<int> targets;  // original vocabulary id
};

// Mean cross-entropy over the target rows. When d_output / grads are
// non-null, accumulates the loss gradients (including the tied-embedding
// and output-bias contributions).
double mlm_loss(const Parameters& params, const Mat& z, const MlmTargets& sel,
                Mat* d_output, Parameters* grads);

}  // namespace medlabel
