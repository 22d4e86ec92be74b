#include "medlabel/encoder.hpp"

#include <cmath>

#include "medlabel/errors.hpp"

namespace medlabel {

namespace {

constexpr double kLayerNormEps = 1e-12;
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad_scalar(double x) {
  const double phi = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * phi;
}

// y = xhat .* scale .+ shift with per-row statistics.
Mat layer_norm(const Mat& x, const Mat& scale, const Mat& shift, Mat& xhat,
               Vec& inv_std) {
  Vec mu = x.rowwise().mean();
  Mat centered = x.colwise() - mu;
  Vec var = centered.array().square().rowwise().mean().matrix();
  inv_std = (var.array() + kLayerNormEps).sqrt().inverse().matrix();
  xhat = (centered.array().colwise() * inv_std.array()).matrix();
  Mat y = (xhat.array().rowwise() * scale.row(0).array()).matrix();
  y.array().rowwise() += shift.row(0).array();
  return y;
}

// Returns dx; accumulates dscale / dshift.
Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const Vec& inv_std,
                        const Mat& scale, Mat& dscale, Mat& dshift) {
  dshift.row(0) += dy.colwise().sum();
  dscale.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  Mat t = (dy.array().rowwise() * scale.row(0).array()).matrix();
  Vec m1 = t.rowwise().mean();
  Vec m2 = (t.array() * xhat.array()).rowwise().mean().matrix();
  Mat dx = ((t.colwise() - m1).array() -
            (xhat.array().colwise() * m2.array()))
               .matrix();
  dx = (dx.array().colwise() * inv_std.array()).matrix();
  return dx;
}

Mat dropout_keep_mask(int rows, int cols, double rate, Rng& rng) {
  Mat mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i)
      mask(i, j) = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || max_len < 2 ||
      vocab_size < 1)
    throw UsageError("encoder config: all dimensions must be positive");
  if (d_model % n_heads != 0)
    throw UsageError("encoder config: d_model must be divisible by n_heads");
  if (dropout < 0.0 || dropout >= 1.0)
    throw UsageError("encoder config: dropout must be in [0,1)");
}

Parameters Parameters::zeros(const EncoderConfig& config) {
  config.validate();
  Parameters p;
  p.config = config;
  const int d = config.d_model;
  p.tok_embedding = Mat::Zero(config.vocab_size, d);
  p.pos_embedding = Mat::Zero(config.max_len, d);
  p.emb_ln_scale = Mat::Zero(1, d);
  p.emb_ln_shift = Mat::Zero(1, d);
  p.layers.resize(config.layers);
  for (LayerParams& l : p.layers) {
    l.wq = Mat::Zero(d, d); l.bq = Mat::Zero(1, d);
    l.wk = Mat::Zero(d, d); l.bk = Mat::Zero(1, d);
    l.wv = Mat::Zero(d, d); l.bv = Mat::Zero(1, d);
    l.wo = Mat::Zero(d, d); l.bo = Mat::Zero(1, d);
    l.ln1_scale = Mat::Zero(1, d); l.ln1_shift = Mat::Zero(1, d);
    l.ff_w1 = Mat::Zero(d, config.d_ff); l.ff_b1 = Mat::Zero(1, config.d_ff);
    l.ff_w2 = Mat::Zero(config.d_ff, d); l.ff_b2 = Mat::Zero(1, d);
    l.ln2_scale = Mat::Zero(1, d); l.ln2_shift = Mat::Zero(1, d);
  }
  p.mlm_bias = Mat::Zero(1, config.vocab_size);
  return p;
}

void Parameters::set_zero() {
  visit_tensors(*this, [](const std::string&, Mat& m) { m.setZero(); });
}

bool Parameters::all_finite() const {
  bool ok = true;
  visit_tensors(*this, [&](const std::string&, const Mat& m) {
    if (!m.allFinite()) ok = false;
  });
  return ok;
}

Parameters init_params(const EncoderConfig& config, Rng& rng) {
  Parameters p = Parameters::zeros(config);
  const double sigma = 0.02;
  const double cut = 2.0 * sigma;
  auto fill = [&](Mat& m) {
    for (int j = 0; j < m.cols(); ++j)
      for (int i = 0; i < m.rows(); ++i)
        m(i, j) = rng.truncated_normal(sigma, cut);
  };
  fill(p.tok_embedding);
  fill(p.pos_embedding);
  p.emb_ln_scale.setOnes();
  for (LayerParams& l : p.layers) {
    fill(l.wq);
    fill(l.wk);
    fill(l.wv);
    fill(l.wo);
    fill(l.ff_w1);
    fill(l.ff_w2);
    l.ln1_scale.setOnes();
    l.ln2_scale.setOnes();
  }
  return p;
}

std::string param_group(const std::string& tensor_name) {
  if (tensor_name.rfind("layer.", 0) == 0) {
    auto dot = tensor_name.find('.', 6);
    return tensor_name.substr(0, dot);
  }
  auto dot = tensor_name.find('.');
  return dot == std::string::npos ? tensor_name : tensor_name.substr(0, dot);
}

void Batch::add(const TokenSequence& seq) {
  const int len = static_cast<int>(seq.ids.size());
  if (batch_size == 0)
    seq_len = len;
  else if (len != seq_len)
    throw DataError("batch: mixed sequence lengths");
  ++batch_size;
  ids.insert(ids.end(), seq.ids.begin(), seq.ids.end());
  for (int s = 0; s < len; ++s) valid.push_back(s < seq.length ? 1 : 0);
}

Mat encoder_forward(const Parameters& params, const Batch& batch, Mode mode,
                    Rng* dropout_rng, ForwardTrace* trace) {
  const EncoderConfig& cfg = params.config;
  const int d = cfg.d_model;
  const int S = batch.seq_len;
  const int B = batch.batch_size;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const int rows = batch.rows();
  if (S > cfg.max_len)
    throw DataError("encoder: sequence length exceeds max_len");
  const bool use_dropout = mode == Mode::training && cfg.dropout > 0.0;
  if (use_dropout && !dropout_rng)
    throw UsageError("encoder: training-mode dropout requires an rng");

  // Token + positional embedding.
  Mat x(rows, d);
  for (int r = 0; r < rows; ++r) {
    const int id = batch.ids[r];
    if (id < 0 || id >= cfg.vocab_size)
      throw DataError("encoder: token id " + std::to_string(id) +
                      " outside vocabulary of size " +
                      std::to_string(cfg.vocab_size));
    x.row(r) = params.tok_embedding.row(id) + params.pos_embedding.row(r % S);
  }

  Mat xhat;
  Vec inv_std;
  x = layer_norm(x, params.emb_ln_scale, params.emb_ln_shift, xhat, inv_std);
  Mat emb_keep;
  if (use_dropout) {
    emb_keep = dropout_keep_mask(rows, d, cfg.dropout, *dropout_rng);
    x.array() *= emb_keep.array();
  }
  if (trace) {
    trace->emb_xhat = std::move(xhat);
    trace->emb_inv_std = std::move(inv_std);
    trace->emb_keep = std::move(emb_keep);
    trace->layers.clear();
    trace->layers.resize(cfg.layers);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int li = 0; li < cfg.layers; ++li) {
    const LayerParams& l = params.layers[li];
    LayerTrace local;
    LayerTrace& t = trace ? trace->layers[li] : local;
    t.input = x;

    t.q = x * l.wq;
    t.q.array().rowwise() += l.bq.row(0).array();
    t.k = x * l.wk;
    t.k.array().rowwise() += l.bk.row(0).array();
    t.v = x * l.wv;
    t.v.array().rowwise() += l.bv.row(0).array();

    t.attn = Mat(B * H * S, S);
    if (use_dropout)
      t.attn_keep = dropout_keep_mask(B * H * S, S, cfg.dropout, *dropout_rng);
    t.context = Mat(rows, d);
    for (int b = 0; b < B; ++b) {
      const auto qb = t.q.middleRows(b * S, S);
      const auto kb = t.k.middleRows(b * S, S);
      const auto vb = t.v.middleRows(b * S, S);
      for (int h = 0; h < H; ++h) {
        Mat scores = scale * (qb.middleCols(h * dh, dh) *
                              kb.middleCols(h * dh, dh).transpose());
        auto probs = t.attn.middleRows((b * H + h) * S, S);
        for (int i = 0; i < S; ++i) {
          double maxv = -std::numeric_limits<double>::infinity();
          for (int j = 0; j < S; ++j)
            if (batch.valid[b * S + j] && scores(i, j) > maxv)
              maxv = scores(i, j);
          double sum = 0.0;
          for (int j = 0; j < S; ++j) {
            double p = batch.valid[b * S + j] ? std::exp(scores(i, j) - maxv)
                                              : 0.0;
            probs(i, j) = p;
            sum += p;
          }
          probs.row(i) /= sum;
        }
        Mat applied = use_dropout
                          ? (probs.array() *
                             t.attn_keep.middleRows((b * H + h) * S, S).array())
                                .matrix()
                          : Mat(probs);
        t.context.middleRows(b * S, S).middleCols(h * dh, dh).noalias() =
            applied * vb.middleCols(h * dh, dh);
      }
    }

    Mat attn_out = t.context * l.wo;
    attn_out.array().rowwise() += l.bo.row(0).array();
    if (use_dropout) {
      t.attn_out_keep = dropout_keep_mask(rows, d, cfg.dropout, *dropout_rng);
      attn_out.array() *= t.attn_out_keep.array();
    }
    Mat r1 = x + attn_out;
    t.h1 = layer_norm(r1, l.ln1_scale, l.ln1_shift, t.ln1_xhat, t.ln1_inv_std);

    t.f1 = t.h1 * l.ff_w1;
    t.f1.array().rowwise() += l.ff_b1.row(0).array();
    t.g = t.f1.unaryExpr([](double v) { return gelu_scalar(v); });
    Mat f2 = t.g * l.ff_w2;
    f2.array().rowwise() += l.ff_b2.row(0).array();
    if (use_dropout) {
      t.ffn_keep = dropout_keep_mask(rows, d, cfg.dropout, *dropout_rng);
      f2.array() *= t.ffn_keep.array();
    }
    Mat r2 = t.h1 + f2;
    x = layer_norm(r2, l.ln2_scale, l.ln2_shift, t.ln2_xhat, t.ln2_inv_std);
  }
  return x;
}

void encoder_backward(const Parameters& params, const Batch& batch,
                      const ForwardTrace& trace, const Mat& d_output,
                      Parameters& grads) {
  const EncoderConfig& cfg = params.config;
  const int d = cfg.d_model;
  const int S = batch.seq_len;
  const int B = batch.batch_size;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  if (static_cast<int>(trace.layers.size()) != cfg.layers)
    throw DataError("encoder_backward: trace does not match configuration");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat cur = d_output;
  for (int li = cfg.layers - 1; li >= 0; --li) {
    const LayerParams& l = params.layers[li];
    const LayerTrace& t = trace.layers[li];
    LayerParams& gl = grads.layers[li];

    Mat dr2 = layer_norm_backward(cur, t.ln2_xhat, t.ln2_inv_std, l.ln2_scale,
                                  gl.ln2_scale, gl.ln2_shift);
    Mat dh1 = dr2;
    Mat df2 = t.ffn_keep.size() ? (dr2.array() * t.ffn_keep.array()).matrix()
                                : dr2;
    gl.ff_w2.noalias() += t.g.transpose() * df2;
    gl.ff_b2.row(0) += df2.colwise().sum();
    Mat dg = df2 * l.ff_w2.transpose();
    Mat df1 =
        (dg.array() *
         t.f1.unaryExpr([](double v) { return gelu_grad_scalar(v); }).array())
            .matrix();
    gl.ff_w1.noalias() += t.h1.transpose() * df1;
    gl.ff_b1.row(0) += df1.colwise().sum();
    dh1.noalias() += df1 * l.ff_w1.transpose();

    Mat dr1 = layer_norm_backward(dh1, t.ln1_xhat, t.ln1_inv_std, l.ln1_scale,
                                  gl.ln1_scale, gl.ln1_shift);
    Mat dx = dr1;
    Mat dattn_out = t.attn_out_keep.size()
                        ? (dr1.array() * t.attn_out_keep.array()).matrix()
                        : dr1;
    gl.wo.noalias() += t.context.transpose() * dattn_out;
    gl.bo.row(0) += dattn_out.colwise().sum();
    Mat dctx = dattn_out * l.wo.transpose();

    Mat dq = Mat::Zero(batch.rows(), d);
    Mat dk = Mat::Zero(batch.rows(), d);
    Mat dv = Mat::Zero(batch.rows(), d);
    for (int b = 0; b < B; ++b) {
      const auto qb = t.q.middleRows(b * S, S);
      const auto kb = t.k.middleRows(b * S, S);
      const auto vb = t.v.middleRows(b * S, S);
      for (int h = 0; h < H; ++h) {
        const auto probs = t.attn.middleRows((b * H + h) * S, S);
        const auto dctx_h = dctx.middleRows(b * S, S).middleCols(h * dh, dh);
        Mat applied =
            t.attn_keep.size()
                ? (probs.array() *
                   t.attn_keep.middleRows((b * H + h) * S, S).array())
                      .matrix()
                : Mat(probs);
        Mat dapplied = dctx_h * vb.middleCols(h * dh, dh).transpose();
        dv.middleRows(b * S, S).middleCols(h * dh, dh).noalias() +=
            applied.transpose() * dctx_h;
        Mat dprobs =
            t.attn_keep.size()
                ? (dapplied.array() *
                   t.attn_keep.middleRows((b * H + h) * S, S).array())
                      .matrix()
                : std::move(dapplied);
        Vec rowdot = (dprobs.array() * probs.array()).rowwise().sum().matrix();
        Mat dscores = (probs.array() * (dprobs.colwise() - rowdot).array() *
                       scale)
                          .matrix();
        dq.middleRows(b * S, S).middleCols(h * dh, dh).noalias() +=
            dscores * kb.middleCols(h * dh, dh);
        dk.middleRows(b * S, S).middleCols(h * dh, dh).noalias() +=
            dscores.transpose() * qb.middleCols(h * dh, dh);
      }
    }
    gl.wq.noalias() += t.input.transpose() * dq;
    gl.bq.row(0) += dq.colwise().sum();
    gl.wk.noalias() += t.input.transpose() * dk;
    gl.bk.row(0) += dk.colwise().sum();
    gl.wv.noalias() += t.input.transpose() * dv;
    gl.bv.row(0) += dv.colwise().sum();
    dx.noalias() += dq * l.wq.transpose();
    dx.noalias() += dk * l.wk.transpose();
    dx.noalias() += dv * l.wv.transpose();
    cur = std::move(dx);
  }

  if (trace.emb_keep.size()) cur.array() *= trace.emb_keep.array();
  Mat dx0 = layer_norm_backward(cur, trace.emb_xhat, trace.emb_inv_std,
                                params.emb_ln_scale, grads.emb_ln_scale,
                                grads.emb_ln_shift);
  for (int r = 0; r < batch.rows(); ++r) {
    grads.tok_embedding.row(batch.ids[r]) += dx0.row(r);
    grads.pos_embedding.row(r % S) += dx0.row(r);
  }
}

EncoderOutput encode(const Parameters& params, const TokenSequence& seq,
                     Mode mode, Rng* dropout_rng, ForwardTrace* trace) {
  Batch batch;
  batch.add(seq);
  return EncoderOutput{encoder_forward(params, batch, mode, dropout_rng, trace)};
}

Mat mlm_logits(const Parameters& params, const EncoderOutput& output,
               const std::vector<int>& positions) {
  const int V = params.config.vocab_size;
  Mat logits(static_cast<int>(positions.size()), V);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int pos = positions[i];
    if (pos < 0 || pos >= output.z.rows())
      throw DataError("mlm_logits: position " + std::to_string(pos) +
                      " out of range");
    logits.row(i) =
        (params.tok_embedding * output.z.row(pos).transpose()).transpose() +
        params.mlm_bias.row(0);
  }
  return logits;
}

double mlm_loss(const Parameters& params, const Mat& z, const MlmTargets& sel,
                Mat* d_output, Parameters* grads) {
  const int n = static_cast<int>(sel.rows.size());
  if (n == 0) throw DataError("mlm_loss: no prediction sites");
  const int d = params.config.d_model;
  const int V = params.config.vocab_size;

  Mat zs(n, d);
  for (int i = 0; i < n; ++i) zs.row(i) = z.row(sel.rows[i]);
  Mat logits = zs * params.tok_embedding.transpose();
  logits.array().rowwise() += params.mlm_bias.row(0).array();

  double loss = 0.0;
  Mat dlogits(n, V);
  for (int i = 0; i < n; ++i) {
    const int target = sel.targets[i];
    if (target < 0 || target >= V)
      throw DataError("mlm_loss: target id out of range");
    const double maxv = logits.row(i).maxCoeff();
    const double lse =
        maxv + std::log((logits.row(i).array() - maxv).exp().sum());
    loss += lse - logits(i, target);
    dlogits.row(i) = (logits.row(i).array() - lse).exp();
    dlogits(i, target) -= 1.0;
  }
  loss /= n;
  dlogits /= static_cast<double>(n);

  if (d_output) {
    Mat dzs = dlogits * params.tok_embedding;
    for (int i = 0; i < n; ++i) d_output->row(sel.rows[i]) += dzs.row(i);
  }
  if (grads) {
    grads->tok_embedding.noalias() += dlogits.transpose() * zs;
    grads->mlm_bias.row(0) += dlogits.colwise().sum();
  }
  return loss;
}

}  // namespace medlabel
