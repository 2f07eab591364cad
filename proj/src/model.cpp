#include "rewriter/model.hpp"

#include <cmath>
#include <limits>

namespace rewriter {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct LnIdx {
  int g = -1, b = -1;
};
struct AttnIdx {
  int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1, wo = -1, bo = -1;
};
struct FfnIdx {
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};
struct EncLayerIdx {
  LnIdx ln1;
  AttnIdx attn;
  LnIdx ln2;
  FfnIdx ffn;
};
struct DecLayerIdx {
  LnIdx ln1;
  AttnIdx self_attn;
  LnIdx ln2;
  AttnIdx cross;
  LnIdx ln3;
  FfnIdx ffn;
};

}  // namespace

struct RewriterModel::Indices {
  int emb_token = -1, emb_pos = -1, emb_tag = -1;
  std::vector<EncLayerIdx> enc;
  std::vector<DecLayerIdx> dec;
  LnIdx enc_final, dec_final;
};

struct RewriterModel::CrossCache {
  // Per decoder layer: projected encoder keys and values (bias included).
  std::vector<Eigen::MatrixXd> k;
  std::vector<Eigen::MatrixXd> v;
};

void ModelConfig::validate() const {
  if (d_model <= 0 || heads <= 0 || d_model % heads != 0) {
    throw DataError("model config: d_model must be a positive multiple of heads");
  }
  if (enc_layers < 1 || dec_layers < 1 || ffn_dim < 1) {
    throw DataError("model config: layer sizes must be positive");
  }
  if (max_positions < 1 || max_tags < 1) {
    throw DataError("model config: max_positions and max_tags must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw DataError("model config: dropout must be in [0, 1)");
  }
  if (gamma <= 0.0) throw DataError("model config: gamma must be positive");
  if (vocab_size < 5) throw DataError("model config: vocab_size not set");
}

// ---------------------------------------------------------------------------
// Forward/backward kernels. Activations are row-per-position matrices.
// ---------------------------------------------------------------------------

namespace {

struct LnCtx {
  Eigen::MatrixXd xhat;      // normalized input
  Eigen::VectorXd istd;      // per-row inverse std
  Eigen::MatrixXd out;
};

struct AttnCtx {
  LnCtx ln;                  // applied to the query-side stream
  Eigen::MatrixXd q, k, v;   // projected, bias added
  std::vector<Eigen::MatrixXd> probs;  // softmax weights per head
  Eigen::MatrixXd concat;    // heads concatenated, before the output proj
  Eigen::MatrixXd out;       // after output projection (+ dropout)
  Eigen::ArrayXXd drop;      // empty when dropout is off
};

struct FfnCtx {
  LnCtx ln;
  Eigen::MatrixXd pre;       // before the nonlinearity
  Eigen::MatrixXd act;
  Eigen::MatrixXd out;
  Eigen::ArrayXXd drop;
};

struct EncLayerCtx {
  Eigen::MatrixXd h_in;
  AttnCtx attn;
  Eigen::MatrixXd h_mid;
  FfnCtx ffn;
};

struct DecLayerCtx {
  Eigen::MatrixXd h_in;
  AttnCtx self_attn;
  Eigen::MatrixXd h_mid1;
  AttnCtx cross;
  Eigen::MatrixXd h_mid2;
  FfnCtx ffn;
};

struct EncCtx {
  Eigen::MatrixXd input;     // embedding sum (+ dropout)
  Eigen::ArrayXXd input_drop;
  std::vector<EncLayerCtx> layers;
  LnCtx final_ln;
  Eigen::MatrixXd states;    // final_ln.out + tag embeddings
};

struct DecCtx {
  std::vector<int> in_tokens, in_tags;
  Eigen::MatrixXd input;
  Eigen::ArrayXXd input_drop;
  std::vector<DecLayerCtx> layers;
  LnCtx final_ln;
  Eigen::MatrixXd logp;      // per-position log-probabilities
};

}  // namespace

struct ModelOps {
  using Blocks = std::vector<ParamBlock>;

  static Eigen::ArrayXXd draw_dropout(long rows, long cols, double p,
                                      std::mt19937_64* rng) {
    Eigen::ArrayXXd mask(rows, cols);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double keep = 1.0 - p;
    for (long i = 0; i < rows; ++i) {
      for (long j = 0; j < cols; ++j) {
        mask(i, j) = unif(*rng) < keep ? 1.0 / keep : 0.0;
      }
    }
    return mask;
  }

  static void maybe_dropout(Eigen::MatrixXd& x, Eigen::ArrayXXd& mask,
                            double p, std::mt19937_64* rng) {
    if (rng == nullptr || p <= 0.0) return;
    mask = draw_dropout(x.rows(), x.cols(), p, rng);
    x.array() *= mask;
  }

  static Eigen::MatrixXd layer_norm(const Blocks& blocks, const LnIdx& idx,
                                    const Eigen::MatrixXd& x, LnCtx& ctx) {
    const auto& g = blocks[idx.g].value;
    const auto& b = blocks[idx.b].value;
    long rows = x.rows(), cols = x.cols();
    ctx.xhat.resize(rows, cols);
    ctx.istd.resize(rows);
    for (long i = 0; i < rows; ++i) {
      double mu = x.row(i).mean();
      double var = (x.row(i).array() - mu).square().mean();
      double istd = 1.0 / std::sqrt(var + kLnEps);
      ctx.istd(i) = istd;
      ctx.xhat.row(i) = ((x.row(i).array() - mu) * istd).matrix();
    }
    ctx.out = ((ctx.xhat.array().rowwise() * g.row(0).array()).rowwise() +
               b.row(0).array())
                  .matrix();
    return ctx.out;
  }

  static Eigen::MatrixXd layer_norm_backward(Blocks& blocks, const LnIdx& idx,
                                             const LnCtx& ctx,
                                             const Eigen::MatrixXd& dout) {
    const auto& g = blocks[idx.g].value;
    blocks[idx.g].grad.row(0) +=
        (dout.array() * ctx.xhat.array()).colwise().sum().matrix();
    blocks[idx.b].grad.row(0) += dout.colwise().sum();
    Eigen::ArrayXXd dxhat = dout.array().rowwise() * g.row(0).array();
    Eigen::ArrayXd m1 = dxhat.rowwise().mean();
    Eigen::ArrayXd m2 = (dxhat * ctx.xhat.array()).rowwise().mean();
    Eigen::ArrayXXd dx =
        (dxhat.colwise() - m1) - (ctx.xhat.array().colwise() * m2);
    dx.colwise() *= ctx.istd.array();
    return dx.matrix();
  }

  // Scaled dot-product attention with heads split along columns. When
  // `causal` is set, position r attends to keys 0..r only.
  static Eigen::MatrixXd attention(const Blocks& blocks, const AttnIdx& idx,
                                   const Eigen::MatrixXd& q_in,
                                   const Eigen::MatrixXd& kv_in, bool causal,
                                   int heads, AttnCtx& ctx, double dropout,
                                   std::mt19937_64* rng) {
    long d = q_in.cols();
    long dk = d / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    ctx.q = (q_in * blocks[idx.wq].value).rowwise() + blocks[idx.bq].value.row(0);
    ctx.k = (kv_in * blocks[idx.wk].value).rowwise() + blocks[idx.bk].value.row(0);
    ctx.v = (kv_in * blocks[idx.wv].value).rowwise() + blocks[idx.bv].value.row(0);
    long lq = q_in.rows(), lk = kv_in.rows();
    ctx.concat.resize(lq, d);
    ctx.probs.assign(heads, Eigen::MatrixXd());
    for (int h = 0; h < heads; ++h) {
      auto qh = ctx.q.middleCols(h * dk, dk);
      auto kh = ctx.k.middleCols(h * dk, dk);
      auto vh = ctx.v.middleCols(h * dk, dk);
      Eigen::MatrixXd scores = scale * (qh * kh.transpose());
      if (causal) {
        for (long r = 0; r < lq; ++r) {
          for (long c = r + 1; c < lk; ++c) scores(r, c) = kNegInf;
        }
      }
      Eigen::MatrixXd& probs = ctx.probs[h];
      probs.resize(lq, lk);
      for (long r = 0; r < lq; ++r) {
        double mx = scores.row(r).maxCoeff();
        Eigen::ArrayXd e = (scores.row(r).array() - mx).exp();
        probs.row(r) = (e / e.sum()).matrix().transpose();
      }
      ctx.concat.middleCols(h * dk, dk).noalias() = probs * vh;
    }
    ctx.out = (ctx.concat * blocks[idx.wo].value).rowwise() +
              blocks[idx.bo].value.row(0);
    maybe_dropout(ctx.out, ctx.drop, dropout, rng);
    return ctx.out;
  }

  // Returns the gradient w.r.t. q_in; adds the kv-side gradient into dkv.
  static Eigen::MatrixXd attention_backward(Blocks& blocks, const AttnIdx& idx,
                                            const Eigen::MatrixXd& q_in,
                                            const Eigen::MatrixXd& kv_in,
                                            int heads, const AttnCtx& ctx,
                                            Eigen::MatrixXd dout,
                                            Eigen::MatrixXd* dkv) {
    long d = q_in.cols();
    long dk = d / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    if (ctx.drop.size() > 0) dout.array() *= ctx.drop;

    blocks[idx.wo].grad.noalias() += ctx.concat.transpose() * dout;
    blocks[idx.bo].grad.row(0) += dout.colwise().sum();
    Eigen::MatrixXd dconcat = dout * blocks[idx.wo].value.transpose();

    Eigen::MatrixXd dq(ctx.q.rows(), d), dkm(ctx.k.rows(), d),
        dvm(ctx.v.rows(), d);
    for (int h = 0; h < heads; ++h) {
      auto qh = ctx.q.middleCols(h * dk, dk);
      auto kh = ctx.k.middleCols(h * dk, dk);
      auto vh = ctx.v.middleCols(h * dk, dk);
      const Eigen::MatrixXd& probs = ctx.probs[h];
      Eigen::MatrixXd dctx = dconcat.middleCols(h * dk, dk);
      Eigen::MatrixXd dprobs = dctx * vh.transpose();
      dvm.middleCols(h * dk, dk).noalias() = probs.transpose() * dctx;
      // softmax backward, row-wise
      Eigen::VectorXd rowdot =
          (dprobs.array() * probs.array()).rowwise().sum().matrix();
      Eigen::MatrixXd dscores =
          (probs.array() * (dprobs.array().colwise() - rowdot.array()))
              .matrix();
      dscores *= scale;
      dq.middleCols(h * dk, dk).noalias() = dscores * kh;
      dkm.middleCols(h * dk, dk).noalias() = dscores.transpose() * qh;
    }
    blocks[idx.wq].grad.noalias() += q_in.transpose() * dq;
    blocks[idx.bq].grad.row(0) += dq.colwise().sum();
    blocks[idx.wk].grad.noalias() += kv_in.transpose() * dkm;
    blocks[idx.bk].grad.row(0) += dkm.colwise().sum();
    blocks[idx.wv].grad.noalias() += kv_in.transpose() * dvm;
    blocks[idx.bv].grad.row(0) += dvm.colwise().sum();

    Eigen::MatrixXd dq_in = dq * blocks[idx.wq].value.transpose();
    if (dkv != nullptr) {
      dkv->noalias() += dkm * blocks[idx.wk].value.transpose();
      dkv->noalias() += dvm * blocks[idx.wv].value.transpose();
    } else {
      dq_in.noalias() += dkm * blocks[idx.wk].value.transpose();
      dq_in.noalias() += dvm * blocks[idx.wv].value.transpose();
    }
    return dq_in;
  }

  static Eigen::MatrixXd ffn(const Blocks& blocks, const FfnIdx& idx,
                             const Eigen::MatrixXd& x, FfnCtx& ctx,
                             double dropout, std::mt19937_64* rng) {
    ctx.pre = (x * blocks[idx.w1].value).rowwise() + blocks[idx.b1].value.row(0);
    ctx.act = ctx.pre.cwiseMax(0.0);
    ctx.out = (ctx.act * blocks[idx.w2].value).rowwise() +
              blocks[idx.b2].value.row(0);
    maybe_dropout(ctx.out, ctx.drop, dropout, rng);
    return ctx.out;
  }

  static Eigen::MatrixXd ffn_backward(Blocks& blocks, const FfnIdx& idx,
                                      const Eigen::MatrixXd& x,
                                      const FfnCtx& ctx,
                                      Eigen::MatrixXd dout) {
    if (ctx.drop.size() > 0) dout.array() *= ctx.drop;
    blocks[idx.w2].grad.noalias() += ctx.act.transpose() * dout;
    blocks[idx.b2].grad.row(0) += dout.colwise().sum();
    Eigen::MatrixXd dact = dout * blocks[idx.w2].value.transpose();
    Eigen::MatrixXd dpre =
        ((ctx.pre.array() > 0.0).cast<double>() * dact.array()).matrix();
    blocks[idx.w1].grad.noalias() += x.transpose() * dpre;
    blocks[idx.b1].grad.row(0) += dpre.colwise().sum();
    return dpre * blocks[idx.w1].value.transpose();
  }

  // ---- encoder ----

  static void check_sequence(const RewriterModel& m, const TaggedSequence& s,
                             const char* side) {
    const auto& cfg = m.config_;
    if (s.tokens.size() != s.tags.size()) {
      throw DataError(std::string(side) + ": tokens and tags differ in length");
    }
    if (static_cast<int>(s.tokens.size()) > cfg.max_positions) {
      throw DataError(std::string(side) + " length " +
                      std::to_string(s.tokens.size()) +
                      " exceeds max_positions " +
                      std::to_string(cfg.max_positions));
    }
    for (int t : s.tags) {
      if (t < 0 || t > cfg.max_tags) {
        throw DataError(std::string(side) + ": group tag " + std::to_string(t) +
                        " exceeds max_tags " + std::to_string(cfg.max_tags));
      }
    }
    for (int t : s.tokens) {
      if (t < 0 || t >= cfg.vocab_size) {
        throw DataError(std::string(side) + ": token id " + std::to_string(t) +
                        " out of vocabulary");
      }
    }
  }

  static void encode_forward(const RewriterModel& m, const TaggedSequence& x,
                             EncCtx& ctx, double dropout,
                             std::mt19937_64* rng) {
    check_sequence(m, x, "encoder input");
    if (x.tokens.empty()) throw DataError("encoder input is empty");
    const auto& blocks = m.blocks_;
    const auto& idx = *m.idx_;
    long n = static_cast<long>(x.tokens.size());
    long d = m.config_.d_model;

    ctx.input.resize(n, d);
    const auto& emb_token = blocks[idx.emb_token].value;
    const auto& emb_pos = blocks[idx.emb_pos].value;
    for (long i = 0; i < n; ++i) {
      ctx.input.row(i) = emb_token.row(x.tokens[i]) + emb_pos.row(i);
    }
    maybe_dropout(ctx.input, ctx.input_drop, dropout, rng);

    ctx.layers.resize(idx.enc.size());
    Eigen::MatrixXd h = ctx.input;
    for (size_t l = 0; l < idx.enc.size(); ++l) {
      auto& lc = ctx.layers[l];
      const auto& li = idx.enc[l];
      lc.h_in = h;
      layer_norm(blocks, li.ln1, h, lc.attn.ln);
      h += attention(blocks, li.attn, lc.attn.ln.out, lc.attn.ln.out,
                     /*causal=*/false, m.config_.heads, lc.attn, dropout, rng);
      lc.h_mid = h;
      layer_norm(blocks, li.ln2, h, lc.ffn.ln);
      h += ffn(blocks, li.ffn, lc.ffn.ln.out, lc.ffn, dropout, rng);
    }
    layer_norm(blocks, idx.enc_final, h, ctx.final_ln);

    // Group-tag embeddings enter after the stack.
    ctx.states = ctx.final_ln.out;
    const auto& emb_tag = blocks[idx.emb_tag].value;
    for (long i = 0; i < n; ++i) {
      ctx.states.row(i) += emb_tag.row(x.tags[i]);
    }
  }

  // Backward from d(states); consumes layer contexts.
  static void encode_backward(RewriterModel& m, const TaggedSequence& x,
                              const EncCtx& ctx,
                              const Eigen::MatrixXd& dstates) {
    auto& blocks = m.blocks_;
    const auto& idx = *m.idx_;
    long n = static_cast<long>(x.tokens.size());

    auto& demb_tag = blocks[idx.emb_tag].grad;
    for (long i = 0; i < n; ++i) {
      demb_tag.row(x.tags[i]) += dstates.row(i);
    }
    Eigen::MatrixXd dh =
        layer_norm_backward(blocks, idx.enc_final, ctx.final_ln, dstates);

    for (size_t l = idx.enc.size(); l-- > 0;) {
      const auto& lc = ctx.layers[l];
      const auto& li = idx.enc[l];
      Eigen::MatrixXd dffn =
          ffn_backward(blocks, li.ffn, lc.ffn.ln.out, lc.ffn, dh);
      dh += layer_norm_backward(blocks, li.ln2, lc.ffn.ln, dffn);
      Eigen::MatrixXd dattn =
          attention_backward(blocks, li.attn, lc.attn.ln.out, lc.attn.ln.out,
                             m.config_.heads, lc.attn, dh, nullptr);
      dh += layer_norm_backward(blocks, li.ln1, lc.attn.ln, dattn);
    }
    if (ctx.input_drop.size() > 0) dh.array() *= ctx.input_drop;

    auto& demb_token = blocks[idx.emb_token].grad;
    auto& demb_pos = blocks[idx.emb_pos].grad;
    for (long i = 0; i < n; ++i) {
      demb_token.row(x.tokens[i]) += dh.row(i);
      demb_pos.row(i) += dh.row(i);
    }
  }

  // ---- decoder (teacher forced) ----

  static void decoder_forward(const RewriterModel& m,
                              const Eigen::MatrixXd& enc_states,
                              const std::vector<int>& in_tokens,
                              const std::vector<int>& in_tags, DecCtx& ctx,
                              double dropout, std::mt19937_64* rng) {
    const auto& blocks = m.blocks_;
    const auto& idx = *m.idx_;
    long n = static_cast<long>(in_tokens.size());
    long d = m.config_.d_model;
    if (n > m.config_.max_positions) {
      throw DataError("decoder input exceeds max_positions");
    }

    ctx.in_tokens = in_tokens;
    ctx.in_tags = in_tags;
    ctx.input.resize(n, d);
    const auto& emb_token = blocks[idx.emb_token].value;
    const auto& emb_pos = blocks[idx.emb_pos].value;
    const auto& emb_tag = blocks[idx.emb_tag].value;
    for (long i = 0; i < n; ++i) {
      ctx.input.row(i) = emb_token.row(in_tokens[i]) + emb_pos.row(i) +
                         emb_tag.row(in_tags[i]);
    }
    maybe_dropout(ctx.input, ctx.input_drop, dropout, rng);

    ctx.layers.resize(idx.dec.size());
    Eigen::MatrixXd h = ctx.input;
    for (size_t l = 0; l < idx.dec.size(); ++l) {
      auto& lc = ctx.layers[l];
      const auto& li = idx.dec[l];
      lc.h_in = h;
      layer_norm(blocks, li.ln1, h, lc.self_attn.ln);
      h += attention(blocks, li.self_attn, lc.self_attn.ln.out,
                     lc.self_attn.ln.out, /*causal=*/true, m.config_.heads,
                     lc.self_attn, dropout, rng);
      lc.h_mid1 = h;
      layer_norm(blocks, li.ln2, h, lc.cross.ln);
      h += attention(blocks, li.cross, lc.cross.ln.out, enc_states,
                     /*causal=*/false, m.config_.heads, lc.cross, dropout,
                     rng);
      lc.h_mid2 = h;
      layer_norm(blocks, li.ln3, h, lc.ffn.ln);
      h += ffn(blocks, li.ffn, lc.ffn.ln.out, lc.ffn, dropout, rng);
    }
    layer_norm(blocks, idx.dec_final, h, ctx.final_ln);

    // Tied output projection, then a stable log-softmax per row.
    Eigen::MatrixXd logits = ctx.final_ln.out * emb_token.transpose();
    ctx.logp.resize(logits.rows(), logits.cols());
    for (long r = 0; r < logits.rows(); ++r) {
      double mx = logits.row(r).maxCoeff();
      double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
      ctx.logp.row(r) = (logits.row(r).array() - lse).matrix();
    }
  }

  // Backward from d(logits). Returns gradient into enc_states.
  static Eigen::MatrixXd decoder_backward(RewriterModel& m,
                                          const Eigen::MatrixXd& enc_states,
                                          const DecCtx& ctx,
                                          const Eigen::MatrixXd& dlogits) {
    auto& blocks = m.blocks_;
    const auto& idx = *m.idx_;
    long n = ctx.input.rows();

    blocks[idx.emb_token].grad.noalias() +=
        dlogits.transpose() * ctx.final_ln.out;
    Eigen::MatrixXd dfinal = dlogits * blocks[idx.emb_token].value;
    Eigen::MatrixXd dh =
        layer_norm_backward(blocks, idx.dec_final, ctx.final_ln, dfinal);

    Eigen::MatrixXd denc = Eigen::MatrixXd::Zero(enc_states.rows(),
                                                 enc_states.cols());
    for (size_t l = idx.dec.size(); l-- > 0;) {
      const auto& lc = ctx.layers[l];
      const auto& li = idx.dec[l];
      Eigen::MatrixXd dffn =
          ffn_backward(blocks, li.ffn, lc.ffn.ln.out, lc.ffn, dh);
      dh += layer_norm_backward(blocks, li.ln3, lc.ffn.ln, dffn);
      Eigen::MatrixXd dcross =
          attention_backward(blocks, li.cross, lc.cross.ln.out, enc_states,
                             m.config_.heads, lc.cross, dh, &denc);
      dh += layer_norm_backward(blocks, li.ln2, lc.cross.ln, dcross);
      Eigen::MatrixXd dself = attention_backward(
          blocks, li.self_attn, lc.self_attn.ln.out, lc.self_attn.ln.out,
          m.config_.heads, lc.self_attn, dh, nullptr);
      dh += layer_norm_backward(blocks, li.ln1, lc.self_attn.ln, dself);
    }
    if (ctx.input_drop.size() > 0) dh.array() *= ctx.input_drop;

    auto& demb_token = blocks[idx.emb_token].grad;
    auto& demb_pos = blocks[idx.emb_pos].grad;
    auto& demb_tag = blocks[idx.emb_tag].grad;
    for (long i = 0; i < n; ++i) {
      demb_token.row(ctx.in_tokens[i]) += dh.row(i);
      demb_pos.row(i) += dh.row(i);
      demb_tag.row(ctx.in_tags[i]) += dh.row(i);
    }
    return denc;
  }

  // Decoder input = start token followed by the target shifted right.
  static void shifted_input(const TaggedSequence& y, std::vector<int>& tokens,
                            std::vector<int>& tags) {
    size_t n = y.tokens.size();
    tokens.resize(n);
    tags.resize(n);
    tokens[0] = Vocab::kEosumId;
    tags[0] = 0;
    for (size_t i = 1; i < n; ++i) {
      tokens[i] = y.tokens[i - 1];
      tags[i] = y.tags[i - 1];
    }
  }

  static LossStats loss_from_logp(const RewriterModel& m,
                                  const Eigen::MatrixXd& logp,
                                  const TaggedSequence& y,
                                  Eigen::MatrixXd* dlogits) {
    int first_identifier = 4;
    int last_identifier = 4 + m.config_.max_tags;
    LossStats stats;
    stats.n_tokens = static_cast<int>(y.tokens.size());
    if (dlogits != nullptr) {
      dlogits->setZero(logp.rows(), logp.cols());
    }
    for (long k = 0; k < logp.rows(); ++k) {
      int target = y.tokens[static_cast<size_t>(k)];
      bool is_identifier = target >= first_identifier && target <= last_identifier;
      double w = is_identifier ? m.config_.gamma : 1.0;
      stats.weighted_sum -= w * logp(k, target);
      if (dlogits != nullptr) {
        dlogits->row(k) = (w * logp.row(k).array().exp()).matrix();
        (*dlogits)(k, target) -= w;
      }
    }
    stats.mean_per_token = stats.weighted_sum / stats.n_tokens;
    return stats;
  }
};

// ---------------------------------------------------------------------------
// RewriterModel
// ---------------------------------------------------------------------------

RewriterModel::RewriterModel(ModelConfig config)
    : config_(config), idx_(std::make_unique<Indices>()) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  std::normal_distribution<double> normal(0.0, 0.02);

  enum class Init { kZeros, kOnes, kNormal };
  auto add = [&](const std::string& name, long rows, long cols,
                 bool encoder_group, Init init) {
    ParamBlock b;
    b.name = name;
    b.encoder_group = encoder_group;
    b.value.resize(rows, cols);
    switch (init) {
      case Init::kZeros:
        b.value.setZero();
        break;
      case Init::kOnes:
        b.value.setOnes();
        break;
      case Init::kNormal:
        for (long i = 0; i < rows; ++i) {
          for (long j = 0; j < cols; ++j) b.value(i, j) = normal(rng);
        }
        break;
    }
    b.grad = Eigen::MatrixXd::Zero(rows, cols);
    blocks_.push_back(std::move(b));
    return static_cast<int>(blocks_.size() - 1);
  };
  const Init kW = Init::kNormal;
  long d = config_.d_model;
  long f = config_.ffn_dim;

  auto add_ln = [&](const std::string& p, bool grp) {
    LnIdx idx;
    idx.g = add(p + ".gain", 1, d, grp, Init::kOnes);
    idx.b = add(p + ".bias", 1, d, grp, Init::kZeros);
    return idx;
  };
  auto add_attn = [&](const std::string& p, bool grp) {
    AttnIdx idx;
    idx.wq = add(p + ".wq", d, d, grp, kW);
    idx.bq = add(p + ".bq", 1, d, grp, Init::kZeros);
    idx.wk = add(p + ".wk", d, d, grp, kW);
    idx.bk = add(p + ".bk", 1, d, grp, Init::kZeros);
    idx.wv = add(p + ".wv", d, d, grp, kW);
    idx.bv = add(p + ".bv", 1, d, grp, Init::kZeros);
    idx.wo = add(p + ".wo", d, d, grp, kW);
    idx.bo = add(p + ".bo", 1, d, grp, Init::kZeros);
    return idx;
  };
  auto add_ffn = [&](const std::string& p, bool grp) {
    FfnIdx idx;
    idx.w1 = add(p + ".w1", d, f, grp, kW);
    idx.b1 = add(p + ".b1", 1, f, grp, Init::kZeros);
    idx.w2 = add(p + ".w2", f, d, grp, kW);
    idx.b2 = add(p + ".b2", 1, d, grp, Init::kZeros);
    return idx;
  };

  idx_->emb_token = add("emb_token", config_.vocab_size, d, false, kW);
  idx_->emb_pos = add("emb_pos", config_.max_positions, d, false, kW);
  idx_->emb_tag = add("emb_tag", config_.max_tags + 1, d, false, kW);

  for (int l = 0; l < config_.enc_layers; ++l) {
    std::string p = "enc" + std::to_string(l);
    EncLayerIdx li;
    li.ln1 = add_ln(p + ".ln1", true);
    li.attn = add_attn(p + ".attn", true);
    li.ln2 = add_ln(p + ".ln2", true);
    li.ffn = add_ffn(p + ".ffn", true);
    idx_->enc.push_back(li);
  }
  idx_->enc_final = add_ln("enc_final", true);

  for (int l = 0; l < config_.dec_layers; ++l) {
    std::string p = "dec" + std::to_string(l);
    DecLayerIdx li;
    li.ln1 = add_ln(p + ".ln1", false);
    li.self_attn = add_attn(p + ".self", false);
    li.ln2 = add_ln(p + ".ln2", false);
    li.cross = add_attn(p + ".cross", false);
    li.ln3 = add_ln(p + ".ln3", false);
    li.ffn = add_ffn(p + ".ffn", false);
    idx_->dec.push_back(li);
  }
  idx_->dec_final = add_ln("dec_final", false);
}

RewriterModel::RewriterModel(const RewriterModel& other)
    : config_(other.config_),
      blocks_(other.blocks_),
      idx_(std::make_unique<Indices>(*other.idx_)) {}

RewriterModel& RewriterModel::operator=(const RewriterModel& other) {
  if (this != &other) {
    config_ = other.config_;
    blocks_ = other.blocks_;
    idx_ = std::make_unique<Indices>(*other.idx_);
  }
  return *this;
}

RewriterModel::RewriterModel(RewriterModel&&) noexcept = default;
RewriterModel& RewriterModel::operator=(RewriterModel&&) noexcept = default;
RewriterModel::~RewriterModel() = default;

Eigen::MatrixXd RewriterModel::encode(const TaggedSequence& x) const {
  EncCtx ctx;
  ModelOps::encode_forward(*this, x, ctx, 0.0, nullptr);
  return std::move(ctx.states);
}

Eigen::VectorXd RewriterModel::decode_step(
    const Eigen::MatrixXd& encoder_states, const TaggedSequence& prefix,
    const Vocab& vocab) const {
  if (prefix.tags != group_tag(prefix.tokens, vocab)) {
    throw DataError("decode_step: prefix tags are not group_tag(tokens)");
  }
  std::vector<int> in_tokens(prefix.tokens.size() + 1);
  std::vector<int> in_tags(prefix.tags.size() + 1);
  in_tokens[0] = Vocab::kEosumId;
  in_tags[0] = 0;
  for (size_t i = 0; i < prefix.tokens.size(); ++i) {
    in_tokens[i + 1] = prefix.tokens[i];
    in_tags[i + 1] = prefix.tags[i];
  }
  DecCtx ctx;
  ModelOps::decoder_forward(*this, encoder_states, in_tokens, in_tags, ctx,
                            0.0, nullptr);
  return ctx.logp.row(ctx.logp.rows() - 1);
}

Eigen::MatrixXd RewriterModel::forward_logprobs(const TaggedSequence& x,
                                                const TaggedSequence& y) const {
  if (y.tokens.empty()) throw DataError("empty target sequence");
  EncCtx enc_ctx;
  ModelOps::encode_forward(*this, x, enc_ctx, 0.0, nullptr);
  std::vector<int> in_tokens, in_tags;
  ModelOps::shifted_input(y, in_tokens, in_tags);
  DecCtx dec_ctx;
  ModelOps::decoder_forward(*this, enc_ctx.states, in_tokens, in_tags, dec_ctx,
                            0.0, nullptr);
  return std::move(dec_ctx.logp);
}

LossStats RewriterModel::loss(const TaggedSequence& x,
                              const TaggedSequence& y) const {
  Eigen::MatrixXd logp = forward_logprobs(x, y);
  return ModelOps::loss_from_logp(*this, logp, y, nullptr);
}

LossStats RewriterModel::loss_and_backward(const TaggedSequence& x,
                                           const TaggedSequence& y,
                                           std::mt19937_64* rng) {
  if (y.tokens.empty()) throw DataError("empty target sequence");
  double dropout = rng != nullptr ? config_.dropout : 0.0;
  EncCtx enc_ctx;
  ModelOps::encode_forward(*this, x, enc_ctx, dropout, rng);
  std::vector<int> in_tokens, in_tags;
  ModelOps::shifted_input(y, in_tokens, in_tags);
  DecCtx dec_ctx;
  ModelOps::decoder_forward(*this, enc_ctx.states, in_tokens, in_tags, dec_ctx,
                            dropout, rng);
  Eigen::MatrixXd dlogits;
  LossStats stats = ModelOps::loss_from_logp(*this, dec_ctx.logp, y, &dlogits);
  Eigen::MatrixXd denc =
      ModelOps::decoder_backward(*this, enc_ctx.states, dec_ctx, dlogits);
  ModelOps::encode_backward(*this, x, enc_ctx, denc);
  return stats;
}

void RewriterModel::zero_grad() {
  for (auto& b : blocks_) b.zero_grad();
}

ParamBlock& RewriterModel::block(const std::string& name) {
  for (auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw DataError("no parameter block named " + name);
}

long RewriterModel::parameter_count() const {
  long total = 0;
  for (const auto& b : blocks_) total += b.value.size();
  return total;
}

// ---------------------------------------------------------------------------
// Incremental decoding
// ---------------------------------------------------------------------------

RewriterModel::DecoderState RewriterModel::begin_decode(
    const Eigen::MatrixXd& encoder_states) const {
  auto cross = std::make_shared<CrossCache>();
  cross->k.reserve(idx_->dec.size());
  cross->v.reserve(idx_->dec.size());
  for (const auto& li : idx_->dec) {
    cross->k.push_back(
        (encoder_states * blocks_[li.cross.wk].value).rowwise() +
        blocks_[li.cross.bk].value.row(0));
    cross->v.push_back(
        (encoder_states * blocks_[li.cross.wv].value).rowwise() +
        blocks_[li.cross.bv].value.row(0));
  }
  DecoderState state;
  state.cross_ = std::move(cross);
  state.self_k_.assign(idx_->dec.size(),
                       Eigen::MatrixXd(0, config_.d_model));
  state.self_v_.assign(idx_->dec.size(),
                       Eigen::MatrixXd(0, config_.d_model));
  advance(state, Vocab::kEosumId, 0);
  state.length_ = 0;  // the start token does not count
  return state;
}

namespace {

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& scores) {
  double mx = scores.maxCoeff();
  Eigen::ArrayXd e = (scores.transpose().array() - mx).exp();
  return (e / e.sum()).matrix().transpose();
}

}  // namespace

void RewriterModel::advance(DecoderState& state, int token, int tag) const {
  const auto& idx = *idx_;
  long d = config_.d_model;
  int heads = config_.heads;
  long dk = d / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  long pos = state.length_ + 1;  // +1 for the start token
  if (pos >= config_.max_positions) {
    throw DataError("decoder ran past max_positions");
  }
  if (token < 0 || token >= config_.vocab_size) {
    throw DataError("decoder token out of vocabulary");
  }
  if (tag < 0 || tag > config_.max_tags) {
    throw DataError("decoder tag exceeds max_tags");
  }
  // At the very first call (from begin_decode) the start token sits at
  // position 0.
  if (state.self_k_[0].rows() == 0) pos = 0;

  Eigen::RowVectorXd h = blocks_[idx.emb_token].value.row(token) +
                         blocks_[idx.emb_pos].value.row(pos) +
                         blocks_[idx.emb_tag].value.row(tag);

  auto layer_norm_row = [&](const LnIdx& li,
                            const Eigen::RowVectorXd& x) -> Eigen::RowVectorXd {
    double mu = x.mean();
    double var = (x.array() - mu).square().mean();
    double istd = 1.0 / std::sqrt(var + kLnEps);
    Eigen::ArrayXd xhat = (x.transpose().array() - mu) * istd;
    return ((xhat * blocks_[li.g].value.row(0).transpose().array()) +
            blocks_[li.b].value.row(0).transpose().array())
        .matrix()
        .transpose();
  };

  const CrossCache& cross = *state.cross_;
  for (size_t l = 0; l < idx.dec.size(); ++l) {
    const auto& li = idx.dec[l];
    // self attention over the cached prefix plus this step
    Eigen::RowVectorXd q_in = layer_norm_row(li.ln1, h);
    Eigen::RowVectorXd q =
        q_in * blocks_[li.self_attn.wq].value + blocks_[li.self_attn.bq].value.row(0);
    Eigen::RowVectorXd k =
        q_in * blocks_[li.self_attn.wk].value + blocks_[li.self_attn.bk].value.row(0);
    Eigen::RowVectorXd v =
        q_in * blocks_[li.self_attn.wv].value + blocks_[li.self_attn.bv].value.row(0);
    auto& ks = state.self_k_[l];
    auto& vs = state.self_v_[l];
    ks.conservativeResize(ks.rows() + 1, Eigen::NoChange);
    vs.conservativeResize(vs.rows() + 1, Eigen::NoChange);
    ks.row(ks.rows() - 1) = k;
    vs.row(vs.rows() - 1) = v;

    Eigen::RowVectorXd concat(d);
    for (int hd = 0; hd < heads; ++hd) {
      Eigen::RowVectorXd scores =
          scale * (q.middleCols(hd * dk, dk) *
                   ks.middleCols(hd * dk, dk).transpose());
      concat.middleCols(hd * dk, dk) =
          softmax_row(scores) * vs.middleCols(hd * dk, dk);
    }
    h += concat * blocks_[li.self_attn.wo].value +
         blocks_[li.self_attn.bo].value.row(0);

    // cross attention against the cached encoder projections
    Eigen::RowVectorXd cq_in = layer_norm_row(li.ln2, h);
    Eigen::RowVectorXd cq =
        cq_in * blocks_[li.cross.wq].value + blocks_[li.cross.bq].value.row(0);
    Eigen::RowVectorXd ccat(d);
    for (int hd = 0; hd < heads; ++hd) {
      Eigen::RowVectorXd scores =
          scale * (cq.middleCols(hd * dk, dk) *
                   cross.k[l].middleCols(hd * dk, dk).transpose());
      ccat.middleCols(hd * dk, dk) =
          softmax_row(scores) * cross.v[l].middleCols(hd * dk, dk);
    }
    h += ccat * blocks_[li.cross.wo].value + blocks_[li.cross.bo].value.row(0);

    Eigen::RowVectorXd f_in = layer_norm_row(li.ln3, h);
    Eigen::RowVectorXd pre =
        f_in * blocks_[li.ffn.w1].value + blocks_[li.ffn.b1].value.row(0);
    h += pre.cwiseMax(0.0) * blocks_[li.ffn.w2].value +
         blocks_[li.ffn.b2].value.row(0);
  }

  Eigen::RowVectorXd final_out = layer_norm_row(idx.dec_final, h);
  Eigen::RowVectorXd logits =
      final_out * blocks_[idx.emb_token].value.transpose();
  double mx = logits.maxCoeff();
  double lse = mx + std::log((logits.array() - mx).exp().sum());
  state.log_probs_ = (logits.array() - lse).matrix().transpose();
  state.length_ += 1;
}

}  // namespace rewriter
