#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rewriter/align.hpp"
#include "rewriter/textcore.hpp"

namespace rewriter {

struct ModelConfig {
  int d_model = 128;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int ffn_dim = 256;
  int max_positions = 512;
  int max_tags = 64;  // group tags 0 .. max_tags
  double dropout = 0.1;
  double gamma = 1.0;  // loss weight on identifier targets
  std::uint64_t seed = 1;
  int vocab_size = 0;

  void validate() const;
};

// Named parameter tensor with its gradient accumulator and optimizer state.
struct ParamBlock {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd adam_m;
  Eigen::MatrixXd adam_v;
  bool encoder_group = false;

  void zero_grad() { grad.setZero(); }
};

struct LossStats {
  double weighted_sum = 0.0;
  double mean_per_token = 0.0;
  int n_tokens = 0;
};

// Encoder-decoder with a group-tag embedding table shared between the two
// sides. The encoder consumes token + position embeddings and the tag
// embeddings are added to its *output*; the decoder consumes
// token + position + tag embeddings at its *input*. Output projection is
// tied to the token embedding table.
class RewriterModel {
 public:
  explicit RewriterModel(ModelConfig config);
  RewriterModel(const RewriterModel& other);
  RewriterModel& operator=(const RewriterModel& other);
  RewriterModel(RewriterModel&&) noexcept;
  RewriterModel& operator=(RewriterModel&&) noexcept;
  ~RewriterModel();

  const ModelConfig& config() const { return config_; }

  // ----- inference -----

  // Final source representation: encoder stack output plus tag embeddings.
  // Rows correspond to positions, columns to model dimensions.
  Eigen::MatrixXd encode(const TaggedSequence& x) const;

  // Log-probabilities of the next token after `prefix` (full recompute).
  // The prefix tags must be exactly group_tag(prefix.tokens).
  Eigen::VectorXd decode_step(const Eigen::MatrixXd& encoder_states,
                              const TaggedSequence& prefix,
                              const Vocab& vocab) const;

  // Log-probabilities for every target position under teacher forcing;
  // row k gives log P(token | y_<k, x).
  Eigen::MatrixXd forward_logprobs(const TaggedSequence& x,
                                   const TaggedSequence& y) const;

  struct CrossCache;

  // Incremental decoding state: per-layer self-attention cache plus shared
  // projected encoder keys/values. Copy to branch a beam.
  class DecoderState {
   public:
    const Eigen::VectorXd& log_probs() const { return log_probs_; }
    int length() const { return length_; }

   private:
    friend class RewriterModel;
    std::shared_ptr<const CrossCache> cross_;
    std::vector<Eigen::MatrixXd> self_k_;
    std::vector<Eigen::MatrixXd> self_v_;
    Eigen::VectorXd log_probs_;
    int length_ = 0;
  };

  // Starts incremental decoding; log_probs() of the result scores the first
  // output token.
  DecoderState begin_decode(const Eigen::MatrixXd& encoder_states) const;

  // Feeds one generated token (with its group tag) and refreshes log_probs().
  void advance(DecoderState& state, int token, int tag) const;

  // ----- training -----

  // Weighted negative log-likelihood of the teacher-forced pair. Identifier
  // targets are weighted by config().gamma, all other targets by 1.
  LossStats loss(const TaggedSequence& x, const TaggedSequence& y) const;

  // As loss(), additionally accumulating gradients into the blocks. When
  // `rng` is non-null and config().dropout > 0, dropout is applied.
  LossStats loss_and_backward(const TaggedSequence& x, const TaggedSequence& y,
                              std::mt19937_64* rng = nullptr);

  void zero_grad();

  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  ParamBlock& block(const std::string& name);

  // Total parameter count.
  long parameter_count() const;

 private:
  struct Indices;

  ModelConfig config_;
  std::vector<ParamBlock> blocks_;
  std::unique_ptr<Indices> idx_;

  friend struct ModelOps;
};

// Inverse-sqrt schedule with linear warmup.
double lr_at(long step, long warmup, double factor);

struct TrainConfig {
  long max_steps = 2000;
  int batch_tokens = 512;  // examples accumulate until the budget is reached
  long warmup_enc = 4000;
  long warmup_dec = 1000;
  double factor_enc = 0.002;
  double factor_dec = 0.2;
  bool two_group = false;  // false: decoder schedule applies to all blocks
  double clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  long log_interval = 50;
  long checkpoint_interval = 0;  // steps; 0 writes only the final checkpoint
  std::string checkpoint_path;

  void validate() const;
};

struct TrainStats {
  long steps = 0;
  double final_loss = 0.0;          // mean per-token over the last interval
  std::vector<double> step_losses;  // mean per-token loss of every step
};

// Teacher-forced training over an oracle-labeled corpus. Deterministic for
// a fixed seed. Throws DataError on unlabeled examples.
TrainStats train(RewriterModel& model, const std::vector<SummExample>& corpus,
                 RewriteMode mode, const TrainConfig& config,
                 const Vocab& vocab,
                 const std::vector<SummExample>* dev = nullptr);

// Mean per-token loss over a corpus (no gradient).
double evaluate_loss(const RewriterModel& model,
                     const std::vector<SummExample>& corpus, RewriteMode mode,
                     const Vocab& vocab);

// Versioned binary checkpoint: config, vocabulary (content-hashed), and all
// parameter tensors by name. Written atomically.
void save_checkpoint(const std::string& path, const RewriterModel& model,
                     const Vocab& vocab);

struct LoadedModel {
  RewriterModel model;
  Vocab vocab;
};

// Throws DataError on version or vocabulary-hash mismatch.
LoadedModel load_checkpoint(const std::string& path);

}  // namespace rewriter
