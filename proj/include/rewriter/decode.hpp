#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_set>
#include <vector>

#include "rewriter/align.hpp"
#include "rewriter/model.hpp"
#include "rewriter/textcore.hpp"

namespace rewriter {

struct DecodeConfig {
  int beam_size = 5;
  int min_length = 50;
  int max_length = 200;
  double alpha = 0.95;  // length penalty exponent
  bool trigram_block = true;
  RewriteMode mode = RewriteMode::kExternal;
  bool dedup_selections = false;  // joint modes: forbid repeated selections

  void validate() const;
};

// ((5 + length) / 6) ^ alpha
double length_penalty(int length, double alpha);

// True iff some trigram over ordinary word tokens occurs at least twice.
// Identifier, "</S>" and "</SUM>" tokens do not enter trigram windows.
bool has_repeated_trigram(const std::vector<int>& tokens, const Vocab& vocab);

// Trigram bookkeeping carried by each hypothesis during search.
struct TrigramGuard {
  std::vector<int> tail;  // last (up to) two window tokens
  std::unordered_set<std::uint64_t> seen;

  bool would_repeat(int token) const;
  void push(int token);
};

struct Hypothesis {
  TaggedSequence seq;
  double log_prob = 0.0;
  int sentences_closed = 0;
  bool finished = false;
  bool truncated = false;
  std::vector<int> selected;  // 0-based document sentence per identifier
  TrigramGuard trigrams;

  double score(double alpha) const {
    return log_prob / length_penalty(
                          std::max<int>(1, static_cast<int>(seq.size())), alpha);
  }
};

// Scoring interface for the search: log-probabilities over an output
// vocabulary, advanced one token at a time.
struct BeamState {
  Eigen::VectorXd log_probs;
  virtual ~BeamState() = default;
  virtual std::unique_ptr<BeamState> clone() const = 0;
};

class BeamScorer {
 public:
  virtual ~BeamScorer() = default;
  virtual int vocab_size() const = 0;
  // Initial state; log_probs scores the first output token.
  virtual std::unique_ptr<BeamState> start() const = 0;
  virtual void extend(BeamState& state, int token, int tag) const = 0;
};

// Output-side constraints: token forcing, masking, tag assignment, and
// hypothesis bookkeeping. Implementations own all vocabulary semantics so
// the search core stays generic.
class BeamGrammar {
 public:
  virtual ~BeamGrammar() = default;
  // Token forced at the next position, if any.
  virtual std::optional<int> forced_token(const Hypothesis& h) const = 0;
  // Sets disallowed entries to -inf.
  virtual void apply_mask(const Hypothesis& h,
                          Eigen::VectorXd& log_probs) const = 0;
  virtual int next_tag(const Hypothesis& h, int token) const = 0;
  // True if the token participates in trigram windows.
  virtual bool in_trigram_window(int token) const = 0;
  // Updates counters and the finished flag after `token` was appended.
  virtual void observe(Hypothesis& h, int token) const = 0;
};

struct BeamResult {
  Hypothesis best;
  bool fallback_used = false;
};

// Generic beam search. Hypotheses that reach config.max_length finish as
// truncated. If trigram blocking empties the beam the search reruns with
// blocking disabled and reports fallback_used.
BeamResult beam_search(const BeamScorer& scorer, const BeamGrammar& grammar,
                       const DecodeConfig& config);

// Grammar for the three rewriter modes.
//   external:       identifiers are forced incrementally <S_1>..<S_n_forced>;
//                   decoding finishes after n_forced sentences close.
//   joint:          at sentence boundaries the model picks an identifier
//                   <S_1>..<S_n_doc> or "</SUM>"; identifiers are masked
//                   elsewhere.
//   joint_two_stage: all identifiers first, then a "</S>" separator, then
//                   rewriting forced to the selected order.
class ModeGrammar : public BeamGrammar {
 public:
  ModeGrammar(const DecodeConfig& config, const Vocab& vocab,
              int n_doc_sentences, int n_forced_sentences);

  std::optional<int> forced_token(const Hypothesis& h) const override;
  void apply_mask(const Hypothesis& h,
                  Eigen::VectorXd& log_probs) const override;
  int next_tag(const Hypothesis& h, int token) const override;
  bool in_trigram_window(int token) const override;
  void observe(Hypothesis& h, int token) const override;

 private:
  bool at_sentence_boundary(const Hypothesis& h) const;
  bool in_selection_stage(const Hypothesis& h) const;

  const DecodeConfig& config_;
  const Vocab& vocab_;
  int n_doc_;
  int n_forced_;
};

class ModelBeamScorer : public BeamScorer {
 public:
  ModelBeamScorer(const RewriterModel& model, Eigen::MatrixXd encoder_states);
  int vocab_size() const override;
  std::unique_ptr<BeamState> start() const override;
  void extend(BeamState& state, int token, int tag) const override;

 private:
  const RewriterModel& model_;
  Eigen::MatrixXd encoder_states_;
};

// Mode-aware search over a prepared source sequence.
BeamResult beam_search(const RewriterModel& model, const TaggedSequence& x,
                       const DecodeConfig& config, const Vocab& vocab,
                       int n_doc_sentences, int n_forced_sentences);

struct SummaryOutput {
  std::string id;
  std::vector<Sentence> summary;
  std::vector<int> selected;
  bool fallback_used = false;
  bool truncated = false;
};

// Full pipeline for one document: build the extended source for `mode`,
// decode, split the winning hypothesis into sentences.
// External mode requires an alignment; joint modes ignore it.
SummaryOutput summarize(const RewriterModel& model, const Document& document,
                        RewriteMode mode, const DecodeConfig& config,
                        const Vocab& vocab,
                        const OracleAlignment* external_alignment);

// Parses a finished hypothesis: sentences split on "</S>", identifiers
// stripped, "</SUM>" dropped; for the two-stage mode the leading selection
// block is consumed first.
SummaryOutput parse_hypothesis(const Hypothesis& h, RewriteMode mode,
                               const Vocab& vocab,
                               const OracleAlignment* external_alignment);

}  // namespace rewriter
