#include "rewriter/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rewriter {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::uint64_t pack_trigram(int a, int b, int c) {
  return (static_cast<std::uint64_t>(a) << 42) |
         (static_cast<std::uint64_t>(b) << 21) |
         static_cast<std::uint64_t>(c);
}

bool token_in_window(int token, const Vocab& vocab) {
  return token == Vocab::kUnkId || !vocab.is_special(token);
}

}  // namespace

void DecodeConfig::validate() const {
  if (beam_size < 1) throw DataError("decode config: beam_size must be >= 1");
  if (min_length < 1 || max_length < min_length) {
    throw DataError("decode config: need 0 < min_length <= max_length");
  }
  if (alpha < 0.0) throw DataError("decode config: alpha must be >= 0");
}

double length_penalty(int length, double alpha) {
  if (length < 1) throw DataError("length_penalty: length must be >= 1");
  return std::pow((5.0 + length) / 6.0, alpha);
}

bool has_repeated_trigram(const std::vector<int>& tokens, const Vocab& vocab) {
  std::vector<int> window;
  window.reserve(tokens.size());
  for (int t : tokens) {
    if (token_in_window(t, vocab)) window.push_back(t);
  }
  std::unordered_set<std::uint64_t> seen;
  for (size_t i = 0; i + 3 <= window.size(); ++i) {
    if (!seen.insert(pack_trigram(window[i], window[i + 1], window[i + 2]))
             .second) {
      return true;
    }
  }
  return false;
}

bool TrigramGuard::would_repeat(int token) const {
  if (tail.size() < 2) return false;
  return seen.count(pack_trigram(tail[0], tail[1], token)) > 0;
}

void TrigramGuard::push(int token) {
  if (tail.size() == 2) {
    seen.insert(pack_trigram(tail[0], tail[1], token));
    tail[0] = tail[1];
    tail[1] = token;
  } else {
    tail.push_back(token);
  }
}

// ---------------------------------------------------------------------------
// ModeGrammar
// ---------------------------------------------------------------------------

ModeGrammar::ModeGrammar(const DecodeConfig& config, const Vocab& vocab,
                         int n_doc_sentences, int n_forced_sentences)
    : config_(config),
      vocab_(vocab),
      n_doc_(n_doc_sentences),
      n_forced_(n_forced_sentences) {
  if (config_.mode == RewriteMode::kExternal && n_forced_ < 1) {
    throw DataError("external decoding requires a non-empty alignment");
  }
  if (n_doc_ < 1) throw DataError("decoding requires a non-empty document");
  if (n_doc_ > vocab_.max_identifier()) {
    throw DataError("document has more sentences than the identifier range");
  }
}

bool ModeGrammar::at_sentence_boundary(const Hypothesis& h) const {
  return h.seq.tokens.empty() || h.seq.tokens.back() == Vocab::kEosId;
}

bool ModeGrammar::in_selection_stage(const Hypothesis& h) const {
  return config_.mode == RewriteMode::kJointTwoStage &&
         h.sentences_closed == 0;
}

std::optional<int> ModeGrammar::forced_token(const Hypothesis& h) const {
  int next_len = static_cast<int>(h.seq.size()) + 1;
  switch (config_.mode) {
    case RewriteMode::kExternal:
      if (at_sentence_boundary(h) && h.sentences_closed < n_forced_) {
        return vocab_.identifier_id(h.sentences_closed + 1);
      }
      return std::nullopt;
    case RewriteMode::kJoint:
      if (next_len == config_.max_length && !h.seq.tokens.empty()) {
        return Vocab::kEosumId;
      }
      return std::nullopt;
    case RewriteMode::kJointTwoStage: {
      if (!in_selection_stage(h) && at_sentence_boundary(h)) {
        int rewritten = h.sentences_closed - 1;
        if (rewritten < static_cast<int>(h.selected.size())) {
          return vocab_.identifier_id(h.selected[static_cast<size_t>(rewritten)] + 1);
        }
        return Vocab::kEosumId;
      }
      if (next_len == config_.max_length && !h.seq.tokens.empty()) {
        return Vocab::kEosumId;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

void ModeGrammar::apply_mask(const Hypothesis& h,
                             Eigen::VectorXd& log_probs) const {
  int v = static_cast<int>(log_probs.size());
  int next_len = static_cast<int>(h.seq.size()) + 1;
  int finisher = -1;
  double finisher_value = kNegInf;

  auto mask = [&](int id) { log_probs[id] = kNegInf; };
  auto mask_identifiers = [&] {
    for (int k = 0; k <= vocab_.max_identifier(); ++k) {
      mask(vocab_.identifier_id(k));
    }
  };
  // Identifiers <S_1>..<S_n_doc>, minus <S_0>, out-of-document ids, and
  // (with dedup) already selected sentences.
  auto allow_selection_identifiers_only = [&] {
    for (int id = 0; id < v; ++id) {
      int k = vocab_.identifier_number_of(id);
      if (k >= 1 && k <= n_doc_) continue;
      mask(id);
    }
    if (config_.dedup_selections) {
      for (int sel : h.selected) mask(vocab_.identifier_id(sel + 1));
    }
  };

  mask(Vocab::kPadId);
  switch (config_.mode) {
    case RewriteMode::kExternal:
      // Forced positions never reach the mask; here we are inside a sentence.
      mask_identifiers();
      mask(Vocab::kEosumId);
      if (h.sentences_closed == n_forced_ - 1 && next_len < config_.min_length) {
        finisher = Vocab::kEosId;
        finisher_value = log_probs[finisher];
        mask(Vocab::kEosId);
      }
      break;
    case RewriteMode::kJoint:
      if (at_sentence_boundary(h)) {
        finisher = Vocab::kEosumId;
        finisher_value = log_probs[finisher];
        bool allow_finish =
            !h.seq.tokens.empty() && next_len >= config_.min_length;
        allow_selection_identifiers_only();
        if (allow_finish) {
          log_probs[Vocab::kEosumId] = finisher_value;
        }
      } else {
        mask_identifiers();
        mask(Vocab::kEosumId);
      }
      break;
    case RewriteMode::kJointTwoStage:
      if (in_selection_stage(h)) {
        double separator_value = log_probs[Vocab::kEosId];
        allow_selection_identifiers_only();
        if (!h.selected.empty()) {
          log_probs[Vocab::kEosId] = separator_value;
          finisher = Vocab::kEosId;
          finisher_value = separator_value;
        }
      } else {
        // Inside a rewriting sentence; boundaries are forced.
        mask_identifiers();
        mask(Vocab::kEosumId);
      }
      break;
  }

  if (!(log_probs.array() > kNegInf).any() && finisher >= 0) {
    log_probs[finisher] = finisher_value;
  }
}

int ModeGrammar::next_tag(const Hypothesis& h, int token) const {
  int k = vocab_.identifier_number_of(token);
  if (k >= 0) return k;
  if (h.seq.tokens.empty() || h.seq.tokens.back() == Vocab::kEosId) return 0;
  return h.seq.tags.back();
}

bool ModeGrammar::in_trigram_window(int token) const {
  return token_in_window(token, vocab_);
}

void ModeGrammar::observe(Hypothesis& h, int token) const {
  int k = vocab_.identifier_number_of(token);
  if (k >= 1) {
    bool track = config_.mode == RewriteMode::kJoint ||
                 (config_.mode == RewriteMode::kJointTwoStage &&
                  h.sentences_closed == 0);
    if (track) h.selected.push_back(k - 1);
  }
  if (token == Vocab::kEosId) {
    h.sentences_closed += 1;
    if (config_.mode == RewriteMode::kExternal &&
        h.sentences_closed == n_forced_) {
      h.finished = true;
    }
  }
  if (token == Vocab::kEosumId &&
      (config_.mode == RewriteMode::kJoint ||
       config_.mode == RewriteMode::kJointTwoStage)) {
    h.finished = true;
  }
}

// ---------------------------------------------------------------------------
// Search core
// ---------------------------------------------------------------------------

namespace {

struct Candidate {
  int parent;
  int token;
  double log_prob;
};

struct LiveBeam {
  Hypothesis hyp;
  std::unique_ptr<BeamState> state;
};

// Returns nullopt when the beam empties before any hypothesis finishes
// (possible only under trigram blocking).
std::optional<Hypothesis> run_search(const BeamScorer& scorer,
                                     const BeamGrammar& grammar,
                                     const DecodeConfig& config,
                                     bool blocking) {
  std::vector<LiveBeam> beams;
  beams.push_back({Hypothesis{}, scorer.start()});
  std::vector<Hypothesis> done;

  int top_k = std::max(2 * config.beam_size, 2);
  for (int step = 0; step < config.max_length && !beams.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (size_t bi = 0; bi < beams.size(); ++bi) {
      const Hypothesis& h = beams[bi].hyp;
      const Eigen::VectorXd& base = beams[bi].state->log_probs;
      if (auto forced = grammar.forced_token(h)) {
        candidates.push_back(
            {static_cast<int>(bi), *forced, h.log_prob + base[*forced]});
        continue;
      }
      Eigen::VectorXd masked = base;
      grammar.apply_mask(h, masked);
      std::vector<std::pair<double, int>> scored;
      scored.reserve(static_cast<size_t>(masked.size()));
      for (int t = 0; t < masked.size(); ++t) {
        if (masked[t] == kNegInf) continue;
        if (blocking && grammar.in_trigram_window(t) &&
            h.trigrams.would_repeat(t)) {
          continue;
        }
        scored.emplace_back(masked[t], t);
      }
      if (scored.empty()) continue;
      size_t keep = std::min(scored.size(), static_cast<size_t>(top_k));
      std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(),
                        [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                        });
      scored.resize(keep);
      for (const auto& [lp, t] : scored) {
        candidates.push_back({static_cast<int>(bi), t, h.log_prob + lp});
      }
    }
    if (candidates.empty()) {
      if (done.empty()) return std::nullopt;
      break;
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) {
                       return a.log_prob > b.log_prob;
                     });

    std::vector<LiveBeam> next;
    int slots = 0;
    for (const Candidate& c : candidates) {
      if (slots == config.beam_size) break;
      const LiveBeam& parent = beams[static_cast<size_t>(c.parent)];
      Hypothesis child = parent.hyp;
      int tag = grammar.next_tag(child, c.token);
      child.seq.tokens.push_back(c.token);
      child.seq.tags.push_back(tag);
      child.log_prob = c.log_prob;
      if (grammar.in_trigram_window(c.token)) child.trigrams.push(c.token);
      grammar.observe(child, c.token);
      if (!child.finished &&
          static_cast<int>(child.seq.size()) >= config.max_length) {
        child.finished = true;
        child.truncated = true;
      }
      ++slots;  // finished hypotheses retire their slot
      if (child.finished) {
        done.push_back(std::move(child));
      } else {
        auto state = parent.state->clone();
        scorer.extend(*state, c.token, tag);
        next.push_back({std::move(child), std::move(state)});
      }
    }
    beams = std::move(next);
  }

  if (done.empty()) return std::nullopt;
  const Hypothesis* best = &done[0];
  double best_score = done[0].score(config.alpha);
  for (const auto& h : done) {
    double s = h.score(config.alpha);
    if (s > best_score) {
      best_score = s;
      best = &h;
    }
  }
  return *best;
}

}  // namespace

BeamResult beam_search(const BeamScorer& scorer, const BeamGrammar& grammar,
                       const DecodeConfig& config) {
  config.validate();
  if (auto best = run_search(scorer, grammar, config, config.trigram_block)) {
    return {std::move(*best), false};
  }
  // Blocking pruned every path: retry unblocked and flag the example.
  auto best = run_search(scorer, grammar, config, false);
  if (!best) throw DataError("beam search produced no finished hypothesis");
  return {std::move(*best), true};
}

// ---------------------------------------------------------------------------
// Model-backed scorer and the summarize pipeline
// ---------------------------------------------------------------------------

namespace {

struct ModelBeamState : BeamState {
  RewriterModel::DecoderState dec;
  std::unique_ptr<BeamState> clone() const override {
    return std::make_unique<ModelBeamState>(*this);
  }
};

}  // namespace

ModelBeamScorer::ModelBeamScorer(const RewriterModel& model,
                                 Eigen::MatrixXd encoder_states)
    : model_(model), encoder_states_(std::move(encoder_states)) {}

int ModelBeamScorer::vocab_size() const { return model_.config().vocab_size; }

std::unique_ptr<BeamState> ModelBeamScorer::start() const {
  auto state = std::make_unique<ModelBeamState>();
  state->dec = model_.begin_decode(encoder_states_);
  state->log_probs = state->dec.log_probs();
  return state;
}

void ModelBeamScorer::extend(BeamState& state, int token, int tag) const {
  auto& s = static_cast<ModelBeamState&>(state);
  model_.advance(s.dec, token, tag);
  s.log_probs = s.dec.log_probs();
}

BeamResult beam_search(const RewriterModel& model, const TaggedSequence& x,
                       const DecodeConfig& config, const Vocab& vocab,
                       int n_doc_sentences, int n_forced_sentences) {
  ModelBeamScorer scorer(model, model.encode(x));
  ModeGrammar grammar(config, vocab, n_doc_sentences, n_forced_sentences);
  return beam_search(scorer, grammar, config);
}

SummaryOutput parse_hypothesis(const Hypothesis& h, RewriteMode mode,
                               const Vocab& vocab,
                               const OracleAlignment* external_alignment) {
  SummaryOutput out;
  out.truncated = h.truncated;
  const auto& tokens = h.seq.tokens;
  size_t i = 0;
  if (mode == RewriteMode::kJointTwoStage) {
    while (i < tokens.size() && tokens[i] != Vocab::kEosId) ++i;
    if (i < tokens.size()) ++i;  // separator
  }
  Sentence current;
  bool any_content = false;
  for (; i < tokens.size(); ++i) {
    int tok = tokens[i];
    if (vocab.is_identifier(tok)) continue;
    if (tok == Vocab::kEosId) {
      out.summary.push_back(current);
      current = Sentence{};
      any_content = false;
      continue;
    }
    if (tok == Vocab::kEosumId) break;
    current.tokens.push_back(vocab.token(tok));
    any_content = true;
  }
  if (any_content) out.summary.push_back(current);  // truncated tail

  if (mode == RewriteMode::kExternal) {
    if (external_alignment != nullptr) out.selected = external_alignment->indices;
  } else {
    out.selected = h.selected;
  }
  return out;
}

SummaryOutput summarize(const RewriterModel& model, const Document& document,
                        RewriteMode mode, const DecodeConfig& config,
                        const Vocab& vocab,
                        const OracleAlignment* external_alignment) {
  DecodeConfig cfg = config;
  cfg.mode = mode;
  TaggedSequence x;
  int n_forced = 0;
  if (mode == RewriteMode::kExternal) {
    if (external_alignment == nullptr) {
      throw DataError("external mode needs an extractive alignment for " +
                      document.id);
    }
    x = build_external(document, *external_alignment, vocab).source;
    n_forced = static_cast<int>(external_alignment->indices.size());
  } else {
    x = extend_document_natural(document, vocab);
  }
  BeamResult result =
      beam_search(model, x, cfg, vocab,
                  static_cast<int>(document.sentences.size()), n_forced);
  SummaryOutput out =
      parse_hypothesis(result.best, mode, vocab, external_alignment);
  out.id = document.id;
  out.fallback_used = result.fallback_used;
  if (mode == RewriteMode::kExternal &&
      out.selected.size() > out.summary.size()) {
    out.selected.resize(out.summary.size());
  }
  return out;
}

}  // namespace rewriter
