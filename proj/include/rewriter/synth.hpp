#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rewriter/textcore.hpp"

namespace rewriter {

// Deterministic synthetic corpus with decidable rewriting rules.
//
// Document sentence = entity token, salience marker (selected sentences
// only), content tokens, interspersed noise tokens, and optionally a "ref"
// placeholder. The gold rewrite of a selected sentence
//   - drops every noise token (compression),
//   - substitutes "ref" with the entity of the nearest earlier unselected
//     sentence (document context),
//   - replaces the entity with the pronoun when the sentence shares the
//     first summary sentence's entity (summary context).
struct SynthConfig {
  std::uint64_t seed = 1;
  int n_entities = 40;
  int n_content = 400;
  int n_noise = 30;
  int min_doc_sentences = 8;
  int max_doc_sentences = 12;
  int min_summary_sentences = 2;
  int max_summary_sentences = 3;
  int min_content_tokens = 4;
  int max_content_tokens = 7;
  double noise_rate = 0.2;
  double coref_rate = 0.5;
  double ref_rate = 0.4;
  double shuffle_rate = 0.0;    // non-monotone selection order
  double duplicate_rate = 0.0;  // repeated selections

  void validate() const;
};

extern const char* const kPronToken;    // "it"
extern const char* const kRefToken;     // "ref"
extern const char* const kMarkerToken;  // "hl"

bool is_entity_token(const std::string& token);  // "e<number>"
bool is_noise_token(const std::string& token);   // "z<number>"

std::vector<SummExample> synth_generate(const SynthConfig& config,
                                        int n_examples);

// Reference implementation of the rewrite rules: the gold summary sentence
// for position j given the document and the full selection.
Sentence synth_gold_sentence(const Document& doc,
                             const std::vector<int>& selection, int j);

// Token-sequence equality up to pronoun/entity substitution in any position.
bool pron_entity_equivalent(const Sentence& a, const Sentence& b);

}  // namespace rewriter
