#pragma once

#include <utility>
#include <vector>

#include "rewriter/textcore.hpp"

namespace rewriter {

// Parallel token-id and group-tag sequences. The tags are always exactly
// what group_tag() recomputes from the tokens.
struct TaggedSequence {
  std::vector<int> tokens;
  std::vector<int> tags;

  size_t size() const { return tokens.size(); }
  bool operator==(const TaggedSequence&) const = default;
};

// Incremental group-tag state over a mixed stream of word tokens and
// identifier tokens. The tag defaults to 0; an identifier <S_k> switches the
// current tag to k (and carries k itself); "</S>" carries the current tag
// and resets it to 0 afterwards.
class TagTracker {
 public:
  // Tag the next token would receive, without consuming it.
  int peek(int token, const Vocab& vocab) const;
  // Consumes the token and returns its tag.
  int push(int token, const Vocab& vocab);
  int current() const { return current_; }

 private:
  int current_ = 0;
};

// Group tags for a full token-id sequence.
std::vector<int> group_tag(const std::vector<int>& tokens, const Vocab& vocab);

// Group tags computed lexically from surface forms, without a vocabulary.
std::vector<int> group_tag(const std::vector<std::string>& tokens);

// Tag of `candidate` when appended after `prefix`; equals the last element
// of group_tag(prefix ++ [candidate]).
int tag_of_next(const std::vector<int>& prefix, int candidate,
                const Vocab& vocab);

// Per-summary-sentence argmax of match_score over document sentences, ties
// broken by the lowest document index.
OracleAlignment oracle_extract(const Document& doc,
                               const std::vector<Sentence>& summary);

// Extended source sequence for a rewriter fed by an external extractor:
// the sentence selected for summary position j opens with <S_{j+1}>, every
// unselected sentence opens with <S_0>, and each sentence closes with </S>.
// A document sentence selected for several positions keeps the identifier of
// the lowest position; the higher positions are reported in
// duplicate_positions as (summary position, document sentence) pairs.
struct ExternalBuild {
  TaggedSequence source;
  // The identifier tokens the decoder is forced to emit, <S_1>..<S_n>.
  TaggedSequence target_template;
  std::vector<std::pair<int, int>> duplicate_positions;
};

ExternalBuild build_external(const Document& doc,
                             const OracleAlignment& alignment,
                             const Vocab& vocab);

// Extended source and target for the joint selector-rewriter: the source
// carries natural identifiers <S_1>..<S_|X|>, the target opens summary
// sentence j with <S_{alignment[j]+1}>.
struct JointBuild {
  TaggedSequence source;
  TaggedSequence target;
};

JointBuild build_joint(const Document& doc, const OracleAlignment& alignment,
                       const std::vector<Sentence>& summary,
                       const Vocab& vocab);

// Two-stage variant of the joint target: all selection identifiers first,
// then a "</S>" separator, then the rewritten sentences.
JointBuild build_two_stage(const Document& doc,
                           const OracleAlignment& alignment,
                           const std::vector<Sentence>& summary,
                           const Vocab& vocab);

// Document extended with natural identifiers <S_1>..<S_|X|>.
TaggedSequence extend_document_natural(const Document& doc,
                                       const Vocab& vocab);

// Summary extended with the given 1-based sentence identifiers, one per
// sentence, each sentence closed with </S>, the whole sequence closed with
// </SUM>.
TaggedSequence extend_summary(const std::vector<Sentence>& summary,
                              const std::vector<int>& sentence_identifiers,
                              const Vocab& vocab);

// Teacher-forced target for a training mode.
enum class RewriteMode { kExternal, kJoint, kJointTwoStage };

TaggedSequence build_source(const SummExample& example, RewriteMode mode,
                            const Vocab& vocab);
TaggedSequence build_target(const SummExample& example, RewriteMode mode,
                            const Vocab& vocab);

// Strips identifiers and "</S>" from an extended document; inverse of the
// extension step.
std::vector<std::vector<int>> strip_extension(const TaggedSequence& x,
                                              const Vocab& vocab);

}  // namespace rewriter
