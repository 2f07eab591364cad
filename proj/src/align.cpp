#include "rewriter/align.hpp"

#include <algorithm>

#include "rewriter/rouge.hpp"

namespace rewriter {

int TagTracker::peek(int token, const Vocab& vocab) const {
  int k = vocab.identifier_number_of(token);
  return k >= 0 ? k : current_;
}

int TagTracker::push(int token, const Vocab& vocab) {
  int k = vocab.identifier_number_of(token);
  if (k >= 0) current_ = k;
  int tag = current_;
  if (token == Vocab::kEosId) current_ = 0;
  return tag;
}

std::vector<int> group_tag(const std::vector<int>& tokens, const Vocab& vocab) {
  std::vector<int> tags;
  tags.reserve(tokens.size());
  TagTracker tracker;
  for (int tok : tokens) tags.push_back(tracker.push(tok, vocab));
  return tags;
}

std::vector<int> group_tag(const std::vector<std::string>& tokens) {
  std::vector<int> tags;
  tags.reserve(tokens.size());
  int current = 0;
  for (const auto& tok : tokens) {
    if (auto k = identifier_number(tok)) current = *k;
    tags.push_back(current);
    if (tok == Vocab::kEosToken) current = 0;
  }
  return tags;
}

int tag_of_next(const std::vector<int>& prefix, int candidate,
                const Vocab& vocab) {
  TagTracker tracker;
  for (int tok : prefix) tracker.push(tok, vocab);
  return tracker.peek(candidate, vocab);
}

OracleAlignment oracle_extract(const Document& doc,
                               const std::vector<Sentence>& summary) {
  if (doc.sentences.empty() || summary.empty()) {
    throw DataError("oracle_extract: document and summary must be non-empty");
  }
  OracleAlignment alignment;
  alignment.indices.reserve(summary.size());
  for (const auto& gold : summary) {
    int best = 0;
    double best_score = -1.0;
    for (size_t i = 0; i < doc.sentences.size(); ++i) {
      double score = match_score(doc.sentences[i].tokens, gold.tokens);
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(i);
      }
    }
    alignment.indices.push_back(best);
  }
  return alignment;
}

namespace {

void append_sentence(TaggedSequence& seq, int identifier_k,
                     const Sentence& sentence, const Vocab& vocab,
                     TagTracker& tracker) {
  auto push = [&](int id) {
    seq.tokens.push_back(id);
    seq.tags.push_back(tracker.push(id, vocab));
  };
  push(vocab.identifier_id(identifier_k));
  for (const auto& tok : sentence.tokens) push(vocab.id(tok));
  push(Vocab::kEosId);
}

void check_alignment(const Document& doc, const OracleAlignment& alignment) {
  int n = static_cast<int>(doc.sentences.size());
  if (alignment.indices.empty()) {
    throw DataError("alignment for document " + doc.id + " is empty");
  }
  for (int idx : alignment.indices) {
    if (idx < 0 || idx >= n) {
      throw DataError("alignment index " + std::to_string(idx) +
                      " out of range for " + std::to_string(n) +
                      "-sentence document " + doc.id);
    }
  }
}

}  // namespace

ExternalBuild build_external(const Document& doc,
                             const OracleAlignment& alignment,
                             const Vocab& vocab) {
  check_alignment(doc, alignment);
  int n_sentences = static_cast<int>(doc.sentences.size());
  int n_selected = static_cast<int>(alignment.indices.size());
  if (n_selected > vocab.max_identifier()) {
    throw DataError("document " + doc.id + ": " +
                    std::to_string(n_selected) +
                    " selections exceed the identifier range");
  }

  // Lowest summary position wins when a sentence is selected repeatedly.
  std::vector<int> identifier_of(n_sentences, 0);
  ExternalBuild out;
  for (int j = 0; j < n_selected; ++j) {
    int sent = alignment.indices[static_cast<size_t>(j)];
    if (identifier_of[static_cast<size_t>(sent)] == 0) {
      identifier_of[static_cast<size_t>(sent)] = j + 1;
    } else {
      out.duplicate_positions.emplace_back(j + 1, sent);
    }
  }

  TagTracker source_tracker;
  for (int i = 0; i < n_sentences; ++i) {
    append_sentence(out.source, identifier_of[static_cast<size_t>(i)],
                    doc.sentences[static_cast<size_t>(i)], vocab,
                    source_tracker);
  }

  TagTracker template_tracker;
  for (int j = 1; j <= n_selected; ++j) {
    int id = vocab.identifier_id(j);
    out.target_template.tokens.push_back(id);
    out.target_template.tags.push_back(template_tracker.push(id, vocab));
  }
  return out;
}

TaggedSequence extend_document_natural(const Document& doc,
                                       const Vocab& vocab) {
  int n = static_cast<int>(doc.sentences.size());
  if (n == 0) throw DataError("document " + doc.id + " is empty");
  if (n > vocab.max_identifier()) {
    throw DataError("document " + doc.id + " has " + std::to_string(n) +
                    " sentences, identifier range allows " +
                    std::to_string(vocab.max_identifier()));
  }
  TaggedSequence seq;
  TagTracker tracker;
  for (int i = 0; i < n; ++i) {
    append_sentence(seq, i + 1, doc.sentences[static_cast<size_t>(i)], vocab,
                    tracker);
  }
  return seq;
}

TaggedSequence extend_summary(const std::vector<Sentence>& summary,
                              const std::vector<int>& sentence_identifiers,
                              const Vocab& vocab) {
  if (summary.size() != sentence_identifiers.size()) {
    throw DataError("extend_summary: one identifier per sentence required");
  }
  TaggedSequence seq;
  TagTracker tracker;
  for (size_t j = 0; j < summary.size(); ++j) {
    append_sentence(seq, sentence_identifiers[j], summary[j], vocab, tracker);
  }
  seq.tokens.push_back(Vocab::kEosumId);
  seq.tags.push_back(tracker.push(Vocab::kEosumId, vocab));
  return seq;
}

JointBuild build_joint(const Document& doc, const OracleAlignment& alignment,
                       const std::vector<Sentence>& summary,
                       const Vocab& vocab) {
  check_alignment(doc, alignment);
  if (summary.size() != alignment.indices.size()) {
    throw DataError("document " + doc.id +
                    ": summary and alignment lengths differ");
  }
  JointBuild out;
  out.source = extend_document_natural(doc, vocab);
  std::vector<int> identifiers;
  identifiers.reserve(alignment.indices.size());
  for (int idx : alignment.indices) identifiers.push_back(idx + 1);
  out.target = extend_summary(summary, identifiers, vocab);
  return out;
}

JointBuild build_two_stage(const Document& doc,
                           const OracleAlignment& alignment,
                           const std::vector<Sentence>& summary,
                           const Vocab& vocab) {
  JointBuild joint = build_joint(doc, alignment, summary, vocab);
  TaggedSequence target;
  TagTracker tracker;
  auto push = [&](int id) {
    target.tokens.push_back(id);
    target.tags.push_back(tracker.push(id, vocab));
  };
  // Selection block: all identifiers up front, closed by a "</S>" separator.
  for (int idx : alignment.indices) push(vocab.identifier_id(idx + 1));
  push(Vocab::kEosId);
  for (size_t i = 0; i < joint.target.tokens.size(); ++i) {
    push(joint.target.tokens[i]);
  }
  joint.target = std::move(target);
  return joint;
}

TaggedSequence build_source(const SummExample& example, RewriteMode mode,
                            const Vocab& vocab) {
  if (!example.oracle) {
    throw DataError("example " + example.document.id +
                    " has no oracle labels; run the labeler first");
  }
  if (mode == RewriteMode::kExternal) {
    return build_external(example.document, *example.oracle, vocab).source;
  }
  return extend_document_natural(example.document, vocab);
}

TaggedSequence build_target(const SummExample& example, RewriteMode mode,
                            const Vocab& vocab) {
  if (!example.oracle) {
    throw DataError("example " + example.document.id +
                    " has no oracle labels; run the labeler first");
  }
  switch (mode) {
    case RewriteMode::kExternal: {
      std::vector<int> natural(example.summary.size());
      for (size_t j = 0; j < natural.size(); ++j) {
        natural[j] = static_cast<int>(j) + 1;
      }
      return extend_summary(example.summary, natural, vocab);
    }
    case RewriteMode::kJoint:
      return build_joint(example.document, *example.oracle, example.summary,
                         vocab)
          .target;
    case RewriteMode::kJointTwoStage:
      return build_two_stage(example.document, *example.oracle,
                             example.summary, vocab)
          .target;
  }
  throw DataError("unknown rewrite mode");
}

std::vector<std::vector<int>> strip_extension(const TaggedSequence& x,
                                              const Vocab& vocab) {
  std::vector<std::vector<int>> sentences;
  std::vector<int> current;
  bool open = false;
  for (int tok : x.tokens) {
    if (vocab.is_identifier(tok)) {
      open = true;
      current.clear();
      continue;
    }
    if (tok == Vocab::kEosId) {
      sentences.push_back(current);
      current.clear();
      open = false;
      continue;
    }
    if (open) current.push_back(tok);
  }
  return sentences;
}

}  // namespace rewriter
