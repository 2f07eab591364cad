#include "rewriter/analysis.hpp"

#include <algorithm>
#include <map>

namespace rewriter {

const char* edit_category_name(EditCategory c) {
  switch (c) {
    case EditCategory::kRewritten: return "rewritten";
    case EditCategory::kCompressed: return "compressed";
    case EditCategory::kUnchanged: return "unchanged";
  }
  return "?";
}

EditCategory categorize_edit(const Sentence& extracted,
                             const Sentence& rewritten) {
  int lcs = lcs_length(extracted.tokens, rewritten.tokens);
  int insertions = static_cast<int>(rewritten.tokens.size()) - lcs;
  int deletions = static_cast<int>(extracted.tokens.size()) - lcs;
  if (insertions > 0) return EditCategory::kRewritten;
  if (deletions > 0) return EditCategory::kCompressed;
  return EditCategory::kUnchanged;
}

ExtractionHistogram extraction_histogram(
    const std::vector<OracleAlignment>& alignments, int n_positions) {
  if (n_positions < 1) {
    throw DataError("extraction_histogram: need at least one position");
  }
  ExtractionHistogram out;
  out.positions.assign(static_cast<size_t>(n_positions), 0.0);
  out.duplicates.assign(static_cast<size_t>(n_positions), 0.0);
  for (const auto& a : alignments) {
    std::map<int, int> counts;
    for (int idx : a.indices) {
      if (idx < 0 || idx >= n_positions) {
        throw DataError("extraction_histogram: index out of range");
      }
      out.positions[static_cast<size_t>(idx)] += 1.0;
      ++out.n_selections;
      ++counts[idx];
    }
    for (const auto& [idx, c] : counts) {
      if (c >= 2) {
        out.duplicates[static_cast<size_t>(idx)] += 1.0;
        ++out.n_duplicates;
      }
    }
  }
  if (out.n_selections > 0) {
    for (auto& v : out.positions) v /= static_cast<double>(out.n_selections);
  }
  if (out.n_duplicates > 0) {
    for (auto& v : out.duplicates) v /= static_cast<double>(out.n_duplicates);
  }
  return out;
}

double word_count_stats(const std::vector<std::vector<Sentence>>& summaries) {
  if (summaries.empty()) {
    throw DataError("word_count_stats: empty summary set");
  }
  long total = 0;
  for (const auto& summary : summaries) {
    for (const auto& sentence : summary) {
      for (const auto& tok : sentence.tokens) {
        if (!is_reserved_token(tok)) ++total;
      }
    }
  }
  return static_cast<double>(total) / static_cast<double>(summaries.size());
}

namespace {

std::vector<std::string> flatten(const std::vector<Sentence>& sentences) {
  std::vector<std::string> out;
  for (const auto& s : sentences) {
    for (const auto& tok : s.tokens) {
      if (!is_reserved_token(tok)) out.push_back(tok);
    }
  }
  return out;
}

}  // namespace

RougeTriple evaluate_summaries(
    const std::vector<std::vector<Sentence>>& hypotheses,
    const std::vector<std::vector<Sentence>>& references) {
  if (hypotheses.size() != references.size() || hypotheses.empty()) {
    throw DataError("evaluate_summaries: need matched non-empty sets");
  }
  auto add = [](RougeScore& acc, const RougeScore& s) {
    acc.recall += s.recall;
    acc.precision += s.precision;
    acc.f1 += s.f1;
  };
  RougeTriple sum;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    std::vector<std::string> hyp = flatten(hypotheses[i]);
    std::vector<std::string> ref = flatten(references[i]);
    if (ref.empty()) throw DataError("evaluate_summaries: empty reference");
    add(sum.r1, rouge_n(hyp, ref, 1));
    add(sum.r2, ref.size() >= 2 ? rouge_n(hyp, ref, 2) : RougeScore{});
    add(sum.rl, rouge_l(hyp, ref));
  }
  double n = static_cast<double>(hypotheses.size());
  auto scale = [n](RougeScore& s) {
    s.recall /= n;
    s.precision /= n;
    s.f1 /= n;
  };
  scale(sum.r1);
  scale(sum.r2);
  scale(sum.rl);
  return sum;
}

double BlockingSensitivity::mean_f1_delta() const {
  return ((with_blocking.r1.f1 - without_blocking.r1.f1) +
          (with_blocking.r2.f1 - without_blocking.r2.f1) +
          (with_blocking.rl.f1 - without_blocking.rl.f1)) /
         3.0;
}

BlockingSensitivity blocking_sensitivity(const RewriterModel& model,
                                         const std::vector<SummExample>& corpus,
                                         const DecodeConfig& config,
                                         const Vocab& vocab) {
  if (corpus.empty()) throw DataError("blocking_sensitivity: empty corpus");
  std::vector<std::vector<Sentence>> refs;
  std::vector<std::vector<Sentence>> on_out, off_out;
  for (const auto& ex : corpus) {
    const OracleAlignment* alignment = nullptr;
    if (config.mode == RewriteMode::kExternal) {
      if (!ex.oracle) {
        throw DataError("blocking_sensitivity: example " + ex.document.id +
                        " lacks oracle labels");
      }
      alignment = &*ex.oracle;
    }
    DecodeConfig on = config;
    on.trigram_block = true;
    DecodeConfig off = config;
    off.trigram_block = false;
    on_out.push_back(
        summarize(model, ex.document, config.mode, on, vocab, alignment)
            .summary);
    off_out.push_back(
        summarize(model, ex.document, config.mode, off, vocab, alignment)
            .summary);
    refs.push_back(ex.summary);
  }
  BlockingSensitivity out;
  out.with_blocking = evaluate_summaries(on_out, refs);
  out.without_blocking = evaluate_summaries(off_out, refs);
  out.n_examples = static_cast<int>(corpus.size());
  return out;
}

TagSwapResult tag_swap_probe(const RewriterModel& model,
                             const Document& document,
                             const OracleAlignment& alignment, int i, int j,
                             const DecodeConfig& config, const Vocab& vocab,
                             const SentenceEquiv& equiv) {
  int n = static_cast<int>(alignment.indices.size());
  if (i < 0 || j < 0 || i >= n || j >= n) {
    throw DataError("tag_swap_probe: positions out of range");
  }
  OracleAlignment swapped = alignment;
  std::swap(swapped.indices[static_cast<size_t>(i)],
            swapped.indices[static_cast<size_t>(j)]);

  TagSwapResult out;
  out.original = summarize(model, document, RewriteMode::kExternal, config,
                           vocab, &alignment);
  out.swapped = summarize(model, document, RewriteMode::kExternal, config,
                          vocab, &swapped);
  if (i < static_cast<int>(out.swapped.summary.size()) &&
      j < static_cast<int>(out.original.summary.size())) {
    const Sentence& a = out.swapped.summary[static_cast<size_t>(i)];
    const Sentence& b = out.original.summary[static_cast<size_t>(j)];
    out.content_swap = equiv ? equiv(a, b) : a == b;
  }
  return out;
}

}  // namespace rewriter
