#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rewriter/decode.hpp"
#include "rewriter/model.hpp"
#include "rewriter/rouge.hpp"
#include "rewriter/textcore.hpp"

namespace rewriter {

enum class EditCategory { kRewritten, kCompressed, kUnchanged };

const char* edit_category_name(EditCategory c);

// Minimal token edit script via LCS: any insertion (or substitution, which
// shows up as delete+insert) makes the pair Rewritten; deletions alone make
// it Compressed; an empty script leaves it Unchanged.
EditCategory categorize_edit(const Sentence& extracted,
                             const Sentence& rewritten);

struct ExtractionHistogram {
  std::vector<double> positions;   // proportion of selections per position
  std::vector<double> duplicates;  // proportion of within-example repeats
  long n_selections = 0;
  long n_duplicates = 0;
};

ExtractionHistogram extraction_histogram(
    const std::vector<OracleAlignment>& alignments, int n_positions);

// Mean words per summary; identifier, "</S>" and "</SUM>" tokens do not
// count. Throws on an empty input set.
double word_count_stats(const std::vector<std::vector<Sentence>>& summaries);

struct RougeTriple {
  RougeScore r1, r2, rl;
};

// Macro-averaged summary-level ROUGE; sentences are concatenated and the
// separators never enter the scoring.
RougeTriple evaluate_summaries(
    const std::vector<std::vector<Sentence>>& hypotheses,
    const std::vector<std::vector<Sentence>>& references);

struct BlockingSensitivity {
  RougeTriple with_blocking;
  RougeTriple without_blocking;
  int n_examples = 0;
  double mean_f1_delta() const;  // blocking-on minus blocking-off, averaged
};

// Decodes the corpus twice (trigram blocking on and off) and scores both
// against the gold summaries. External mode uses the oracle alignments.
BlockingSensitivity blocking_sensitivity(const RewriterModel& model,
                                         const std::vector<SummExample>& corpus,
                                         const DecodeConfig& config,
                                         const Vocab& vocab);

using SentenceEquiv =
    std::function<bool(const Sentence&, const Sentence&)>;

struct TagSwapResult {
  SummaryOutput original;
  SummaryOutput swapped;
  bool content_swap = false;
};

// Decodes an external-mode example before and after swapping summary
// positions i and j of its alignment. content_swap reports whether swapped
// output sentence i matches original output sentence j under `equiv`.
TagSwapResult tag_swap_probe(const RewriterModel& model,
                             const Document& document,
                             const OracleAlignment& alignment, int i, int j,
                             const DecodeConfig& config, const Vocab& vocab,
                             const SentenceEquiv& equiv = {});

}  // namespace rewriter
