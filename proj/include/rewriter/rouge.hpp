#pragma once

#include <string>
#include <vector>

namespace rewriter {

struct RougeScore {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

RougeScore make_rouge_score(double recall, double precision);

// Clipped (multiset) n-gram overlap, n in {1, 2}. The reference must contain
// at least n tokens.
RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n);

// Longest-common-subsequence overlap. Empty candidate scores zero; an empty
// reference is an error.
RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference);

int lcs_length(const std::vector<std::string>& a,
               const std::vector<std::string>& b);

// Mean of the ROUGE-1/2/L recalls, used to pick oracle extractions.
// ROUGE-2 recall counts as 0 when the reference has fewer than 2 tokens.
double match_score(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference);

}  // namespace rewriter
