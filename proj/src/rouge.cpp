#include "rewriter/rouge.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace rewriter {

RougeScore make_rouge_score(double recall, double precision) {
  RougeScore s;
  s.recall = recall;
  s.precision = precision;
  s.f1 = (recall + precision > 0.0)
             ? 2.0 * precision * recall / (precision + recall)
             : 0.0;
  return s;
}

namespace {

std::unordered_map<std::string, int> ngram_counts(
    const std::vector<std::string>& tokens, int n) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key.push_back('\x1f');  // unit separator, cannot occur in tokens
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n) {
  if (n != 1 && n != 2) throw std::invalid_argument("rouge_n: n must be 1 or 2");
  if (static_cast<int>(reference.size()) < n) {
    throw std::invalid_argument("rouge_n: reference shorter than n");
  }
  auto ref_counts = ngram_counts(reference, n);
  auto cand_counts = ngram_counts(candidate, n);

  long ref_total = 0;
  long cand_total = 0;
  long matched = 0;
  for (const auto& [gram, c] : ref_counts) ref_total += c;
  for (const auto& [gram, c] : cand_counts) {
    cand_total += c;
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) matched += std::min(c, it->second);
  }
  double recall = ref_total > 0 ? static_cast<double>(matched) / ref_total : 0.0;
  double precision =
      cand_total > 0 ? static_cast<double>(matched) / cand_total : 0.0;
  return make_rouge_score(recall, precision);
}

int lcs_length(const std::vector<std::string>& a,
               const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  // Two-row dynamic program.
  std::vector<int> prev(b.size() + 1, 0);
  std::vector<int> curr(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1]) {
        curr[j] = prev[j - 1] + 1;
      } else {
        curr[j] = std::max(prev[j], curr[j - 1]);
      }
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference) {
  if (reference.empty()) {
    throw std::invalid_argument("rouge_l: empty reference");
  }
  if (candidate.empty()) return make_rouge_score(0.0, 0.0);
  int lcs = lcs_length(candidate, reference);
  double recall = static_cast<double>(lcs) / reference.size();
  double precision = static_cast<double>(lcs) / candidate.size();
  return make_rouge_score(recall, precision);
}

double match_score(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference) {
  if (reference.empty()) {
    throw std::invalid_argument("match_score: empty reference");
  }
  double r1 = rouge_n(candidate, reference, 1).recall;
  double r2 = reference.size() >= 2 ? rouge_n(candidate, reference, 2).recall
                                    : 0.0;
  double rl = rouge_l(candidate, reference).recall;
  return (r1 + r2 + rl) / 3.0;
}

}  // namespace rewriter
