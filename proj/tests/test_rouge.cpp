#include <map>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "rewriter/rouge.hpp"

using namespace rewriter;

namespace {

using Tokens = std::vector<std::string>;

// Brute-force clipped n-gram overlap on explicit n-gram multisets.
RougeScore brute_rouge_n(const Tokens& cand, const Tokens& ref, int n) {
  auto grams = [n](const Tokens& t) {
    std::map<Tokens, int> out;
    for (size_t i = 0; i + n <= t.size(); ++i) {
      out[Tokens(t.begin() + i, t.begin() + i + n)]++;
    }
    return out;
  };
  auto cg = grams(cand);
  auto rg = grams(ref);
  int matched = 0, cand_total = 0, ref_total = 0;
  for (auto& [g, c] : rg) ref_total += c;
  for (auto& [g, c] : cg) {
    cand_total += c;
    auto it = rg.find(g);
    if (it != rg.end()) matched += std::min(c, it->second);
  }
  double r = ref_total ? double(matched) / ref_total : 0.0;
  double p = cand_total ? double(matched) / cand_total : 0.0;
  return make_rouge_score(r, p);
}

bool is_subsequence(const Tokens& needle, const Tokens& hay) {
  size_t i = 0;
  for (const auto& t : hay) {
    if (i < needle.size() && needle[i] == t) ++i;
  }
  return i == needle.size();
}

// Exhaustive LCS: enumerate every subsequence of the shorter side.
int brute_lcs(const Tokens& a, const Tokens& b) {
  const Tokens& small = a.size() <= b.size() ? a : b;
  const Tokens& big = a.size() <= b.size() ? b : a;
  int best = 0;
  for (unsigned mask = 0; mask < (1u << small.size()); ++mask) {
    Tokens sub;
    for (size_t i = 0; i < small.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(small[i]);
    }
    if (static_cast<int>(sub.size()) > best && is_subsequence(sub, big)) {
      best = static_cast<int>(sub.size());
    }
  }
  return best;
}

std::vector<Tokens> all_sequences(int max_len, int alphabet) {
  std::vector<std::string> symbols;
  for (int i = 0; i < alphabet; ++i) symbols.push_back(std::string(1, char('a' + i)));
  std::vector<Tokens> out{{}};
  std::vector<Tokens> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<Tokens> next;
    for (const auto& seq : frontier) {
      for (const auto& s : symbols) {
        Tokens t = seq;
        t.push_back(s);
        out.push_back(t);
        next.push_back(std::move(t));
      }
    }
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST_CASE("rouge_n identity and disjoint corners") {
  Tokens x{"a", "b", "c"};
  for (int n : {1, 2}) {
    RougeScore s = rouge_n(x, x, n);
    CHECK(s.recall == doctest::Approx(1.0));
    CHECK(s.precision == doctest::Approx(1.0));
    CHECK(s.f1 == doctest::Approx(1.0));
  }
  Tokens y{"d", "e", "f"};
  RougeScore s = rouge_n(x, y, 1);
  CHECK(s.recall == 0.0);
  CHECK(s.precision == 0.0);
  CHECK(s.f1 == 0.0);
}

TEST_CASE("rouge_n frozen values") {
  Tokens cand{"a", "b", "c"};
  Tokens ref{"a", "b", "d"};
  CHECK(rouge_n(cand, ref, 1).recall == doctest::Approx(2.0 / 3.0));
  CHECK(rouge_n(cand, ref, 2).recall == doctest::Approx(1.0 / 2.0));
}

TEST_CASE("rouge_n error paths") {
  Tokens one{"a"};
  CHECK_THROWS(rouge_n(one, one, 2));
  CHECK_THROWS(rouge_n(one, {}, 1));
}

TEST_CASE("rouge_l corners and frozen values") {
  Tokens x{"a", "b", "c"};
  RougeScore ident = rouge_l(x, x);
  CHECK(ident.recall == doctest::Approx(1.0));
  CHECK(ident.f1 == doctest::Approx(1.0));

  Tokens cand{"a", "c", "b"};
  Tokens ref{"a", "b", "c"};
  RougeScore s = rouge_l(cand, ref);
  CHECK(s.recall == doctest::Approx(2.0 / 3.0));
  CHECK(s.precision == doctest::Approx(2.0 / 3.0));

  RougeScore empty_cand = rouge_l({}, ref);
  CHECK(empty_cand.recall == 0.0);
  CHECK(empty_cand.f1 == 0.0);
  CHECK_THROWS(rouge_l(cand, {}));
}

TEST_CASE("match_score composes the three recalls") {
  Tokens cand{"a", "b", "c"};
  Tokens ref{"a", "b", "d"};
  CHECK(match_score(cand, cand) == doctest::Approx(1.0));
  CHECK(match_score(cand, ref) == doctest::Approx(11.0 / 18.0));
  // single-token reference: bigram recall counts as zero
  CHECK(match_score(cand, Tokens{"a"}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("rouge agrees with brute force on short sequences") {
  auto seqs = all_sequences(5, 3);
  for (const auto& cand : seqs) {
    for (const auto& ref : seqs) {
      if (!ref.empty()) {
        int lcs = brute_lcs(cand, ref);
        RougeScore got = rouge_l(cand, ref);
        CHECK(got.recall == doctest::Approx(double(lcs) / ref.size()));
        if (!cand.empty()) {
          CHECK(got.precision == doctest::Approx(double(lcs) / cand.size()));
        }
      }
      for (int n : {1, 2}) {
        if (static_cast<int>(ref.size()) < n) continue;
        RougeScore want = brute_rouge_n(cand, ref, n);
        RougeScore got = rouge_n(cand, ref, n);
        CHECK(got.recall == doctest::Approx(want.recall));
        CHECK(got.precision == doctest::Approx(want.precision));
        CHECK(got.f1 == doctest::Approx(want.f1));
      }
    }
  }
}

TEST_CASE("appending reference material never lowers recall") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> sym(0, 2);
  std::uniform_int_distribution<int> len(2, 8);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens ref, cand;
    int lr = len(rng), lc = len(rng);
    for (int i = 0; i < lr; ++i) ref.push_back(std::string(1, char('a' + sym(rng))));
    for (int i = 0; i < lc; ++i) cand.push_back(std::string(1, char('a' + sym(rng))));
    for (int n : {1, 2}) {
      double before = rouge_n(cand, ref, n).recall;
      Tokens extended = cand;
      size_t start = static_cast<size_t>(rng() % (ref.size() - n + 1));
      for (int i = 0; i < n; ++i) extended.push_back(ref[start + i]);
      double after = rouge_n(extended, ref, n).recall;
      CHECK(after >= before - 1e-12);
    }
  }
}
