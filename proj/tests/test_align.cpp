#include <random>

#include "doctest.h"
#include "rewriter/align.hpp"
#include "rewriter/rouge.hpp"

using namespace rewriter;

namespace {

Sentence sent(std::initializer_list<const char*> toks) {
  Sentence s;
  for (const char* t : toks) s.tokens.push_back(t);
  return s;
}

// Independent O(n^2) re-derivation: for each position look backwards for the
// nearest identifier, unless an end-of-sentence token intervenes.
std::vector<int> naive_group_tag(const std::vector<std::string>& tokens) {
  std::vector<int> tags(tokens.size(), 0);
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (auto k = identifier_number(tokens[i])) {
      tags[i] = *k;
      continue;
    }
    int tag = 0;
    for (size_t j = i; j-- > 0;) {
      if (tokens[j] == "</S>") break;
      if (auto k = identifier_number(tokens[j])) {
        tag = *k;
        break;
      }
    }
    tags[i] = tag;
  }
  return tags;
}

std::vector<std::string> random_mixed_sequence(std::mt19937_64& rng, int len,
                                               double identifier_density) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> word(0, 9);
  std::uniform_int_distribution<int> ident(0, 9);
  std::vector<std::string> out;
  for (int i = 0; i < len; ++i) {
    double r = unif(rng);
    if (r < identifier_density) {
      out.push_back("<S_" + std::to_string(ident(rng)) + ">");
    } else if (r < 2 * identifier_density) {
      out.push_back("</S>");
    } else {
      out.push_back("w" + std::to_string(word(rng)));
    }
  }
  return out;
}

Document make_doc(const std::string& id,
                  std::vector<std::vector<const char*>> sentences) {
  Document d;
  d.id = id;
  for (auto& s : sentences) {
    Sentence x;
    for (const char* t : s) x.tokens.push_back(t);
    d.sentences.push_back(std::move(x));
  }
  return d;
}

Vocab vocab_for(const std::vector<SummExample>& corpus, int k = 16) {
  return Vocab::build(corpus, 1, k);
}

}  // namespace

TEST_CASE("group_tag traces the tag automaton") {
  std::vector<std::string> mixed{"<S_3>", "w31", "w32", "</S>",
                                 "<S_5>", "w52", "w54", "</S>"};
  CHECK(group_tag(mixed) == std::vector<int>{3, 3, 3, 3, 5, 5, 5, 5});
  CHECK(group_tag(std::vector<std::string>{}) == std::vector<int>{});
  std::vector<std::string> partial{"<S_2>", "a", "</S>", "b", "<S_1>", "c"};
  CHECK(group_tag(partial) == std::vector<int>{2, 2, 2, 0, 1, 1});
}

TEST_CASE("group_tag equals the naive re-derivation on random sequences") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(0, 64);
  std::uniform_real_distribution<double> dens(0.0, 0.3);
  for (int trial = 0; trial < 1000; ++trial) {
    auto tokens = random_mixed_sequence(rng, len(rng), dens(rng));
    CHECK(group_tag(tokens) == naive_group_tag(tokens));
  }
}

TEST_CASE("group_tag over ids matches the lexical version") {
  SummExample ex;
  ex.document.id = "v";
  ex.document.sentences = {sent({"w0", "w1", "w2"})};
  ex.summary = {sent({"w0"})};
  Vocab v = vocab_for({ex});

  std::vector<std::string> mixed{"<S_2>", "w0", "</S>", "w1", "<S_1>", "w2"};
  std::vector<int> ids;
  for (const auto& t : mixed) ids.push_back(v.id(t));
  CHECK(group_tag(ids, v) == group_tag(mixed));
}

TEST_CASE("tag_of_next is the incremental view of group_tag") {
  SummExample ex;
  ex.document.id = "v";
  ex.document.sentences = {sent({"w0", "w1"})};
  ex.summary = {sent({"w0"})};
  Vocab v = vocab_for({ex});
  int w0 = v.id("w0");

  std::vector<int> after_close{v.identifier_id(2), w0, Vocab::kEosId};
  CHECK(tag_of_next(after_close, v.identifier_id(4), v) == 4);
  CHECK(tag_of_next(after_close, w0, v) == 0);
  std::vector<int> open{v.identifier_id(7), w0};
  CHECK(tag_of_next(open, w0, v) == 7);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    auto mixed = random_mixed_sequence(rng, 1 + int(rng() % 20), 0.2);
    std::vector<int> ids;
    for (const auto& t : mixed) ids.push_back(v.id(t));
    int candidate = ids.back();
    ids.pop_back();
    std::vector<int> full = ids;
    full.push_back(candidate);
    CHECK(tag_of_next(ids, candidate, v) == group_tag(full, v).back());
  }
}

TEST_CASE("oracle_extract picks the best-matching document sentence") {
  Document doc = make_doc("d", {{"x", "y"}, {"p", "q"}, {"a", "b", "c"}});
  std::vector<Sentence> summary{sent({"a", "b", "c"})};
  OracleAlignment got = oracle_extract(doc, summary);
  CHECK(got.indices == std::vector<int>{2});

  // duplicate summary sentences produce duplicate indices
  std::vector<Sentence> dup{sent({"a", "b", "c"}), sent({"a", "b", "c"})};
  CHECK(oracle_extract(doc, dup).indices == std::vector<int>{2, 2});
}

TEST_CASE("oracle_extract equals brute-force argmax on random documents") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> n_sent(1, 4);
  std::uniform_int_distribution<int> n_tok(1, 5);
  std::uniform_int_distribution<int> word(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    Document doc;
    doc.id = "r" + std::to_string(trial);
    int ns = n_sent(rng);
    for (int i = 0; i < ns; ++i) {
      Sentence s;
      int nt = n_tok(rng);
      for (int t = 0; t < nt; ++t) {
        s.tokens.push_back("w" + std::to_string(word(rng)));
      }
      doc.sentences.push_back(std::move(s));
    }
    std::vector<Sentence> summary;
    int nsum = 1 + int(rng() % 2);
    for (int j = 0; j < nsum; ++j) {
      Sentence s;
      int nt = n_tok(rng);
      for (int t = 0; t < nt; ++t) {
        s.tokens.push_back("w" + std::to_string(word(rng)));
      }
      summary.push_back(std::move(s));
    }

    OracleAlignment got = oracle_extract(doc, summary);
    REQUIRE(got.indices.size() == summary.size());
    for (size_t j = 0; j < summary.size(); ++j) {
      int best = 0;
      double best_score = -1.0;
      for (int i = 0; i < ns; ++i) {
        double s = match_score(doc.sentences[i].tokens, summary[j].tokens);
        if (s > best_score) {
          best_score = s;
          best = i;
        }
      }
      CHECK(got.indices[j] == best);
    }
  }
}

TEST_CASE("build_external tags selected sentences by summary position") {
  Document doc = make_doc("d6", {{"w0"}, {"w1"}, {"w2"}, {"w3"}, {"w4"}, {"w5"}});
  SummExample ex;
  ex.document = doc;
  ex.summary = {sent({"w2"}), sent({"w4"}), sent({"w1"})};
  Vocab v = vocab_for({ex});

  ExternalBuild b = build_external(doc, OracleAlignment{{2, 4, 1}}, v);
  CHECK(b.duplicate_positions.empty());
  CHECK(b.source.tags == group_tag(b.source.tokens, v));

  // per-sentence tags: sentence 1 -> 3, sentence 2 -> 1, sentence 4 -> 2, rest 0
  std::vector<int> expected_tag_per_sentence{0, 3, 1, 0, 2, 0};
  size_t pos = 0;
  for (int i = 0; i < 6; ++i) {
    // identifier + one word + </S> per sentence
    for (int t = 0; t < 3; ++t) {
      CHECK(b.source.tags[pos] == expected_tag_per_sentence[i]);
      ++pos;
    }
  }
  CHECK(pos == b.source.size());

  // the forced identifier template is <S_1>..<S_3>
  CHECK(b.target_template.tokens ==
        std::vector<int>{v.identifier_id(1), v.identifier_id(2),
                         v.identifier_id(3)});
  CHECK(b.target_template.tags == std::vector<int>{1, 2, 3});
}

TEST_CASE("build_external corner cases") {
  Document doc1 = make_doc("d1", {{"w0", "w1"}});
  SummExample ex;
  ex.document = doc1;
  ex.summary = {sent({"w0"})};
  Vocab v = vocab_for({ex});

  ExternalBuild b1 = build_external(doc1, OracleAlignment{{0}}, v);
  for (int tag : b1.source.tags) CHECK(tag == 1);

  // duplicate selection: lowest position wins, the rest is metadata
  Document doc2 = make_doc("d2", {{"w0"}, {"w1"}});
  ExternalBuild b2 = build_external(doc2, OracleAlignment{{0, 0}}, v);
  std::vector<int> tags_sentence0(b2.source.tags.begin(),
                                  b2.source.tags.begin() + 3);
  CHECK(tags_sentence0 == std::vector<int>{1, 1, 1});
  REQUIRE(b2.duplicate_positions.size() == 1);
  CHECK(b2.duplicate_positions[0] == std::pair<int, int>{2, 0});

  CHECK_THROWS_AS(build_external(doc1, OracleAlignment{{3}}, v), DataError);
}

TEST_CASE("build_joint reproduces the documented tag layout") {
  Document doc = make_doc("fig", {{"w0", "w1"},
                                  {"w2", "w3"},
                                  {"w4", "w5"},
                                  {"w6", "w7"},
                                  {"w8", "w9"},
                                  {"wa", "wb"}});
  SummExample ex;
  ex.document = doc;
  ex.summary = {sent({"y0", "y1"}), sent({"y2", "y3"}), sent({"y4", "y5"})};
  Vocab v = vocab_for({ex});

  // selections (1-based) 3, 5, 2; two word tokens per summary sentence
  JointBuild b = build_joint(doc, OracleAlignment{{2, 4, 1}}, ex.summary, v);

  std::vector<int> y_tags(b.target.tags.begin(), b.target.tags.end());
  std::vector<int> expected{3, 3, 3, 3, 5, 5, 5, 5, 2, 2, 2, 2, 0};
  CHECK(y_tags == expected);
  CHECK(b.target.tokens.back() == Vocab::kEosumId);
  CHECK(b.target.tags == group_tag(b.target.tokens, v));

  // the source carries natural identifiers 1..6
  std::vector<int> per_sentence;
  for (size_t i = 0; i < b.source.size(); i += 4) {
    per_sentence.push_back(b.source.tags[i]);
  }
  CHECK(per_sentence == std::vector<int>{1, 2, 3, 4, 5, 6});
  CHECK(b.source.tags == group_tag(b.source.tokens, v));
}

TEST_CASE("group tags of a mixed string sequence match the figure") {
  std::vector<std::string> y_prime{"<S_3>", "y0", "y1", "</S>",
                                   "<S_5>", "y2", "y3", "</S>",
                                   "<S_2>", "y4", "y5", "</S>"};
  CHECK(group_tag(y_prime) ==
        std::vector<int>{3, 3, 3, 3, 5, 5, 5, 5, 2, 2, 2, 2});
}

TEST_CASE("single-sentence joint build tags everything with 1") {
  Document doc = make_doc("one", {{"w0", "w1"}});
  SummExample ex;
  ex.document = doc;
  ex.summary = {sent({"w0"})};
  Vocab v = vocab_for({ex});
  JointBuild b = build_joint(doc, OracleAlignment{{0}}, ex.summary, v);
  for (int t : b.source.tags) CHECK(t == 1);
  for (size_t i = 0; i + 1 < b.target.tags.size(); ++i) {
    CHECK(b.target.tags[i] == 1);
  }
  CHECK(b.target.tags.back() == 0);  // end-of-summary token
}

TEST_CASE("build_two_stage fronts the selection block") {
  Document doc = make_doc("ts", {{"w0"}, {"w1"}, {"w2"}, {"w3"}, {"w4"}});
  SummExample ex;
  ex.document = doc;
  ex.summary = {sent({"y0"}), sent({"y1"}), sent({"y2"})};
  Vocab v = vocab_for({ex});
  JointBuild b = build_two_stage(doc, OracleAlignment{{2, 4, 1}}, ex.summary, v);

  std::vector<int> expected_head{v.identifier_id(3), v.identifier_id(5),
                                 v.identifier_id(2), Vocab::kEosId};
  std::vector<int> head(b.target.tokens.begin(), b.target.tokens.begin() + 4);
  CHECK(head == expected_head);
  // separator takes the last selection's tag, per the tag automaton
  std::vector<int> head_tags(b.target.tags.begin(), b.target.tags.begin() + 4);
  CHECK(head_tags == std::vector<int>{3, 5, 2, 2});
  CHECK(b.target.tags == group_tag(b.target.tokens, v));
  CHECK(b.target.tokens.back() == Vocab::kEosumId);
}

TEST_CASE("strip_extension inverts the document extension") {
  Document doc = make_doc("s", {{"w0", "w1"}, {"w2"}});
  SummExample ex;
  ex.document = doc;
  ex.summary = {sent({"w0"})};
  Vocab v = vocab_for({ex});
  TaggedSequence x = extend_document_natural(doc, v);
  auto sentences = strip_extension(x, v);
  REQUIRE(sentences.size() == 2);
  CHECK(sentences[0] == std::vector<int>{v.id("w0"), v.id("w1")});
  CHECK(sentences[1] == std::vector<int>{v.id("w2")});
}

TEST_CASE("build_source and build_target demand oracle labels") {
  SummExample ex;
  ex.document = make_doc("nolabel", {{"w0"}});
  ex.summary = {sent({"w0"})};
  Vocab v = vocab_for({ex});
  CHECK_THROWS_WITH_AS(build_source(ex, RewriteMode::kExternal, v),
                       doctest::Contains("nolabel"), DataError);
  CHECK_THROWS_AS(build_target(ex, RewriteMode::kJoint, v), DataError);
}
