#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rewriter/textcore.hpp"

using namespace rewriter;

namespace {

Sentence sent(std::initializer_list<const char*> toks) {
  Sentence s;
  for (const char* t : toks) s.tokens.push_back(t);
  return s;
}

SummExample tiny_example(const std::string& id) {
  SummExample ex;
  ex.document.id = id;
  ex.document.sentences = {sent({"a", "b"}), sent({"c"})};
  ex.summary = {sent({"a"})};
  return ex;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("reserved token recognition") {
  CHECK(is_reserved_token("<PAD>"));
  CHECK(is_reserved_token("<UNK>"));
  CHECK(is_reserved_token("</S>"));
  CHECK(is_reserved_token("</SUM>"));
  CHECK(is_reserved_token("<S_0>"));
  CHECK(is_reserved_token("<S_17>"));
  CHECK_FALSE(is_reserved_token("<s_1>"));
  CHECK_FALSE(is_reserved_token("<S_>"));
  CHECK_FALSE(is_reserved_token("<S_1x>"));
  CHECK_FALSE(is_reserved_token("word"));
  CHECK(identifier_number("<S_42>") == 42);
  CHECK_FALSE(identifier_number("</S>").has_value());
}

TEST_CASE("vocab build maps frequent tokens and reserves the low ids") {
  std::vector<SummExample> corpus;
  SummExample ex;
  ex.document.id = "x";
  ex.document.sentences = {sent({"a", "b"})};
  ex.summary = {sent({"a"})};
  corpus.push_back(ex);

  Vocab v1 = Vocab::build(corpus, 1, 8);
  CHECK(v1.id("a") >= v1.first_word_id());
  CHECK(v1.id("b") >= v1.first_word_id());
  CHECK(v1.id("<S_3>") == v1.identifier_id(3));
  CHECK(v1.token(Vocab::kEosId) == "</S>");
  CHECK(v1.token(Vocab::kEosumId) == "</SUM>");

  Vocab v2 = Vocab::build(corpus, 2, 8);
  CHECK(v2.id("a") >= v2.first_word_id());  // freq 2
  CHECK(v2.id("b") == Vocab::kUnkId);       // freq 1, cut off

  Vocab v3 = Vocab::build(corpus, 1, 8);
  CHECK(v1.tokens() == v3.tokens());
  CHECK(v1.content_hash() == v3.content_hash());
}

TEST_CASE("vocab is a bijection on in-vocabulary tokens") {
  std::vector<SummExample> corpus{tiny_example("x")};
  Vocab v = Vocab::build(corpus, 1, 4);
  for (int id = 0; id < v.size(); ++id) {
    if (id == Vocab::kUnkId) continue;
    CHECK(v.id(v.token(id)) == id);
  }
  CHECK(v.id("nonexistent") == Vocab::kUnkId);
  CHECK_THROWS_AS(Vocab::build({}, 1, 4), DataError);
}

TEST_CASE("corpus round trip preserves every field") {
  std::vector<SummExample> corpus;
  for (int i = 0; i < 3; ++i) {
    SummExample ex = tiny_example("ex-" + std::to_string(i));
    if (i == 1) ex.oracle = OracleAlignment{{1}};
    corpus.push_back(ex);
  }
  std::string path = temp_path("rewriter_roundtrip.jsonl");
  write_corpus(path, corpus);
  std::vector<SummExample> back = read_corpus(path);
  REQUIRE(back.size() == corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) CHECK(back[i] == corpus[i]);
  // writing the re-read corpus produces identical bytes
  std::string path2 = temp_path("rewriter_roundtrip2.jsonl");
  write_corpus(path2, back);
  std::ifstream a(path), b(path2);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("corpus reader reports malformed lines and bad oracles") {
  std::string path = temp_path("rewriter_badline.jsonl");
  {
    std::ofstream out(path);
    out << R"({"id":"ok","document":[["a"]],"summary":[["a"]]})" << "\n";
    out << "{not json\n";
  }
  CorpusReader reader(path);
  CHECK(reader.next().has_value());
  try {
    reader.next();
    FAIL("expected a parse error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::remove(path.c_str());

  // oracle index out of range names the example
  CHECK_THROWS_WITH_AS(
      example_from_json_line(
          R"({"id":"bad-oracle","document":[["a"],["b"],["c"]],"summary":[["a"]],"oracle":[5]})",
          1),
      doctest::Contains("bad-oracle"), DataError);

  CHECK_THROWS_AS(
      example_from_json_line(R"({"id":"empty-doc","document":[],"summary":[["a"]]})", 1),
      DataError);
  CHECK_THROWS_AS(
      example_from_json_line(R"({"id":"empty-sum","document":[["a"]],"summary":[]})", 1),
      DataError);
  CHECK_THROWS_AS(
      example_from_json_line(
          R"({"id":"reserved","document":[["</S>"]],"summary":[["a"]]})", 1),
      DataError);
}

TEST_CASE("single-line corpus parses to one example") {
  SummExample ex = example_from_json_line(
      R"({"id":"one","document":[["hello","world"]],"summary":[["hello"]]})", 1);
  CHECK(ex.document.id == "one");
  REQUIRE(ex.document.sentences.size() == 1);
  CHECK(ex.document.sentences[0].tokens.size() == 2);
  REQUIRE(ex.summary.size() == 1);
  CHECK_FALSE(ex.oracle.has_value());
}

TEST_CASE("oracle length must match the summary") {
  SummExample ex = tiny_example("mismatch");
  ex.oracle = OracleAlignment{{0, 1}};  // summary has one sentence
  CHECK_THROWS_AS(validate_example(ex), DataError);
}
