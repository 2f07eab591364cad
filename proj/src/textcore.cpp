#include "rewriter/textcore.hpp"

#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"

namespace rewriter {

using nlohmann::json;

bool is_reserved_token(const std::string& token) {
  if (token == Vocab::kPadToken || token == Vocab::kUnkToken ||
      token == Vocab::kEosToken || token == Vocab::kEosumToken) {
    return true;
  }
  return identifier_number(token).has_value();
}

std::optional<int> identifier_number(const std::string& token) {
  // "<S_" digits ">"
  if (token.size() < 5 || token.compare(0, 3, "<S_") != 0 ||
      token.back() != '>') {
    return std::nullopt;
  }
  int value = 0;
  for (size_t i = 3; i + 1 < token.size(); ++i) {
    char c = token[i];
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + (c - '0');
    if (value > 1'000'000) return std::nullopt;
  }
  return value;
}

int Vocab::identifier_id(int k) const {
  if (k < 0 || k > max_identifier_) {
    throw DataError("identifier <S_" + std::to_string(k) +
                    "> out of range, max is " +
                    std::to_string(max_identifier_));
  }
  return 4 + k;
}

int Vocab::identifier_number_of(int id) const {
  if (id >= 4 && id <= 4 + max_identifier_) return id - 4;
  return -1;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<size_t>(id)];
}

std::vector<int> Vocab::encode(const Sentence& sentence) const {
  std::vector<int> ids;
  ids.reserve(sentence.tokens.size());
  for (const auto& tok : sentence.tokens) ids.push_back(id(tok));
  return ids;
}

std::uint64_t Vocab::content_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const auto& tok : id_to_token_) {
    for (char c : tok) mix(static_cast<unsigned char>(c));
    mix(0);
  }
  return h;
}

Vocab Vocab::build(const std::vector<SummExample>& corpus, int min_freq,
                   int max_identifier) {
  if (corpus.empty()) throw DataError("cannot build vocabulary: empty corpus");
  if (max_identifier < 1) {
    throw DataError("max_identifier must be >= 1");
  }

  std::unordered_map<std::string, int> freq;
  std::vector<std::string> order;  // first-appearance order
  auto count = [&](const Sentence& s) {
    for (const auto& tok : s.tokens) {
      int& f = freq[tok];
      if (f == 0) order.push_back(tok);
      ++f;
    }
  };
  for (const auto& ex : corpus) {
    for (const auto& s : ex.document.sentences) count(s);
    for (const auto& s : ex.summary) count(s);
  }

  std::vector<std::string> tokens;
  tokens.reserve(order.size() + 5 + static_cast<size_t>(max_identifier));
  tokens.push_back(kPadToken);
  tokens.push_back(kUnkToken);
  tokens.push_back(kEosToken);
  tokens.push_back(kEosumToken);
  for (int k = 0; k <= max_identifier; ++k) {
    tokens.push_back("<S_" + std::to_string(k) + ">");
  }
  for (const auto& tok : order) {
    if (freq[tok] >= min_freq) tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens), max_identifier);
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens, int max_identifier) {
  Vocab v;
  v.max_identifier_ = max_identifier;
  v.id_to_token_ = std::move(tokens);
  size_t reserved = 4 + static_cast<size_t>(max_identifier) + 1;
  if (v.id_to_token_.size() < reserved) {
    throw DataError("vocabulary shorter than its reserved prefix");
  }
  for (size_t i = 0; i < v.id_to_token_.size(); ++i) {
    auto [it, inserted] =
        v.token_to_id_.emplace(v.id_to_token_[i], static_cast<int>(i));
    if (!inserted) {
      throw DataError("duplicate vocabulary entry: " + v.id_to_token_[i]);
    }
  }
  return v;
}

void validate_example(const SummExample& example) {
  const std::string& id = example.document.id;
  if (example.document.sentences.empty()) {
    throw DataError("example " + id + ": empty document");
  }
  if (example.summary.empty()) {
    throw DataError("example " + id + ": empty summary");
  }
  auto check_sentence = [&id](const Sentence& s, const char* where) {
    if (s.tokens.empty()) {
      throw DataError("example " + id + ": empty sentence in " + where);
    }
    for (const auto& tok : s.tokens) {
      if (tok.empty()) {
        throw DataError("example " + id + ": empty token in " + where);
      }
      if (is_reserved_token(tok)) {
        throw DataError("example " + id + ": reserved token \"" + tok +
                        "\" in " + where);
      }
    }
  };
  for (const auto& s : example.document.sentences)
    check_sentence(s, "document");
  for (const auto& s : example.summary) check_sentence(s, "summary");
  if (example.oracle) {
    const auto& idx = example.oracle->indices;
    if (idx.size() != example.summary.size()) {
      throw DataError("example " + id + ": oracle length " +
                      std::to_string(idx.size()) + " != summary length " +
                      std::to_string(example.summary.size()));
    }
    int n = static_cast<int>(example.document.sentences.size());
    for (int i : idx) {
      if (i < 0 || i >= n) {
        throw DataError("example " + id + ": oracle index " +
                        std::to_string(i) + " out of range for " +
                        std::to_string(n) + "-sentence document");
      }
    }
  }
}

namespace {

std::vector<Sentence> sentences_from_json(const json& j, const std::string& id,
                                          const char* field) {
  if (!j.is_array()) {
    throw DataError("example " + id + ": \"" + field +
                    "\" must be an array of sentences");
  }
  std::vector<Sentence> out;
  out.reserve(j.size());
  for (const auto& sent : j) {
    if (!sent.is_array()) {
      throw DataError("example " + id + ": sentence in \"" + field +
                      "\" must be an array of tokens");
    }
    Sentence s;
    s.tokens.reserve(sent.size());
    for (const auto& tok : sent) {
      if (!tok.is_string()) {
        throw DataError("example " + id + ": token in \"" + field +
                        "\" must be a string");
      }
      s.tokens.push_back(tok.get<std::string>());
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

SummExample example_from_json_line(const std::string& line, int line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError("line " + std::to_string(line_number) +
                    ": malformed JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
    throw DataError("line " + std::to_string(line_number) +
                    ": missing string field \"id\"");
  }
  SummExample ex;
  ex.document.id = j["id"].get<std::string>();
  if (!j.contains("document") || !j.contains("summary")) {
    throw DataError("example " + ex.document.id +
                    ": missing \"document\" or \"summary\"");
  }
  ex.document.sentences =
      sentences_from_json(j["document"], ex.document.id, "document");
  ex.summary = sentences_from_json(j["summary"], ex.document.id, "summary");
  if (j.contains("oracle") && !j["oracle"].is_null()) {
    if (!j["oracle"].is_array()) {
      throw DataError("example " + ex.document.id +
                      ": \"oracle\" must be an array of indices");
    }
    OracleAlignment oracle;
    for (const auto& v : j["oracle"]) {
      if (!v.is_number_integer()) {
        throw DataError("example " + ex.document.id +
                        ": oracle entries must be integers");
      }
      oracle.indices.push_back(v.get<int>());
    }
    ex.oracle = std::move(oracle);
  }
  validate_example(ex);
  return ex;
}

std::string example_to_json_line(const SummExample& example) {
  json j;
  j["id"] = example.document.id;
  auto sentences_to_json = [](const std::vector<Sentence>& sents) {
    json arr = json::array();
    for (const auto& s : sents) arr.push_back(s.tokens);
    return arr;
  };
  j["document"] = sentences_to_json(example.document.sentences);
  j["summary"] = sentences_to_json(example.summary);
  if (example.oracle) j["oracle"] = example.oracle->indices;
  return j.dump();
}

struct CorpusReader::Impl {
  std::ifstream in;
  std::string path;
  int line_number = 0;
};

CorpusReader::CorpusReader(const std::string& path)
    : impl_(std::make_unique<Impl>()) {
  impl_->in.open(path);
  impl_->path = path;
  if (!impl_->in) throw DataError("cannot open corpus file: " + path);
}

CorpusReader::~CorpusReader() = default;

std::optional<SummExample> CorpusReader::next() {
  std::string line;
  while (std::getline(impl_->in, line)) {
    ++impl_->line_number;
    if (line.empty()) continue;
    return example_from_json_line(line, impl_->line_number);
  }
  return std::nullopt;
}

std::vector<SummExample> read_corpus(const std::string& path) {
  CorpusReader reader(path);
  std::vector<SummExample> out;
  while (auto ex = reader.next()) out.push_back(std::move(*ex));
  return out;
}

void write_corpus(const std::string& path,
                  const std::vector<SummExample>& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open output file: " + path);
  for (const auto& ex : corpus) {
    validate_example(ex);
    out << example_to_json_line(ex) << '\n';
  }
  if (!out.good()) throw DataError("write failed: " + path);
}

}  // namespace rewriter
