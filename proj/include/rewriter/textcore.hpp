#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace rewriter {

// A whitespace-pretokenized sentence. Tokens must be non-empty and must not
// collide with reserved tokens (see is_reserved_token).
struct Sentence {
  std::vector<std::string> tokens;

  bool operator==(const Sentence&) const = default;
};

struct Document {
  std::string id;
  std::vector<Sentence> sentences;

  bool operator==(const Document&) const = default;
};

// One extracted document sentence per summary sentence, in summary order.
// Duplicate indices are permitted.
struct OracleAlignment {
  std::vector<int> indices;

  bool operator==(const OracleAlignment&) const = default;
};

struct SummExample {
  Document document;
  std::vector<Sentence> summary;
  std::optional<OracleAlignment> oracle;

  bool operator==(const SummExample&) const = default;
};

// Thrown for malformed corpora, invalid examples, and checkpoint mismatches.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Reserved token surface forms.
//   <PAD>          padding (id 0, unused in sequences)
//   <UNK>          unknown word (id 1)
//   </S>           end of sentence (id 2)
//   </SUM>         end of summary / decoder start (id 3)
//   <S_0>..<S_K>   sentence identifier tokens (ids 4 .. 4+K)
bool is_reserved_token(const std::string& token);

// Parses "<S_k>" and returns k, or nullopt for any other surface form.
std::optional<int> identifier_number(const std::string& token);

// Token <-> id mapping with a fixed reserved prefix. Immutable once built.
class Vocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kEosId = 2;    // "</S>"
  static constexpr int kEosumId = 3;  // "</SUM>"

  static constexpr const char* kPadToken = "<PAD>";
  static constexpr const char* kUnkToken = "<UNK>";
  static constexpr const char* kEosToken = "</S>";
  static constexpr const char* kEosumToken = "</SUM>";

  Vocab() = default;

  // Identifier <S_k> for k in [0, max_identifier].
  int identifier_id(int k) const;
  // k for an identifier id, -1 otherwise.
  int identifier_number_of(int id) const;
  bool is_identifier(int id) const { return identifier_number_of(id) >= 0; }
  bool is_special(int id) const { return id < first_word_id(); }

  int max_identifier() const { return max_identifier_; }
  int first_word_id() const { return 4 + max_identifier_ + 1; }
  int size() const { return static_cast<int>(id_to_token_.size()); }

  // Unknown tokens map to kUnkId.
  int id(const std::string& token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(const Sentence& sentence) const;

  // FNV-1a over the id-ordered token list. Used to bind checkpoints to the
  // vocabulary they were trained with.
  std::uint64_t content_hash() const;

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  // Builds from a corpus: reserved tokens first, then every word with
  // frequency >= min_freq in order of first appearance.
  static Vocab build(const std::vector<SummExample>& corpus, int min_freq,
                     int max_identifier);

  // Reconstructs from an id-ordered token list (checkpoint loading).
  static Vocab from_tokens(std::vector<std::string> tokens,
                           int max_identifier);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  int max_identifier_ = 0;
};

// Throws DataError if the example violates any structural invariant:
// empty document/summary, empty sentences, reserved tokens in text, or an
// oracle whose length or indices do not fit the example.
void validate_example(const SummExample& example);

// JSON Lines corpus, one example per line:
//   {"id": str, "document": [[tok,...],...], "summary": [[tok,...],...],
//    "oracle": [int,...]}         (oracle optional, 0-based)
std::vector<SummExample> read_corpus(const std::string& path);
void write_corpus(const std::string& path,
                  const std::vector<SummExample>& corpus);

// Streaming single-consumer reader for large corpora.
class CorpusReader {
 public:
  explicit CorpusReader(const std::string& path);
  ~CorpusReader();
  CorpusReader(const CorpusReader&) = delete;
  CorpusReader& operator=(const CorpusReader&) = delete;

  // Returns nullopt at end of file.
  std::optional<SummExample> next();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SummExample example_from_json_line(const std::string& line, int line_number);
std::string example_to_json_line(const SummExample& example);

}  // namespace rewriter
