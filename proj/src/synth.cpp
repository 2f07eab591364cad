#include "rewriter/synth.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

namespace rewriter {

const char* const kPronToken = "it";
const char* const kRefToken = "ref";
const char* const kMarkerToken = "hl";

namespace {

bool numeric_suffix(const std::string& token, char prefix) {
  if (token.size() < 2 || token[0] != prefix) return false;
  for (size_t i = 1; i < token.size(); ++i) {
    if (token[i] < '0' || token[i] > '9') return false;
  }
  return true;
}

}  // namespace

bool is_entity_token(const std::string& token) {
  return numeric_suffix(token, 'e');
}

bool is_noise_token(const std::string& token) {
  return numeric_suffix(token, 'z');
}

void SynthConfig::validate() const {
  auto range_ok = [](int lo, int hi) { return lo >= 1 && lo <= hi; };
  if (!range_ok(min_doc_sentences, max_doc_sentences) ||
      !range_ok(min_summary_sentences, max_summary_sentences) ||
      !range_ok(min_content_tokens, max_content_tokens)) {
    throw DataError("synth config: empty size range");
  }
  auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!rate_ok(noise_rate) || !rate_ok(coref_rate) || !rate_ok(ref_rate) ||
      !rate_ok(shuffle_rate) || !rate_ok(duplicate_rate)) {
    throw DataError("synth config: rates must be in [0, 1]");
  }
  if (n_entities < 2 || n_noise < 1) {
    throw DataError("synth config: vocabulary too small");
  }
  if (n_content < max_doc_sentences * max_content_tokens) {
    throw DataError(
        "synth config: content vocabulary cannot cover a document without "
        "repeats");
  }
}

namespace {

int nearest_earlier_unselected(const std::vector<int>& selection, int sent) {
  std::set<int> selected(selection.begin(), selection.end());
  for (int i = sent - 1; i >= 0; --i) {
    if (selected.count(i) == 0) return i;
  }
  return -1;
}

}  // namespace

Sentence synth_gold_sentence(const Document& doc,
                             const std::vector<int>& selection, int j) {
  if (j < 0 || j >= static_cast<int>(selection.size())) {
    throw DataError("synth_gold_sentence: position out of range");
  }
  int src = selection[static_cast<size_t>(j)];
  int first = selection[0];
  const auto& tokens =
      doc.sentences.at(static_cast<size_t>(src)).tokens;
  const std::string& own_entity = tokens.at(0);
  const std::string& first_entity =
      doc.sentences.at(static_cast<size_t>(first)).tokens.at(0);

  Sentence out;
  out.tokens.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    if (is_noise_token(tok)) continue;
    if (tok == kRefToken) {
      int source = nearest_earlier_unselected(selection, src);
      if (source >= 0) {
        out.tokens.push_back(
            doc.sentences.at(static_cast<size_t>(source)).tokens.at(0));
      }
      continue;
    }
    if (i == 0 && j > 0 && own_entity == first_entity) {
      out.tokens.push_back(kPronToken);
      continue;
    }
    out.tokens.push_back(tok);
  }
  return out;
}

bool pron_entity_equivalent(const Sentence& a, const Sentence& b) {
  if (a.tokens.size() != b.tokens.size()) return false;
  for (size_t i = 0; i < a.tokens.size(); ++i) {
    const std::string& x = a.tokens[i];
    const std::string& y = b.tokens[i];
    if (x == y) continue;
    bool swap_ok = (x == kPronToken && is_entity_token(y)) ||
                   (y == kPronToken && is_entity_token(x));
    if (!swap_ok) return false;
  }
  return true;
}

std::vector<SummExample> synth_generate(const SynthConfig& config,
                                        int n_examples) {
  config.validate();
  if (n_examples < 1) throw DataError("synth_generate: n_examples must be >= 1");

  std::mt19937_64 rng(config.seed);
  auto uniform_int = [&rng](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  auto coin = [&rng](double p) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
  };

  std::vector<SummExample> corpus;
  corpus.reserve(static_cast<size_t>(n_examples));
  std::vector<int> content_pool(static_cast<size_t>(config.n_content));
  std::iota(content_pool.begin(), content_pool.end(), 0);

  for (int ex = 0; ex < n_examples; ++ex) {
    int n_doc = uniform_int(config.min_doc_sentences, config.max_doc_sentences);
    int n_sum = std::min(
        uniform_int(config.min_summary_sentences, config.max_summary_sentences),
        n_doc);

    // Selection: distinct sentences in document order, optionally shuffled,
    // optionally with one duplicated entry.
    std::vector<int> all(static_cast<size_t>(n_doc));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<int> selection(all.begin(), all.begin() + n_sum);
    std::sort(selection.begin(), selection.end());
    if (coin(config.shuffle_rate)) {
      std::shuffle(selection.begin(), selection.end(), rng);
    }
    if (n_sum >= 2 && coin(config.duplicate_rate)) {
      int pos = uniform_int(1, n_sum - 1);
      selection[static_cast<size_t>(pos)] =
          selection[static_cast<size_t>(pos - 1)];
    }
    std::set<int> selected_set(selection.begin(), selection.end());

    // Entities: the first selected sentence anchors coreference.
    std::vector<std::string> entity(static_cast<size_t>(n_doc));
    int anchor_entity = uniform_int(0, config.n_entities - 1);
    for (int i = 0; i < n_doc; ++i) {
      entity[static_cast<size_t>(i)] =
          "e" + std::to_string(uniform_int(0, config.n_entities - 1));
    }
    entity[static_cast<size_t>(selection[0])] =
        "e" + std::to_string(anchor_entity);
    for (size_t j = 1; j < selection.size(); ++j) {
      int sent = selection[j];
      if (sent == selection[0]) continue;
      if (coin(config.coref_rate)) {
        entity[static_cast<size_t>(sent)] = "e" + std::to_string(anchor_entity);
      } else {
        // Coreference must be decided by the coin alone, never by an
        // accidental entity collision with the anchor.
        int e = anchor_entity;
        while (e == anchor_entity) e = uniform_int(0, config.n_entities - 1);
        entity[static_cast<size_t>(sent)] = "e" + std::to_string(e);
      }
    }

    // Content words are unique within a document.
    std::shuffle(content_pool.begin(), content_pool.end(), rng);
    size_t next_content = 0;

    Document doc;
    doc.id = "synth-" + std::to_string(config.seed) + "-" + std::to_string(ex);
    for (int i = 0; i < n_doc; ++i) {
      bool selected = selected_set.count(i) > 0;
      int n_content_tokens =
          uniform_int(config.min_content_tokens, config.max_content_tokens);
      std::vector<std::string> body;
      for (int c = 0; c < n_content_tokens; ++c) {
        body.push_back("w" + std::to_string(content_pool[next_content++]));
      }
      if (selected && nearest_earlier_unselected(selection, i) >= 0 &&
          coin(config.ref_rate)) {
        int pos = uniform_int(0, static_cast<int>(body.size()));
        body.insert(body.begin() + pos, kRefToken);
      }

      Sentence s;
      s.tokens.push_back(entity[static_cast<size_t>(i)]);
      if (selected) s.tokens.push_back(kMarkerToken);
      for (const auto& tok : body) {
        s.tokens.push_back(tok);
        if (coin(config.noise_rate)) {
          s.tokens.push_back("z" + std::to_string(uniform_int(0, config.n_noise - 1)));
        }
      }
      doc.sentences.push_back(std::move(s));
    }

    SummExample example;
    example.document = std::move(doc);
    for (int j = 0; j < n_sum; ++j) {
      example.summary.push_back(
          synth_gold_sentence(example.document, selection, j));
    }
    example.oracle = OracleAlignment{selection};
    validate_example(example);
    corpus.push_back(std::move(example));
  }
  return corpus;
}

}  // namespace rewriter
