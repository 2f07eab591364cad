#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rewriter/align.hpp"
#include "rewriter/model.hpp"
#include "rewriter/synth.hpp"

using namespace rewriter;

namespace {

Sentence sent(std::initializer_list<const char*> toks) {
  Sentence s;
  for (const char* t : toks) s.tokens.push_back(t);
  return s;
}

struct Fixture {
  std::vector<SummExample> corpus;
  Vocab vocab;
  TaggedSequence x, y;

  explicit Fixture(int max_tags = 6) {
    SummExample ex;
    ex.document.id = "f";
    ex.document.sentences = {sent({"w0", "w1", "w2"}), sent({"w3", "w4"}),
                             sent({"w5"})};
    ex.summary = {sent({"w3", "w4"}), sent({"w0", "w2"})};
    ex.oracle = OracleAlignment{{1, 0}};
    corpus.push_back(ex);
    vocab = Vocab::build(corpus, 1, max_tags);
    JointBuild b = build_joint(ex.document, *ex.oracle, ex.summary, vocab);
    x = b.source;
    y = b.target;
  }

  ModelConfig config(int d = 16, int heads = 2) const {
    ModelConfig c;
    c.d_model = d;
    c.heads = heads;
    c.enc_layers = 2;
    c.dec_layers = 2;
    c.ffn_dim = 2 * d;
    c.max_positions = 64;
    c.max_tags = vocab.max_identifier();
    c.dropout = 0.0;
    c.seed = 42;
    c.vocab_size = vocab.size();
    return c;
  }
};

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("encode output shape and tag addition") {
  Fixture f;
  RewriterModel model(f.config());
  Eigen::MatrixXd enc = model.encode(f.x);
  CHECK(enc.rows() == static_cast<long>(f.x.size()));
  CHECK(enc.cols() == model.config().d_model);

  // zeroed tag table: output equals the tag-free encoder, bit for bit
  RewriterModel no_tags = model;
  no_tags.block("emb_tag").value.setZero();
  TaggedSequence untagged = f.x;
  std::fill(untagged.tags.begin(), untagged.tags.end(), 0);
  Eigen::MatrixXd a = no_tags.encode(f.x);
  Eigen::MatrixXd b = no_tags.encode(untagged);
  CHECK((a.array() == b.array()).all());

  // with a live tag table, re-tagged positions move and others stay
  TaggedSequence retagged = f.x;
  std::vector<long> changed;
  for (size_t i = 0; i < retagged.tags.size(); ++i) {
    if (retagged.tags[i] == 2) {
      retagged.tags[i] = 5;
      changed.push_back(static_cast<long>(i));
    }
  }
  REQUIRE(!changed.empty());
  Eigen::MatrixXd c = model.encode(retagged);
  for (long i = 0; i < enc.rows(); ++i) {
    bool was_changed =
        std::find(changed.begin(), changed.end(), i) != changed.end();
    double diff = (enc.row(i) - c.row(i)).cwiseAbs().maxCoeff();
    if (was_changed) {
      CHECK(diff > 1e-8);
    } else {
      CHECK(diff == 0.0);
    }
  }

  // bounds checks
  TaggedSequence overflow = f.x;
  overflow.tags[0] = model.config().max_tags + 1;
  CHECK_THROWS_AS(model.encode(overflow), DataError);
}

TEST_CASE("decode_step is a normalized distribution over the vocabulary") {
  Fixture f;
  RewriterModel model(f.config());
  Eigen::MatrixXd enc = model.encode(f.x);

  TaggedSequence prefix;
  prefix.tokens.assign(f.y.tokens.begin(), f.y.tokens.begin() + 4);
  prefix.tags = group_tag(prefix.tokens, f.vocab);
  Eigen::VectorXd logp = model.decode_step(enc, prefix, f.vocab);
  CHECK(logp.size() == f.vocab.size());
  double lse = std::log(logp.array().exp().sum());
  CHECK(std::abs(lse) < 1e-5);

  // step-k output is unaffected by anything appended after k
  Eigen::MatrixXd full = model.forward_logprobs(f.x, f.y);
  CHECK(max_abs_diff(full.row(4), logp.transpose()) < 1e-9);

  // empty prefix scores the first position
  Eigen::VectorXd first = model.decode_step(enc, TaggedSequence{}, f.vocab);
  CHECK(max_abs_diff(full.row(0), first.transpose()) < 1e-9);

  // deterministic across two identically seeded models
  RewriterModel twin(f.config());
  Eigen::VectorXd logp2 = twin.decode_step(twin.encode(f.x), prefix, f.vocab);
  CHECK((logp.array() == logp2.array()).all());

  TaggedSequence bad = prefix;
  bad.tags.back() += 1;
  CHECK_THROWS_AS(model.decode_step(enc, bad, f.vocab), DataError);
}

TEST_CASE("uniform model loss is the weighted log-vocab size") {
  Fixture f;
  ModelConfig cfg = f.config(8, 2);
  cfg.gamma = 2.0;
  RewriterModel model(cfg);
  for (auto& b : model.blocks()) b.value.setZero();

  TaggedSequence y;
  y.tokens = {f.vocab.identifier_id(1), f.vocab.id("w0"), f.vocab.id("w1")};
  y.tags = group_tag(y.tokens, f.vocab);
  LossStats stats = model.loss(f.x, y);
  double ln_v = std::log(static_cast<double>(f.vocab.size()));
  CHECK(stats.weighted_sum == doctest::Approx(4.0 * ln_v));
  CHECK(stats.n_tokens == 3);

  // gamma = 1 equals the unweighted likelihood
  ModelConfig cfg1 = f.config(8, 2);
  cfg1.gamma = 1.0;
  RewriterModel plain(cfg1);
  for (auto& b : plain.blocks()) b.value.setZero();
  CHECK(plain.loss(f.x, y).weighted_sum == doctest::Approx(3.0 * ln_v));
}

TEST_CASE("analytic gradients match central finite differences") {
  Fixture f;
  ModelConfig cfg = f.config(8, 2);
  cfg.gamma = 2.0;  // exercise the weighted path
  RewriterModel model(cfg);

  model.zero_grad();
  model.loss_and_backward(f.x, f.y, nullptr);

  const double eps = 1e-3;
  const double rtol = 1e-2;
  int checked = 0;
  for (auto& block : model.blocks()) {
    Eigen::MatrixXd analytic = block.grad;
    long n = block.value.size();
    for (long k = 0; k < n; k += 5) {  // sampled sweep; acceptance does all
      double saved = block.value.data()[k];
      block.value.data()[k] = saved + eps;
      double up = model.loss(f.x, f.y).weighted_sum;
      block.value.data()[k] = saved - eps;
      double down = model.loss(f.x, f.y).weighted_sum;
      block.value.data()[k] = saved;
      double fd = (up - down) / (2.0 * eps);
      double got = analytic.data()[k];
      double rel = std::abs(got - fd) /
                   std::max({1e-6, std::abs(got), std::abs(fd)});
      CAPTURE(block.name);
      CAPTURE(k);
      CAPTURE(got);
      CAPTURE(fd);
      CHECK(rel < rtol);
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("the tag table is shared storage for encoder and decoder") {
  Fixture f;
  RewriterModel model(f.config());
  Eigen::MatrixXd enc_before = model.encode(f.x);
  Eigen::MatrixXd dec_before = model.forward_logprobs(f.x, f.y);

  model.block("emb_tag").value.row(2).array() += 0.5;
  Eigen::MatrixXd enc_after = model.encode(f.x);
  Eigen::MatrixXd dec_after = model.forward_logprobs(f.x, f.y);
  CHECK(max_abs_diff(enc_before, enc_after) > 1e-6);
  CHECK(max_abs_diff(dec_before, dec_after) > 1e-6);
}

TEST_CASE("incremental decoding matches the full recompute") {
  Fixture f;
  RewriterModel model(f.config());
  Eigen::MatrixXd enc = model.encode(f.x);
  Eigen::MatrixXd full = model.forward_logprobs(f.x, f.y);

  RewriterModel::DecoderState state = model.begin_decode(enc);
  CHECK(max_abs_diff(full.row(0), state.log_probs().transpose()) < 1e-9);
  for (size_t k = 0; k + 1 < f.y.tokens.size(); ++k) {
    model.advance(state, f.y.tokens[k], f.y.tags[k]);
    CHECK(max_abs_diff(full.row(static_cast<long>(k) + 1),
                       state.log_probs().transpose()) < 1e-9);
  }
  CHECK(state.length() == static_cast<int>(f.y.tokens.size()) - 1);

  // copied states evolve independently
  RewriterModel::DecoderState branch = state;
  model.advance(branch, f.y.tokens.back(), f.y.tags.back());
  CHECK(branch.length() == state.length() + 1);
}

TEST_CASE("lr_at implements the warmup schedule") {
  CHECK(lr_at(10000, 10000, 0.002) == doctest::Approx(2.0e-5));
  long warmup = 8000;
  double expected = 0.002 * (warmup / 2) * std::pow(double(warmup), -1.5);
  CHECK(lr_at(warmup / 2, warmup, 0.002) == doctest::Approx(expected));
  CHECK(lr_at(500, 500, 0.2) / lr_at(500, 500, 0.002) ==
        doctest::Approx(100.0));
  CHECK_THROWS_AS(lr_at(0, 100, 0.002), DataError);
}

TEST_CASE("training is deterministic and can overfit a tiny corpus") {
  SynthConfig sc;
  sc.seed = 3;
  sc.min_doc_sentences = 3;
  sc.max_doc_sentences = 4;
  sc.min_summary_sentences = 1;
  sc.max_summary_sentences = 2;
  sc.min_content_tokens = 2;
  sc.max_content_tokens = 4;
  sc.noise_rate = 0.2;
  sc.n_content = 40;
  auto corpus = synth_generate(sc, 10);
  Vocab vocab = Vocab::build(corpus, 1, 8);

  ModelConfig mc;
  mc.d_model = 32;
  mc.heads = 4;
  mc.enc_layers = 1;
  mc.dec_layers = 1;
  mc.ffn_dim = 64;
  mc.max_positions = 64;
  mc.max_tags = 8;
  mc.dropout = 0.0;
  mc.seed = 9;
  mc.vocab_size = vocab.size();

  TrainConfig tc;
  tc.max_steps = 300;
  tc.batch_tokens = 64;
  tc.warmup_dec = 40;
  tc.factor_dec = 0.06;
  tc.seed = 17;
  tc.log_interval = 100;

  RewriterModel model(mc);
  TrainStats stats =
      train(model, corpus, RewriteMode::kExternal, tc, vocab, nullptr);
  CHECK(stats.steps == 300);
  CHECK(stats.step_losses.back() < 0.1);
  double final_loss =
      evaluate_loss(model, corpus, RewriteMode::kExternal, vocab);
  CHECK(final_loss < 0.1);

  RewriterModel twin(mc);
  TrainStats stats2 =
      train(twin, corpus, RewriteMode::kExternal, tc, vocab, nullptr);
  REQUIRE(stats.step_losses.size() == stats2.step_losses.size());
  for (size_t i = 0; i < stats.step_losses.size(); ++i) {
    CHECK(stats.step_losses[i] == stats2.step_losses[i]);
  }

  // unlabeled examples are rejected by name
  auto unlabeled = corpus;
  unlabeled[3].oracle.reset();
  RewriterModel fresh(mc);
  CHECK_THROWS_WITH_AS(
      train(fresh, unlabeled, RewriteMode::kExternal, tc, vocab, nullptr),
      doctest::Contains(unlabeled[3].document.id.c_str()), DataError);
}

TEST_CASE("checkpoints round trip and refuse tampered vocabularies") {
  Fixture f;
  RewriterModel model(f.config());
  std::string path =
      (std::filesystem::temp_directory_path() / "rewriter_ckpt.bin").string();
  save_checkpoint(path, model, f.vocab);
  LoadedModel loaded = load_checkpoint(path);
  CHECK(loaded.vocab.tokens() == f.vocab.tokens());
  REQUIRE(loaded.model.blocks().size() == model.blocks().size());
  for (size_t i = 0; i < model.blocks().size(); ++i) {
    CHECK((loaded.model.blocks()[i].value.array() ==
           model.blocks()[i].value.array())
              .all());
  }
  CHECK(loaded.model.loss(f.x, f.y).weighted_sum ==
        doctest::Approx(model.loss(f.x, f.y).weighted_sum));

  // tamper with one vocabulary byte inside the file
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  size_t at = bytes.find("w1");
  REQUIRE(at != std::string::npos);
  bytes[at] = 'q';
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  std::remove(path.c_str());
}
