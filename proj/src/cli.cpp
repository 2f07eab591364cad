#include "rewriter/cli.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "CLI11.hpp"
#include "json.hpp"
#include "rewriter/analysis.hpp"
#include "rewriter/decode.hpp"
#include "rewriter/logging.hpp"
#include "rewriter/model.hpp"
#include "rewriter/synth.hpp"
#include "rewriter/textcore.hpp"

namespace rewriter {

namespace {

using nlohmann::json;

RewriteMode parse_mode(const std::string& name) {
  if (name == "external") return RewriteMode::kExternal;
  if (name == "joint") return RewriteMode::kJoint;
  if (name == "joint_two_stage") return RewriteMode::kJointTwoStage;
  throw CLI::ValidationError("--mode",
                             "expected external|joint|joint_two_stage");
}

struct DecodeFlags {
  int beam = 5;
  int min_len = 50;
  int max_len = 200;
  double alpha = 0.95;
  bool no_trigram_block = false;
  bool dedup = false;
  std::string mode = "external";

  void attach(CLI::App* cmd) {
    cmd->add_option("--beam", beam, "beam size");
    cmd->add_option("--min-len", min_len, "minimum decode length");
    cmd->add_option("--max-len", max_len, "maximum decode length");
    cmd->add_option("--alpha", alpha, "length penalty exponent");
    cmd->add_flag("--no-trigram-block", no_trigram_block,
                  "disable trigram blocking");
    cmd->add_flag("--dedup", dedup, "forbid duplicate selections");
    cmd->add_option("--mode", mode, "external|joint|joint_two_stage");
  }

  DecodeConfig config() const {
    DecodeConfig cfg;
    cfg.beam_size = beam;
    cfg.min_length = min_len;
    cfg.max_length = max_len;
    cfg.alpha = alpha;
    cfg.trigram_block = !no_trigram_block;
    cfg.dedup_selections = dedup;
    cfg.mode = parse_mode(mode);
    return cfg;
  }
};

OracleAlignment lead3_alignment(const Document& doc) {
  OracleAlignment a;
  int n = std::min<int>(3, static_cast<int>(doc.sentences.size()));
  for (int i = 0; i < n; ++i) a.indices.push_back(i);
  return a;
}

std::unordered_map<std::string, OracleAlignment> read_selection_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open selection file: " + path);
  std::unordered_map<std::string, OracleAlignment> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("id")) {
      throw DataError("selection file line " + std::to_string(line_no) +
                      ": expected {\"id\", \"selected\"|\"oracle\"}");
    }
    const char* key = j.contains("selected") ? "selected" : "oracle";
    if (!j.contains(key) || !j[key].is_array()) {
      throw DataError("selection file line " + std::to_string(line_no) +
                      ": missing selection array");
    }
    OracleAlignment a;
    for (const auto& v : j[key]) a.indices.push_back(v.get<int>());
    out[j["id"].get<std::string>()] = std::move(a);
  }
  return out;
}

// ---- synth ----

int cmd_synth(const std::string& out_path, const SynthConfig& config, int n) {
  auto corpus = synth_generate(config, n);
  write_corpus(out_path, corpus);
  log_kv(1, "synth_done",
         {{"examples", std::to_string(corpus.size())}, {"out", out_path}});
  return 0;
}

// ---- label ----

int cmd_label(const std::string& in_path, const std::string& out_path) {
  std::vector<SummExample> corpus = read_corpus(in_path);
  for (auto& ex : corpus) {
    ex.oracle = oracle_extract(ex.document, ex.summary);
  }
  write_corpus(out_path, corpus);
  log_kv(1, "label_done",
         {{"examples", std::to_string(corpus.size())}, {"out", out_path}});
  return 0;
}

// ---- train ----

struct TrainFlags {
  std::string in_path, out_path, dev_path, mode = "external";
  int min_freq = 1;
  ModelConfig model;
  TrainConfig train_cfg;
};

int cmd_train(const TrainFlags& flags) {
  std::vector<SummExample> corpus = read_corpus(flags.in_path);
  Vocab vocab = Vocab::build(corpus, flags.min_freq, flags.model.max_tags);
  ModelConfig mc = flags.model;
  mc.vocab_size = vocab.size();
  RewriterModel model(mc);
  log_kv(1, "train_begin",
         {{"examples", std::to_string(corpus.size())},
          {"vocab", std::to_string(vocab.size())},
          {"params", std::to_string(model.parameter_count())}});

  std::vector<SummExample> dev;
  if (!flags.dev_path.empty()) dev = read_corpus(flags.dev_path);
  TrainConfig tc = flags.train_cfg;
  tc.checkpoint_path = flags.out_path;
  TrainStats stats = train(model, corpus, parse_mode(flags.mode), tc, vocab,
                           dev.empty() ? nullptr : &dev);
  log_kv(1, "train_done",
         {{"steps", std::to_string(stats.steps)},
          {"loss", fmt_double(stats.final_loss)},
          {"out", flags.out_path}});
  return 0;
}

// ---- summarize ----

struct SummarizeFlags {
  std::string model_path, in_path, out_path;
  std::string extractor = "oracle";
  DecodeFlags decode;
  int jobs = 1;
  long limit = 0;
};

json summary_to_json(const SummaryOutput& out) {
  json j;
  j["id"] = out.id;
  json sents = json::array();
  for (const auto& s : out.summary) sents.push_back(s.tokens);
  j["summary"] = sents;
  j["selected"] = out.selected;
  j["fallback_used"] = out.fallback_used;
  return j;
}

int cmd_summarize(const SummarizeFlags& flags) {
  LoadedModel loaded = load_checkpoint(flags.model_path);
  std::vector<SummExample> corpus = read_corpus(flags.in_path);
  if (flags.limit > 0 && static_cast<long>(corpus.size()) > flags.limit) {
    corpus.resize(static_cast<size_t>(flags.limit));
  }
  DecodeConfig cfg = flags.decode.config();

  std::unordered_map<std::string, OracleAlignment> from_file;
  bool use_file = flags.extractor.rfind("file:", 0) == 0;
  if (use_file) from_file = read_selection_file(flags.extractor.substr(5));
  if (!use_file && flags.extractor != "oracle" && flags.extractor != "lead3") {
    throw DataError("unknown extractor: " + flags.extractor +
                    " (expected oracle|lead3|file:<path>)");
  }

  auto alignment_for = [&](const SummExample& ex) -> OracleAlignment {
    if (flags.extractor == "oracle") {
      if (!ex.oracle) {
        throw DataError("example " + ex.document.id +
                        " has no oracle labels; run the labeler first");
      }
      return *ex.oracle;
    }
    if (flags.extractor == "lead3") return lead3_alignment(ex.document);
    auto it = from_file.find(ex.document.id);
    if (it == from_file.end()) {
      throw DataError("selection file has no entry for " + ex.document.id);
    }
    return it->second;
  };

  size_t n = corpus.size();
  std::vector<SummaryOutput> outputs(n);
  std::atomic<size_t> cursor{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (size_t k; (k = cursor.fetch_add(1)) < n;) {
      try {
        const SummExample& ex = corpus[k];
        if (cfg.mode == RewriteMode::kExternal) {
          OracleAlignment a = alignment_for(ex);
          outputs[k] = summarize(loaded.model, ex.document, cfg.mode, cfg,
                                 loaded.vocab, &a);
        } else {
          outputs[k] = summarize(loaded.model, ex.document, cfg.mode, cfg,
                                 loaded.vocab, nullptr);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        cursor.store(n);
        return;
      }
    }
  };
  int jobs = std::max(1, flags.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  std::ofstream out(flags.out_path, std::ios::trunc);
  if (!out) throw DataError("cannot open output file: " + flags.out_path);
  long fallbacks = 0;
  for (const auto& o : outputs) {
    out << summary_to_json(o).dump() << '\n';
    if (o.fallback_used) ++fallbacks;
  }
  if (!out.good()) throw DataError("write failed: " + flags.out_path);
  log_kv(1, "summarize_done",
         {{"examples", std::to_string(n)},
          {"fallbacks", std::to_string(fallbacks)},
          {"out", flags.out_path}});
  return 0;
}

// ---- evaluate / analyze shared ----

struct HypEntry {
  std::string id;
  std::vector<Sentence> summary;
  std::vector<int> selected;
};

std::vector<HypEntry> read_hypotheses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open hypothesis file: " + path);
  std::vector<HypEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("id") || !j.contains("summary")) {
      throw DataError("hypothesis file line " + std::to_string(line_no) +
                      ": expected {\"id\", \"summary\", ...}");
    }
    HypEntry e;
    e.id = j["id"].get<std::string>();
    for (const auto& sent : j["summary"]) {
      Sentence s;
      for (const auto& tok : sent) s.tokens.push_back(tok.get<std::string>());
      e.summary.push_back(std::move(s));
    }
    if (j.contains("selected")) {
      for (const auto& v : j["selected"]) e.selected.push_back(v.get<int>());
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::unordered_map<std::string, const SummExample*> index_by_id(
    const std::vector<SummExample>& corpus) {
  std::unordered_map<std::string, const SummExample*> out;
  for (const auto& ex : corpus) out[ex.document.id] = &ex;
  return out;
}

int cmd_evaluate(const std::string& hyp_path, const std::string& ref_path) {
  std::vector<HypEntry> hyps = read_hypotheses(hyp_path);
  std::vector<SummExample> refs = read_corpus(ref_path);
  auto by_id = index_by_id(refs);
  std::vector<std::vector<Sentence>> hyp_summaries, ref_summaries;
  for (const auto& h : hyps) {
    auto it = by_id.find(h.id);
    if (it == by_id.end()) {
      throw DataError("reference corpus has no example with id " + h.id);
    }
    hyp_summaries.push_back(h.summary);
    ref_summaries.push_back(it->second->summary);
  }
  RougeTriple t = evaluate_summaries(hyp_summaries, ref_summaries);
  auto print = [](const char* name, const RougeScore& s) {
    std::cout << name << "_recall=" << fmt_double(s.recall) << '\n'
              << name << "_precision=" << fmt_double(s.precision) << '\n'
              << name << "_f1=" << fmt_double(s.f1) << '\n';
  };
  print("rouge1", t.r1);
  print("rouge2", t.r2);
  print("rougel", t.rl);
  std::cout << "n_examples=" << hyps.size() << '\n';
  return 0;
}

// ---- analyze ----

int cmd_analyze_report(const std::string& hyp_path, const std::string& ref_path,
                       const std::string& out_dir) {
  std::vector<HypEntry> hyps = read_hypotheses(hyp_path);
  std::vector<SummExample> refs = read_corpus(ref_path);
  auto by_id = index_by_id(refs);
  std::filesystem::create_directories(out_dir);

  long counts[3] = {0, 0, 0};
  std::vector<OracleAlignment> alignments;
  int max_doc_sentences = 0;
  std::vector<std::vector<Sentence>> hyp_summaries, ref_summaries;
  for (const auto& h : hyps) {
    auto it = by_id.find(h.id);
    if (it == by_id.end()) {
      throw DataError("reference corpus has no example with id " + h.id);
    }
    const SummExample& ex = *it->second;
    hyp_summaries.push_back(h.summary);
    ref_summaries.push_back(ex.summary);
    max_doc_sentences = std::max(
        max_doc_sentences, static_cast<int>(ex.document.sentences.size()));
    alignments.push_back(OracleAlignment{h.selected});
    for (size_t j = 0; j < h.summary.size() && j < h.selected.size(); ++j) {
      int src = h.selected[j];
      if (src < 0 || src >= static_cast<int>(ex.document.sentences.size())) {
        throw DataError("hypothesis " + h.id + " selects sentence " +
                        std::to_string(src) + " outside its document");
      }
      EditCategory c = categorize_edit(
          ex.document.sentences[static_cast<size_t>(src)], h.summary[j]);
      ++counts[static_cast<int>(c)];
    }
  }

  ExtractionHistogram hist =
      extraction_histogram(alignments, std::max(1, max_doc_sentences));
  {
    std::ofstream csv(out_dir + "/extraction_histogram.csv");
    csv << "position,proportion,duplicate_proportion\n";
    for (size_t i = 0; i < hist.positions.size(); ++i) {
      csv << i << ',' << fmt_double(hist.positions[i]) << ','
          << fmt_double(hist.duplicates[i]) << '\n';
    }
  }
  long total_edits = counts[0] + counts[1] + counts[2];
  {
    std::ofstream csv(out_dir + "/edit_categories.csv");
    csv << "category,count,proportion\n";
    for (int c = 0; c < 3; ++c) {
      double prop = total_edits > 0
                        ? static_cast<double>(counts[c]) / total_edits
                        : 0.0;
      csv << edit_category_name(static_cast<EditCategory>(c)) << ','
          << counts[c] << ',' << fmt_double(prop) << '\n';
    }
  }
  {
    std::ofstream txt(out_dir + "/summary.txt");
    txt << "examples: " << hyps.size() << '\n';
    txt << "mean_words_hyp: " << fmt_double(word_count_stats(hyp_summaries))
        << '\n';
    txt << "mean_words_ref: " << fmt_double(word_count_stats(ref_summaries))
        << '\n';
    txt << "selections: " << hist.n_selections << '\n';
    txt << "duplicate_selections: " << hist.n_duplicates << '\n';
    for (int c = 0; c < 3; ++c) {
      double prop = total_edits > 0
                        ? static_cast<double>(counts[c]) / total_edits
                        : 0.0;
      txt << "edit_" << edit_category_name(static_cast<EditCategory>(c))
          << ": " << fmt_double(prop) << '\n';
    }
  }
  log_kv(1, "analyze_report_done", {{"out_dir", out_dir}});
  return 0;
}

int cmd_analyze_blocking(const std::string& model_path,
                         const std::string& in_path,
                         const std::string& out_path, const DecodeFlags& flags,
                         long limit) {
  LoadedModel loaded = load_checkpoint(model_path);
  std::vector<SummExample> corpus = read_corpus(in_path);
  if (limit > 0 && static_cast<long>(corpus.size()) > limit) {
    corpus.resize(static_cast<size_t>(limit));
  }
  BlockingSensitivity result = blocking_sensitivity(
      loaded.model, corpus, flags.config(), loaded.vocab);
  std::ofstream csv(out_path, std::ios::trunc);
  if (!csv) throw DataError("cannot open output file: " + out_path);
  csv << "metric,with_blocking,without_blocking,delta\n";
  auto row = [&csv](const char* name, double on, double off) {
    csv << name << ',' << fmt_double(on) << ',' << fmt_double(off) << ','
        << fmt_double(on - off) << '\n';
  };
  row("rouge1_f1", result.with_blocking.r1.f1, result.without_blocking.r1.f1);
  row("rouge2_f1", result.with_blocking.r2.f1, result.without_blocking.r2.f1);
  row("rougel_f1", result.with_blocking.rl.f1, result.without_blocking.rl.f1);
  row("rouge1_recall", result.with_blocking.r1.recall,
      result.without_blocking.r1.recall);
  row("rouge2_recall", result.with_blocking.r2.recall,
      result.without_blocking.r2.recall);
  row("rougel_recall", result.with_blocking.rl.recall,
      result.without_blocking.rl.recall);
  log_kv(1, "analyze_blocking_done",
         {{"examples", std::to_string(result.n_examples)},
          {"mean_f1_delta", fmt_double(result.mean_f1_delta())},
          {"out", out_path}});
  return 0;
}

int cmd_analyze_tagswap(const std::string& model_path,
                        const std::string& in_path,
                        const std::string& out_path, const DecodeFlags& flags,
                        int n_probes, const std::string& equiv_name) {
  LoadedModel loaded = load_checkpoint(model_path);
  std::vector<SummExample> corpus = read_corpus(in_path);
  SentenceEquiv equiv;
  if (equiv_name == "pron-entity") {
    equiv = pron_entity_equivalent;
  } else if (equiv_name != "exact") {
    throw DataError("unknown equivalence: " + equiv_name);
  }

  DecodeConfig cfg = flags.config();
  cfg.mode = RewriteMode::kExternal;
  std::ofstream csv(out_path, std::ios::trunc);
  if (!csv) throw DataError("cannot open output file: " + out_path);
  csv << "id,i,j,content_swap\n";
  int done = 0, hits = 0;
  for (const auto& ex : corpus) {
    if (done >= n_probes) break;
    if (!ex.oracle || ex.oracle->indices.size() < 2) continue;
    if (ex.oracle->indices[0] == ex.oracle->indices[1]) continue;
    TagSwapResult r = tag_swap_probe(loaded.model, ex.document, *ex.oracle, 0,
                                     1, cfg, loaded.vocab, equiv);
    csv << ex.document.id << ",0,1," << (r.content_swap ? 1 : 0) << '\n';
    ++done;
    if (r.content_swap) ++hits;
  }
  if (done == 0) throw DataError("no eligible tag-swap probes in " + in_path);
  double rate = static_cast<double>(hits) / done;
  csv << "total," << done << ",," << fmt_double(rate) << '\n';
  log_kv(1, "analyze_tagswap_done",
         {{"probes", std::to_string(done)},
          {"content_swap_rate", fmt_double(rate)},
          {"out", out_path}});
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"seq2seq summary rewriting with group-tag alignments"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  SynthConfig synth_cfg;
  int synth_n = 1000;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output corpus (jsonl)")->required();
  synth->add_option("--n", synth_n, "number of examples");
  synth->add_option("--seed", synth_cfg.seed, "rng seed");
  synth->add_option("--entities", synth_cfg.n_entities, "entity vocabulary");
  synth->add_option("--content-words", synth_cfg.n_content,
                    "content vocabulary");
  synth->add_option("--noise-words", synth_cfg.n_noise, "noise vocabulary");
  synth->add_option("--doc-sentences-min", synth_cfg.min_doc_sentences, "");
  synth->add_option("--doc-sentences-max", synth_cfg.max_doc_sentences, "");
  synth->add_option("--summary-sentences-min", synth_cfg.min_summary_sentences,
                    "");
  synth->add_option("--summary-sentences-max", synth_cfg.max_summary_sentences,
                    "");
  synth->add_option("--content-tokens-min", synth_cfg.min_content_tokens, "");
  synth->add_option("--content-tokens-max", synth_cfg.max_content_tokens, "");
  synth->add_option("--noise-rate", synth_cfg.noise_rate, "");
  synth->add_option("--coref-rate", synth_cfg.coref_rate, "");
  synth->add_option("--ref-rate", synth_cfg.ref_rate, "");
  synth->add_option("--shuffle-rate", synth_cfg.shuffle_rate, "");
  synth->add_option("--duplicate-rate", synth_cfg.duplicate_rate, "");

  // label
  auto* label = app.add_subcommand("label", "add oracle extraction labels");
  std::string label_in, label_out;
  label->add_option("--in", label_in, "input corpus")->required();
  label->add_option("--out", label_out, "output corpus")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a rewriter");
  TrainFlags tf;
  train_cmd->add_option("--in", tf.in_path, "labeled corpus")->required();
  train_cmd->add_option("--out", tf.out_path, "checkpoint path")->required();
  train_cmd->add_option("--dev", tf.dev_path, "dev corpus");
  train_cmd->add_option("--mode", tf.mode, "external|joint|joint_two_stage");
  train_cmd->add_option("--min-freq", tf.min_freq, "vocabulary cutoff");
  train_cmd->add_option("--d-model", tf.model.d_model, "");
  train_cmd->add_option("--heads", tf.model.heads, "");
  train_cmd->add_option("--enc-layers", tf.model.enc_layers, "");
  train_cmd->add_option("--dec-layers", tf.model.dec_layers, "");
  train_cmd->add_option("--ffn-dim", tf.model.ffn_dim, "");
  train_cmd->add_option("--max-positions", tf.model.max_positions, "");
  train_cmd->add_option("--max-tags", tf.model.max_tags, "");
  train_cmd->add_option("--dropout", tf.model.dropout, "");
  train_cmd->add_option("--gamma", tf.model.gamma,
                        "loss weight on identifier tokens");
  train_cmd->add_option("--seed", tf.model.seed, "");
  train_cmd->add_option("--steps", tf.train_cfg.max_steps, "");
  train_cmd->add_option("--batch-tokens", tf.train_cfg.batch_tokens, "");
  train_cmd->add_option("--warmup-enc", tf.train_cfg.warmup_enc, "");
  train_cmd->add_option("--warmup-dec", tf.train_cfg.warmup_dec, "");
  train_cmd->add_option("--factor-enc", tf.train_cfg.factor_enc, "");
  train_cmd->add_option("--factor-dec", tf.train_cfg.factor_dec, "");
  train_cmd->add_flag("--two-group", tf.train_cfg.two_group,
                      "separate encoder learning-rate schedule");
  train_cmd->add_option("--clip-norm", tf.train_cfg.clip_norm, "");
  train_cmd->add_option("--log-interval", tf.train_cfg.log_interval, "");
  train_cmd->add_option("--checkpoint-interval",
                        tf.train_cfg.checkpoint_interval, "");

  // summarize
  auto* summ = app.add_subcommand("summarize", "decode summaries");
  SummarizeFlags sf;
  summ->add_option("--model", sf.model_path, "checkpoint")->required();
  summ->add_option("--in", sf.in_path, "corpus")->required();
  summ->add_option("--out", sf.out_path, "output jsonl")->required();
  summ->add_option("--extractor", sf.extractor, "oracle|lead3|file:<path>");
  summ->add_option("--jobs", sf.jobs, "parallel workers");
  summ->add_option("--limit", sf.limit, "only the first N examples");
  sf.decode.attach(summ);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "summary-level rouge");
  std::string eval_hyp, eval_ref;
  eval->add_option("--hyp", eval_hyp, "hypothesis jsonl")->required();
  eval->add_option("--ref", eval_ref, "reference corpus")->required();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "diagnostic reports");
  analyze->require_subcommand(1);
  auto* report = analyze->add_subcommand("report", "histograms + edit stats");
  std::string rep_hyp, rep_ref, rep_dir = "reports";
  report->add_option("--hyp", rep_hyp, "hypothesis jsonl")->required();
  report->add_option("--ref", rep_ref, "reference corpus")->required();
  report->add_option("--out-dir", rep_dir, "report directory");

  auto* blocking = analyze->add_subcommand("blocking",
                                           "trigram blocking sensitivity");
  std::string blk_model, blk_in, blk_out = "blocking.csv";
  long blk_limit = 0;
  DecodeFlags blk_flags;
  blocking->add_option("--model", blk_model, "checkpoint")->required();
  blocking->add_option("--in", blk_in, "labeled corpus")->required();
  blocking->add_option("--out", blk_out, "output csv");
  blocking->add_option("--limit", blk_limit, "only the first N examples");
  blk_flags.attach(blocking);

  auto* tagswap = analyze->add_subcommand("tagswap", "coherence probe");
  std::string ts_model, ts_in, ts_out = "tagswap.csv";
  std::string ts_equiv = "pron-entity";
  int ts_n = 100;
  DecodeFlags ts_flags;
  tagswap->add_option("--model", ts_model, "checkpoint")->required();
  tagswap->add_option("--in", ts_in, "labeled corpus")->required();
  tagswap->add_option("--out", ts_out, "output csv");
  tagswap->add_option("--n-probes", ts_n, "number of probes");
  tagswap->add_option("--equiv", ts_equiv, "exact|pron-entity");
  ts_flags.attach(tagswap);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(synth_out, synth_cfg, synth_n);
    if (*label) return cmd_label(label_in, label_out);
    if (*train_cmd) return cmd_train(tf);
    if (*summ) return cmd_summarize(sf);
    if (*eval) return cmd_evaluate(eval_hyp, eval_ref);
    if (*report) return cmd_analyze_report(rep_hyp, rep_ref, rep_dir);
    if (*blocking)
      return cmd_analyze_blocking(blk_model, blk_in, blk_out, blk_flags,
                                  blk_limit);
    if (*tagswap)
      return cmd_analyze_tagswap(ts_model, ts_in, ts_out, ts_flags, ts_n,
                                 ts_equiv);
  } catch (const std::exception& e) {
    log_kv(0, "error", {{"what", e.what()}});
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace rewriter
