#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "rewriter/logging.hpp"
#include "rewriter/model.hpp"

namespace rewriter {

using nlohmann::json;

int log_verbosity() {
  static int level = [] {
    const char* env = std::getenv("RLAB_LOG");
    if (env == nullptr || *env == '\0') return 1;
    return std::atoi(env);
  }();
  return level;
}

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void log_kv(int level, const std::string& event,
            const std::vector<std::pair<std::string, std::string>>& fields) {
  if (log_verbosity() < level) return;
  std::string line = "event=" + event;
  for (const auto& [k, v] : fields) {
    line += ' ';
    line += k;
    line += '=';
    line += v;
  }
  line += '\n';
  std::fputs(line.c_str(), stderr);
}

double lr_at(long step, long warmup, double factor) {
  if (step < 1) throw DataError("lr_at: step must be >= 1");
  if (warmup < 1) throw DataError("lr_at: warmup must be >= 1");
  double s = static_cast<double>(step);
  double w = static_cast<double>(warmup);
  return factor * std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

void TrainConfig::validate() const {
  if (max_steps < 1) throw DataError("train config: max_steps must be >= 1");
  if (batch_tokens < 1) throw DataError("train config: batch_tokens must be >= 1");
  if (warmup_enc < 1 || warmup_dec < 1) {
    throw DataError("train config: warmups must be >= 1");
  }
  if (clip_norm <= 0.0) throw DataError("train config: clip_norm must be > 0");
}

namespace {

struct AdamState {
  long step = 0;
};

void adam_step(RewriterModel& model, const TrainConfig& cfg, AdamState& state) {
  ++state.step;
  double norm_sq = 0.0;
  for (auto& b : model.blocks()) norm_sq += b.grad.squaredNorm();
  double norm = std::sqrt(norm_sq);
  double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;

  double bias1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  double bias2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
  double lr_enc = cfg.two_group
                      ? lr_at(state.step, cfg.warmup_enc, cfg.factor_enc)
                      : lr_at(state.step, cfg.warmup_dec, cfg.factor_dec);
  double lr_dec = lr_at(state.step, cfg.warmup_dec, cfg.factor_dec);

  for (auto& b : model.blocks()) {
    if (b.adam_m.size() == 0) {
      b.adam_m = Eigen::MatrixXd::Zero(b.value.rows(), b.value.cols());
      b.adam_v = Eigen::MatrixXd::Zero(b.value.rows(), b.value.cols());
    }
    double lr = b.encoder_group ? lr_enc : lr_dec;
    Eigen::ArrayXXd g = b.grad.array() * scale;
    b.adam_m.array() = cfg.adam_beta1 * b.adam_m.array() +
                       (1.0 - cfg.adam_beta1) * g;
    b.adam_v.array() = cfg.adam_beta2 * b.adam_v.array() +
                       (1.0 - cfg.adam_beta2) * g.square();
    Eigen::ArrayXXd m_hat = b.adam_m.array() / bias1;
    Eigen::ArrayXXd v_hat = b.adam_v.array() / bias2;
    b.value.array() -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
  }
}

struct Prepared {
  TaggedSequence x;
  TaggedSequence y;
};

std::vector<Prepared> prepare_pairs(const std::vector<SummExample>& corpus,
                                    RewriteMode mode, const Vocab& vocab) {
  std::vector<Prepared> out;
  out.reserve(corpus.size());
  for (const auto& ex : corpus) {
    Prepared p;
    p.x = build_source(ex, mode, vocab);
    p.y = build_target(ex, mode, vocab);
    out.push_back(std::move(p));
  }
  return out;
}

void check_vocab_model(const RewriterModel& model, const Vocab& vocab) {
  if (model.config().vocab_size != vocab.size() ||
      model.config().max_tags != vocab.max_identifier()) {
    throw DataError("model and vocabulary shapes disagree");
  }
}

}  // namespace

double evaluate_loss(const RewriterModel& model,
                     const std::vector<SummExample>& corpus, RewriteMode mode,
                     const Vocab& vocab) {
  check_vocab_model(model, vocab);
  double sum = 0.0;
  long tokens = 0;
  for (const auto& ex : corpus) {
    TaggedSequence x = build_source(ex, mode, vocab);
    TaggedSequence y = build_target(ex, mode, vocab);
    LossStats stats = model.loss(x, y);
    sum += stats.weighted_sum;
    tokens += stats.n_tokens;
  }
  if (tokens == 0) throw DataError("evaluate_loss: empty corpus");
  return sum / static_cast<double>(tokens);
}

TrainStats train(RewriterModel& model, const std::vector<SummExample>& corpus,
                 RewriteMode mode, const TrainConfig& config,
                 const Vocab& vocab, const std::vector<SummExample>* dev) {
  config.validate();
  check_vocab_model(model, vocab);
  if (corpus.empty()) throw DataError("train: empty corpus");
  std::vector<Prepared> pairs = prepare_pairs(corpus, mode, vocab);

  std::mt19937_64 order_rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), size_t{0});

  AdamState adam;
  TrainStats stats;
  stats.step_losses.reserve(static_cast<size_t>(config.max_steps));

  size_t cursor = order.size();  // forces a shuffle on first use
  double interval_loss = 0.0;
  long interval_tokens = 0;

  model.zero_grad();
  while (adam.step < config.max_steps) {
    double batch_loss = 0.0;
    long batch_tokens = 0;
    while (batch_tokens < config.batch_tokens) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const Prepared& p = pairs[order[cursor++]];
      std::mt19937_64* rng =
          model.config().dropout > 0.0 ? &dropout_rng : nullptr;
      LossStats s = model.loss_and_backward(p.x, p.y, rng);
      batch_loss += s.weighted_sum;
      batch_tokens += s.n_tokens;
    }
    adam_step(model, config, adam);
    model.zero_grad();

    double mean_loss = batch_loss / static_cast<double>(batch_tokens);
    stats.step_losses.push_back(mean_loss);
    interval_loss += batch_loss;
    interval_tokens += batch_tokens;

    if (adam.step % config.log_interval == 0 || adam.step == config.max_steps) {
      double lr = lr_at(adam.step, config.warmup_dec, config.factor_dec);
      log_kv(1, "train_step",
             {{"step", std::to_string(adam.step)},
              {"loss", fmt_double(interval_loss / interval_tokens)},
              {"lr", fmt_double(lr)}});
      stats.final_loss = interval_loss / interval_tokens;
      interval_loss = 0.0;
      interval_tokens = 0;
    }
    if (config.checkpoint_interval > 0 && !config.checkpoint_path.empty() &&
        adam.step % config.checkpoint_interval == 0) {
      save_checkpoint(config.checkpoint_path, model, vocab);
      if (dev != nullptr && !dev->empty()) {
        double dev_loss = evaluate_loss(model, *dev, mode, vocab);
        log_kv(1, "dev_eval",
               {{"step", std::to_string(adam.step)},
                {"dev_loss", fmt_double(dev_loss)}});
      }
    }
  }
  stats.steps = adam.step;
  if (!config.checkpoint_path.empty()) {
    save_checkpoint(config.checkpoint_path, model, vocab);
  }
  if (dev != nullptr && !dev->empty()) {
    double dev_loss = evaluate_loss(model, *dev, mode, vocab);
    log_kv(1, "dev_eval_final", {{"dev_loss", fmt_double(dev_loss)}});
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[9] = "RLABCKP1";

json config_to_json(const ModelConfig& c) {
  json j;
  j["d_model"] = c.d_model;
  j["heads"] = c.heads;
  j["enc_layers"] = c.enc_layers;
  j["dec_layers"] = c.dec_layers;
  j["ffn_dim"] = c.ffn_dim;
  j["max_positions"] = c.max_positions;
  j["max_tags"] = c.max_tags;
  j["dropout"] = c.dropout;
  j["gamma"] = c.gamma;
  j["seed"] = c.seed;
  j["vocab_size"] = c.vocab_size;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.heads = j.at("heads").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.max_tags = j.at("max_tags").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.vocab_size = j.at("vocab_size").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const RewriterModel& model,
                     const Vocab& vocab) {
  check_vocab_model(model, vocab);
  json header;
  header["format_version"] = 1;
  header["config"] = config_to_json(model.config());
  header["vocab_tokens"] = vocab.tokens();
  header["max_identifier"] = vocab.max_identifier();
  header["vocab_hash"] = vocab.content_hash();
  json tensors = json::array();
  for (const auto& b : model.blocks()) {
    json t;
    t["name"] = b.name;
    t["rows"] = b.value.rows();
    t["cols"] = b.value.cols();
    tensors.push_back(t);
  }
  header["tensors"] = tensors;
  std::string header_str = header.dump();

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint file: " + tmp);
    out.write(kMagic, 8);
    std::uint64_t len = header_str.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_str.data(), static_cast<std::streamsize>(len));
    for (const auto& b : model.blocks()) {
      out.write(reinterpret_cast<const char*>(b.value.data()),
                static_cast<std::streamsize>(sizeof(double) * b.value.size()));
    }
    if (!out.good()) throw DataError("checkpoint write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot move checkpoint into place: " + path);
  }
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in.good() || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in.good() || len == 0 || len > (1ull << 32)) {
    throw DataError("corrupt checkpoint header: " + path);
  }
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in.good()) throw DataError("corrupt checkpoint header: " + path);
  json header = json::parse(header_str, nullptr, false);
  if (header.is_discarded()) {
    throw DataError("corrupt checkpoint header json: " + path);
  }
  if (header.at("format_version").get<int>() != 1) {
    throw DataError("unsupported checkpoint version in " + path);
  }

  Vocab vocab = Vocab::from_tokens(
      header.at("vocab_tokens").get<std::vector<std::string>>(),
      header.at("max_identifier").get<int>());
  std::uint64_t stored_hash = header.at("vocab_hash").get<std::uint64_t>();
  if (stored_hash != vocab.content_hash()) {
    throw DataError("checkpoint vocabulary hash mismatch: " + path);
  }

  ModelConfig config = config_from_json(header.at("config"));
  LoadedModel loaded{RewriterModel(config), std::move(vocab)};

  const auto& tensors = header.at("tensors");
  if (tensors.size() != loaded.model.blocks().size()) {
    throw DataError("checkpoint tensor count mismatch: " + path);
  }
  for (size_t i = 0; i < tensors.size(); ++i) {
    auto& b = loaded.model.blocks()[i];
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != b.name ||
        t.at("rows").get<long>() != b.value.rows() ||
        t.at("cols").get<long>() != b.value.cols()) {
      throw DataError("checkpoint tensor layout mismatch at " + b.name);
    }
    in.read(reinterpret_cast<char*>(b.value.data()),
            static_cast<std::streamsize>(sizeof(double) * b.value.size()));
    if (!in.good()) throw DataError("truncated checkpoint: " + path);
  }
  return loaded;
}

}  // namespace rewriter
