#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "catmt/corpus.hpp"
#include "catmt/model.hpp"
#include "catmt/rng.hpp"
#include "catmt/tokenizer.hpp"

namespace catmt::trainer {

struct TrainConfig {
  int epochs = 3;
  int batch_size = 4;
  int max_source_length = 16;
  int warmup_steps = 400;
  double lr_scale = 1.0;
  std::uint64_t seed = 42;
  std::filesystem::path checkpoint_path;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_source_length < 1) throw std::invalid_argument("max_source_length must be >= 1");
    if (warmup_steps < 1) throw std::invalid_argument("warmup_steps must be >= 1");
    if (lr_scale <= 0) throw std::invalid_argument("lr_scale must be positive");
  }
};

// Inverse-square-root schedule with linear warmup:
//   lr = scale * d_model^-1/2 * min(step^-1/2, step * warmup^-3/2)
// Continuous at step == warmup, increasing before, decreasing after.
inline double lr_at(std::int64_t step, int warmup_steps, int d_model, double scale = 1.0) {
  if (step < 1) throw std::invalid_argument("lr schedule is defined for step >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return scale / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

// Adam moments with the transformer-standard hyperparameters.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::int64_t step = 0;
  model::ModelParams m, v;

  static OptimizerState init(const model::ModelParams& params) {
    OptimizerState state;
    state.m = model::ModelParams::zeros_like(params);
    state.v = model::ModelParams::zeros_like(params);
    return state;
  }
};

// Bias-corrected elementwise adaptive-moment update.
inline void optimizer_step(model::ModelParams& params, const model::ModelParams& grads,
                           OptimizerState& state, double lr) {
  grads.for_each_tensor([](const std::string& name, const Mat& g) {
    if (g.has_non_finite()) throw std::runtime_error("non-finite gradient in tensor " + name);
  });
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  std::vector<Mat*> p, m, v;
  std::vector<const Mat*> g;
  params.for_each_tensor([&](const std::string&, Mat& t) { p.push_back(&t); });
  grads.for_each_tensor([&](const std::string&, const Mat& t) { g.push_back(&t); });
  state.m.for_each_tensor([&](const std::string&, Mat& t) { m.push_back(&t); });
  state.v.for_each_tensor([&](const std::string&, Mat& t) { v.push_back(&t); });

  for (std::size_t t = 0; t < p.size(); ++t) {
    if (!p[t]->same_shape(*g[t])) throw std::invalid_argument("gradient shape mismatch");
    for (std::size_t i = 0; i < p[t]->data.size(); ++i) {
      const double grad = g[t]->data[i];
      double mi = state.beta1 * m[t]->data[i] + (1.0 - state.beta1) * grad;
      double vi = state.beta2 * v[t]->data[i] + (1.0 - state.beta2) * grad * grad;
      m[t]->data[i] = static_cast<float>(mi);
      v[t]->data[i] = static_cast<float>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      p[t]->data[i] = static_cast<float>(p[t]->data[i] - lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

// FNV-1a over the raw float bits of every tensor, traversal order fixed.
inline std::uint64_t params_digest(const model::ModelParams& params) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  params.for_each_tensor([&](const std::string&, const Mat& t) {
    for (float f : t.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xFF;
        h *= 0x100000001B3ULL;
      }
    }
  });
  return h;
}

struct Checkpoint {
  model::ModelConfig config;
  model::ModelParams params;
  OptimizerState opt;
  std::uint64_t src_vocab_digest = 0;
  std::uint64_t tgt_vocab_digest = 0;
  int epoch = 0;
  std::vector<double> train_loss_history;
  std::vector<double> val_loss_history;
};

namespace detail {

inline constexpr char kMagic[8] = {'C', 'A', 'T', 'M', 'T', '0', '0', '1'};
inline constexpr std::uint32_t kVersion = 1;

inline void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline void write_tensor(std::ostream& out, const std::string& name, const Mat& t) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  out.put(static_cast<char>(0));  // dtype 0 = f32
  write_u32(out, 2);              // rank
  write_u64(out, static_cast<std::uint64_t>(t.rows));
  write_u64(out, static_cast<std::uint64_t>(t.cols));
  static_assert(sizeof(float) == 4);
  for (float f : t.data) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    write_u32(out, bits);
  }
}

inline nlohmann::json config_to_json(const model::ModelConfig& c) {
  return nlohmann::json{{"vocab_src", c.vocab_src},   {"vocab_tgt", c.vocab_tgt},
                        {"d_model", c.d_model},       {"n_heads", c.n_heads},
                        {"d_k", c.d_k},               {"d_v", c.d_v},
                        {"d_ff", c.d_ff},             {"n_enc_layers", c.n_enc_layers},
                        {"n_dec_layers", c.n_dec_layers}, {"max_len", c.max_len},
                        {"dropout_rate", c.dropout_rate}};
}

inline model::ModelConfig config_from_json(const nlohmann::json& j) {
  model::ModelConfig c;
  c.vocab_src = j.at("vocab_src").get<int>();
  c.vocab_tgt = j.at("vocab_tgt").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_k = j.at("d_k").get<int>();
  c.d_v = j.at("d_v").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.n_enc_layers = j.at("n_enc_layers").get<int>();
  c.n_dec_layers = j.at("n_dec_layers").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<float>();
  return c;
}

}  // namespace detail

// Byte format (all integers little-endian):
//   magic "CATMT001" | u32 version | u64 header-length | header JSON |
//   u32 tensor-count | tensors.
// Each tensor: u32 name-length, name, u8 dtype (0 = f32), u32 rank (2),
// u64 dims, then raw row-major f32 data. Writes are atomic
// (temp file + rename).
inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(detail::kMagic, 8);
    detail::write_u32(out, detail::kVersion);
    nlohmann::json header{
        {"config", detail::config_to_json(ckpt.config)},
        {"src_vocab_digest", ckpt.src_vocab_digest},
        {"tgt_vocab_digest", ckpt.tgt_vocab_digest},
        {"optimizer",
         {{"beta1", ckpt.opt.beta1}, {"beta2", ckpt.opt.beta2}, {"eps", ckpt.opt.eps}, {"step", ckpt.opt.step}}},
        {"meta",
         {{"epoch", ckpt.epoch},
          {"train_loss_history", ckpt.train_loss_history},
          {"val_loss_history", ckpt.val_loss_history}}}};
    const std::string header_text = header.dump();
    detail::write_u64(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

    std::uint32_t count = 0;
    ckpt.params.for_each_tensor([&](const std::string&, const Mat&) { ++count; });
    detail::write_u32(out, count * 3);
    ckpt.params.for_each_tensor(
        [&](const std::string& name, const Mat& t) { detail::write_tensor(out, "params/" + name, t); });
    ckpt.opt.m.for_each_tensor(
        [&](const std::string& name, const Mat& t) { detail::write_tensor(out, "adam_m/" + name, t); });
    ckpt.opt.v.for_each_tensor(
        [&](const std::string& name, const Mat& t) { detail::write_tensor(out, "adam_v/" + name, t); });
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, detail::kMagic, 8) != 0) {
    throw std::runtime_error("bad checkpoint magic in " + path.string());
  }
  const std::uint32_t version = detail::read_u32(in);
  if (version != detail::kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t header_len = detail::read_u64(in);
  std::string header_text(header_len, '\0');
  if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
    throw std::runtime_error("checkpoint truncated in header");
  }
  nlohmann::json header = nlohmann::json::parse(header_text);

  Checkpoint ckpt;
  ckpt.config = detail::config_from_json(header.at("config"));
  ckpt.config.validate();
  ckpt.src_vocab_digest = header.at("src_vocab_digest").get<std::uint64_t>();
  ckpt.tgt_vocab_digest = header.at("tgt_vocab_digest").get<std::uint64_t>();
  ckpt.opt.beta1 = header.at("optimizer").at("beta1").get<double>();
  ckpt.opt.beta2 = header.at("optimizer").at("beta2").get<double>();
  ckpt.opt.eps = header.at("optimizer").at("eps").get<double>();
  ckpt.opt.step = header.at("optimizer").at("step").get<std::int64_t>();
  ckpt.epoch = header.at("meta").at("epoch").get<int>();
  ckpt.train_loss_history = header.at("meta").at("train_loss_history").get<std::vector<double>>();
  ckpt.val_loss_history = header.at("meta").at("val_loss_history").get<std::vector<double>>();

  ckpt.params = model::ModelParams::zeros(ckpt.config);
  ckpt.opt.m = model::ModelParams::zeros(ckpt.config);
  ckpt.opt.v = model::ModelParams::zeros(ckpt.config);

  std::unordered_map<std::string, Mat*> slots;
  ckpt.params.for_each_tensor([&](const std::string& n, Mat& t) { slots["params/" + n] = &t; });
  ckpt.opt.m.for_each_tensor([&](const std::string& n, Mat& t) { slots["adam_m/" + n] = &t; });
  ckpt.opt.v.for_each_tensor([&](const std::string& n, Mat& t) { slots["adam_v/" + n] = &t; });

  const std::uint32_t count = detail::read_u32(in);
  if (count != slots.size()) {
    throw std::runtime_error("checkpoint tensor count does not match its config");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::read_u32(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw std::runtime_error("checkpoint truncated");
    int dtype = in.get();
    if (dtype != 0) throw std::runtime_error("unsupported dtype for tensor " + name);
    const std::uint32_t rank = detail::read_u32(in);
    if (rank != 2) throw std::runtime_error("unsupported rank for tensor " + name);
    const std::uint64_t rows = detail::read_u64(in);
    const std::uint64_t cols = detail::read_u64(in);
    auto it = slots.find(name);
    if (it == slots.end()) throw std::runtime_error("unknown tensor in checkpoint: " + name);
    Mat* slot = it->second;
    if (static_cast<std::uint64_t>(slot->rows) != rows ||
        static_cast<std::uint64_t>(slot->cols) != cols) {
      throw std::runtime_error("tensor " + name + " shape does not match the stored config");
    }
    for (auto& f : slot->data) {
      const std::uint32_t bits = detail::read_u32(in);
      std::memcpy(&f, &bits, sizeof(f));
    }
    slots.erase(it);
  }
  if (!slots.empty()) throw std::runtime_error("checkpoint is missing tensors");
  return ckpt;
}

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

namespace detail {

struct PreparedPair {
  tokenizer::TokenSequence src, tgt;
};

inline std::vector<PreparedPair> prepare(const corpus::Dataset& dataset,
                                         const tokenizer::Vocab& src_vocab,
                                         const tokenizer::Vocab& tgt_vocab, int max_src_len,
                                         int max_tgt_len) {
  std::vector<PreparedPair> out;
  out.reserve(dataset.size());
  for (const auto& pair : dataset.pairs()) {
    PreparedPair p;
    p.src = tokenizer::encode_ids(pair.source, src_vocab, /*add_specials=*/false,
                                  tokenizer::Side::source, max_src_len);
    p.tgt = tokenizer::encode_ids(pair.encoded_target, tgt_vocab, /*add_specials=*/true,
                                  tokenizer::Side::target, max_tgt_len);
    if (p.src.content_len == 0) continue;  // nothing for the encoder to attend to
    out.push_back(std::move(p));
  }
  return out;
}

inline double mean_loss(const std::vector<PreparedPair>& pairs, const model::ModelConfig& cfg,
                        const model::ModelParams& params) {
  double loss_sum = 0.0;
  std::int64_t tokens = 0;
  for (const auto& p : pairs) {
    auto graph = model::teacher_forced_loss<float>(cfg, params, nullptr, p.src, p.tgt,
                                                   /*train_mode=*/false);
    loss_sum += graph.loss_sum();
    tokens += graph.token_count;
  }
  return tokens > 0 ? loss_sum / static_cast<double>(tokens) : 0.0;
}

}  // namespace detail

// The full loop: shuffled batches, teacher forcing, Adam with the
// warmup schedule, per-epoch validation with dropout disabled, best
// checkpoint kept by validation loss. Aborts on divergence, leaving the
// last written checkpoint on disk.
inline TrainResult train(const corpus::Dataset& train_set, const corpus::Dataset& val_set,
                         model::ModelConfig cfg, const TrainConfig& tc,
                         const tokenizer::Vocab& src_vocab, const tokenizer::Vocab& tgt_vocab,
                         std::ostream* log = nullptr) {
  tc.validate();
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("training split is empty");

  auto train_pairs = detail::prepare(train_set, src_vocab, tgt_vocab, tc.max_source_length, cfg.max_len);
  auto val_pairs = detail::prepare(val_set, src_vocab, tgt_vocab, tc.max_source_length, cfg.max_len);
  if (train_pairs.empty()) throw std::invalid_argument("no usable training pairs");

  model::ModelParams params = model::ModelParams::init(cfg, tc.seed);
  OptimizerState opt = OptimizerState::init(params);
  SplitMix64 dropout_rng(derive_seed(tc.seed, 0xD120));

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  bool wrote_checkpoint = false;

  auto make_checkpoint = [&](int epoch) {
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = params;
    ckpt.opt = opt;
    ckpt.src_vocab_digest = src_vocab.digest();
    ckpt.tgt_vocab_digest = tgt_vocab.digest();
    ckpt.epoch = epoch;
    for (const auto& e : result.history) {
      ckpt.train_loss_history.push_back(e.train_loss);
      ckpt.val_loss_history.push_back(e.val_loss);
    }
    return ckpt;
  };

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::vector<std::size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 shuffle_rng(derive_seed(tc.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0.0;
    std::int64_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      // pad every sequence in the batch to the batch-wide maxima
      int src_len = 0, tgt_len = 0;
      for (std::size_t k = start; k < end; ++k) {
        src_len = std::max(src_len, train_pairs[order[k]].src.length());
        tgt_len = std::max(tgt_len, train_pairs[order[k]].tgt.length());
      }
      model::ModelParams grads = model::ModelParams::zeros_like(params);
      double batch_loss_sum = 0.0;
      std::int64_t batch_tokens = 0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& pp = train_pairs[order[k]];
        auto src = tokenizer::pad_to(pp.src, src_len);
        auto tgt = tokenizer::pad_to(pp.tgt, tgt_len);
        auto graph = model::teacher_forced_loss<float>(cfg, params, &grads, src, tgt,
                                                       /*train_mode=*/true, &dropout_rng);
        batch_loss_sum += graph.loss_sum();
        batch_tokens += graph.token_count;
        graph.backward();
      }
      if (!std::isfinite(batch_loss_sum)) {
        throw std::runtime_error("training diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch) + "; last good checkpoint kept");
      }
      // loss is averaged over the batch's non-pad tokens
      const float inv_tokens = batch_tokens > 0 ? 1.0f / static_cast<float>(batch_tokens) : 0.0f;
      grads.for_each_tensor([&](const std::string&, Mat& g) { matops::scale_inplace(g, inv_tokens); });
      const double lr = lr_at(opt.step + 1, tc.warmup_steps, cfg.d_model, tc.lr_scale);
      optimizer_step(params, grads, opt, lr);
      epoch_loss_sum += batch_loss_sum;
      epoch_tokens += batch_tokens;
    }

    EpochStats stats;
    stats.train_loss = epoch_tokens > 0 ? epoch_loss_sum / static_cast<double>(epoch_tokens) : 0.0;
    stats.val_loss = val_pairs.empty() ? stats.train_loss
                                       : detail::mean_loss(val_pairs, cfg, params);
    result.history.push_back(stats);
    if (log != nullptr) {
      (*log) << "epoch " << epoch << "/" << tc.epochs << "  train_loss " << stats.train_loss
             << "  val_loss " << stats.val_loss << "  lr "
             << lr_at(std::max<std::int64_t>(opt.step, 1), tc.warmup_steps, cfg.d_model, tc.lr_scale)
             << "\n";
    }
    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      result.best = make_checkpoint(epoch);
      result.best_epoch = epoch;
      if (!tc.checkpoint_path.empty()) {
        save_checkpoint(result.best, tc.checkpoint_path);
        wrote_checkpoint = true;
      }
    }
  }
  if (result.best_epoch == 0) {
    // validation never produced a comparable loss; keep the last epoch
    result.best = make_checkpoint(tc.epochs);
    result.best_epoch = tc.epochs;
  }
  if (!tc.checkpoint_path.empty() && !wrote_checkpoint) {
    save_checkpoint(result.best, tc.checkpoint_path);
  }
  return result;
}

}  // namespace catmt::trainer
