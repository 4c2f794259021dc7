#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "catmt/mat.hpp"
#include "catmt/rng.hpp"
#include "catmt/tape.hpp"
#include "catmt/tokenizer.hpp"

namespace catmt::model {

struct ModelConfig {
  int vocab_src = 0;
  int vocab_tgt = 0;
  int d_model = 128;
  int n_heads = 4;
  int d_k = 32;
  int d_v = 32;
  int d_ff = 512;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int max_len = 16;
  float dropout_rate = 0.1f;

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    if (vocab_src < 4 || vocab_tgt < 4) throw std::invalid_argument("vocab sizes must cover the reserved symbols");
    if (d_model <= 0 || d_ff <= 0) throw std::invalid_argument("d_model and d_ff must be positive");
    if (n_heads <= 0 || d_k <= 0 || d_v <= 0) throw std::invalid_argument("heads and head widths must be positive");
    if (n_enc_layers < 1 || n_dec_layers < 1) throw std::invalid_argument("layer counts must be >= 1");
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    if (dropout_rate < 0.0f || dropout_rate >= 1.0f) throw std::invalid_argument("dropout_rate must be in [0,1)");
  }
};

template <typename T>
struct AttentionParamsT {
  std::vector<MatT<T>> wq, wk, wv;  // per head: d_model x d_k / d_k / d_v
  MatT<T> wo;                       // (h*d_v) x d_model
};

template <typename T>
struct LayerNormParamsT {
  MatT<T> gain, bias;  // 1 x d
};

template <typename T>
struct FeedForwardParamsT {
  MatT<T> w1, b1, w2, b2;
};

template <typename T>
struct EncoderLayerParamsT {
  AttentionParamsT<T> self_attn;
  LayerNormParamsT<T> ln1, ln2;
  FeedForwardParamsT<T> ff;
};

template <typename T>
struct DecoderLayerParamsT {
  AttentionParamsT<T> self_attn, cross_attn;
  LayerNormParamsT<T> ln1, ln2, ln3;
  FeedForwardParamsT<T> ff;
};

template <typename T>
struct ModelParamsT {
  MatT<T> src_embed, tgt_embed;
  std::vector<EncoderLayerParamsT<T>> enc;
  std::vector<DecoderLayerParamsT<T>> dec;
  LayerNormParamsT<T> enc_final_ln, dec_final_ln;
  MatT<T> w_out, b_out;

  template <typename F>
  void for_each_tensor(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    visit(*this, f);
  }

  // Seeded init: weight matrices uniform(-1/sqrt(rows), +1/sqrt(rows)),
  // layer-norm gains 1, all biases 0. Tensors are drawn in for_each_tensor
  // order from a single SplitMix64 stream, which pins the whole
  // initialization to the seed.
  static ModelParamsT init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParamsT p = shaped(cfg);
    SplitMix64 rng(seed);
    p.for_each_tensor([&](const std::string& name, MatT<T>& m) {
      if (name.ends_with(".gain")) {
        m = MatT<T>::filled(m.rows, m.cols, T(1));
      } else if (name.ends_with(".bias") || name.starts_with("b_") || name.find(".b1") != std::string::npos ||
                 name.find(".b2") != std::string::npos) {
        // zeros already
      } else {
        m = MatT<T>::uniform_init(m.rows, m.cols, rng);
      }
    });
    return p;
  }

  // All-zero tensors shaped for a config; used for gradient buffers and
  // as the destination when deserializing.
  static ModelParamsT zeros(const ModelConfig& cfg) { return shaped(cfg); }

  static ModelParamsT zeros_like(const ModelParamsT& other) {
    ModelParamsT p = other;
    p.for_each_tensor([](const std::string&, MatT<T>& m) { m = MatT<T>::zeros_like(m); });
    return p;
  }

  template <typename U>
  ModelParamsT<U> cast() const {
    ModelParamsT<U> result;
    result.src_embed = src_embed.template cast<U>();
    result.tgt_embed = tgt_embed.template cast<U>();
    for (const auto& layer : enc) {
      EncoderLayerParamsT<U> l;
      l.self_attn = cast_attention<U>(layer.self_attn);
      l.ln1 = {layer.ln1.gain.template cast<U>(), layer.ln1.bias.template cast<U>()};
      l.ln2 = {layer.ln2.gain.template cast<U>(), layer.ln2.bias.template cast<U>()};
      l.ff = {layer.ff.w1.template cast<U>(), layer.ff.b1.template cast<U>(),
              layer.ff.w2.template cast<U>(), layer.ff.b2.template cast<U>()};
      result.enc.push_back(std::move(l));
    }
    for (const auto& layer : dec) {
      DecoderLayerParamsT<U> l;
      l.self_attn = cast_attention<U>(layer.self_attn);
      l.cross_attn = cast_attention<U>(layer.cross_attn);
      l.ln1 = {layer.ln1.gain.template cast<U>(), layer.ln1.bias.template cast<U>()};
      l.ln2 = {layer.ln2.gain.template cast<U>(), layer.ln2.bias.template cast<U>()};
      l.ln3 = {layer.ln3.gain.template cast<U>(), layer.ln3.bias.template cast<U>()};
      l.ff = {layer.ff.w1.template cast<U>(), layer.ff.b1.template cast<U>(),
              layer.ff.w2.template cast<U>(), layer.ff.b2.template cast<U>()};
      result.dec.push_back(std::move(l));
    }
    result.enc_final_ln = {enc_final_ln.gain.template cast<U>(), enc_final_ln.bias.template cast<U>()};
    result.dec_final_ln = {dec_final_ln.gain.template cast<U>(), dec_final_ln.bias.template cast<U>()};
    result.w_out = w_out.template cast<U>();
    result.b_out = b_out.template cast<U>();
    return result;
  }

  bool has_non_finite() const {
    bool bad = false;
    for_each_tensor([&](const std::string&, const MatT<T>& m) { bad = bad || m.has_non_finite(); });
    return bad;
  }

 private:
  template <typename U>
  static AttentionParamsT<U> cast_attention(const AttentionParamsT<T>& a) {
    AttentionParamsT<U> out;
    for (const auto& m : a.wq) out.wq.push_back(m.template cast<U>());
    for (const auto& m : a.wk) out.wk.push_back(m.template cast<U>());
    for (const auto& m : a.wv) out.wv.push_back(m.template cast<U>());
    out.wo = a.wo.template cast<U>();
    return out;
  }

  static ModelParamsT shaped(const ModelConfig& cfg) {
    ModelParamsT p;
    p.src_embed = MatT<T>(cfg.vocab_src, cfg.d_model);
    p.tgt_embed = MatT<T>(cfg.vocab_tgt, cfg.d_model);
    auto attention = [&]() {
      AttentionParamsT<T> a;
      for (int h = 0; h < cfg.n_heads; ++h) {
        a.wq.emplace_back(cfg.d_model, cfg.d_k);
        a.wk.emplace_back(cfg.d_model, cfg.d_k);
        a.wv.emplace_back(cfg.d_model, cfg.d_v);
      }
      a.wo = MatT<T>(cfg.n_heads * cfg.d_v, cfg.d_model);
      return a;
    };
    auto layer_norm = [&]() { return LayerNormParamsT<T>{MatT<T>(1, cfg.d_model), MatT<T>(1, cfg.d_model)}; };
    auto feed_forward = [&]() {
      return FeedForwardParamsT<T>{MatT<T>(cfg.d_model, cfg.d_ff), MatT<T>(1, cfg.d_ff),
                                   MatT<T>(cfg.d_ff, cfg.d_model), MatT<T>(1, cfg.d_model)};
    };
    for (int l = 0; l < cfg.n_enc_layers; ++l) {
      p.enc.push_back({attention(), layer_norm(), layer_norm(), feed_forward()});
    }
    for (int l = 0; l < cfg.n_dec_layers; ++l) {
      p.dec.push_back({attention(), attention(), layer_norm(), layer_norm(), layer_norm(), feed_forward()});
    }
    p.enc_final_ln = layer_norm();
    p.dec_final_ln = layer_norm();
    p.w_out = MatT<T>(cfg.d_model, cfg.vocab_tgt);
    p.b_out = MatT<T>(1, cfg.vocab_tgt);
    return p;
  }

  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f("src_embed", self.src_embed);
    f("tgt_embed", self.tgt_embed);
    auto visit_attention = [&](const std::string& prefix, auto& a) {
      for (std::size_t h = 0; h < a.wq.size(); ++h) {
        f(prefix + ".wq" + std::to_string(h), a.wq[h]);
        f(prefix + ".wk" + std::to_string(h), a.wk[h]);
        f(prefix + ".wv" + std::to_string(h), a.wv[h]);
      }
      f(prefix + ".wo", a.wo);
    };
    auto visit_ln = [&](const std::string& prefix, auto& ln) {
      f(prefix + ".gain", ln.gain);
      f(prefix + ".bias", ln.bias);
    };
    auto visit_ff = [&](const std::string& prefix, auto& ff) {
      f(prefix + ".w1", ff.w1);
      f(prefix + ".b1", ff.b1);
      f(prefix + ".w2", ff.w2);
      f(prefix + ".b2", ff.b2);
    };
    for (std::size_t l = 0; l < self.enc.size(); ++l) {
      auto& layer = self.enc[l];
      std::string p = "enc" + std::to_string(l);
      visit_attention(p + ".self", layer.self_attn);
      visit_ln(p + ".ln1", layer.ln1);
      visit_ff(p + ".ff", layer.ff);
      visit_ln(p + ".ln2", layer.ln2);
    }
    for (std::size_t l = 0; l < self.dec.size(); ++l) {
      auto& layer = self.dec[l];
      std::string p = "dec" + std::to_string(l);
      visit_attention(p + ".self", layer.self_attn);
      visit_ln(p + ".ln1", layer.ln1);
      visit_attention(p + ".cross", layer.cross_attn);
      visit_ln(p + ".ln2", layer.ln2);
      visit_ff(p + ".ff", layer.ff);
      visit_ln(p + ".ln3", layer.ln3);
    }
    f("enc_final.gain", self.enc_final_ln.gain);
    f("enc_final.bias", self.enc_final_ln.bias);
    f("dec_final.gain", self.dec_final_ln.gain);
    f("dec_final.bias", self.dec_final_ln.bias);
    f("w_out", self.w_out);
    f("b_out", self.b_out);
  }
};

using ModelParams = ModelParamsT<float>;

// Boolean attention visibility mask, row-major n_q x n_k; 1 = may attend.
struct AttnMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> visible;

  bool empty() const { return visible.empty(); }

  static AttnMask none() { return {}; }

  static AttnMask full(int n_q, int n_k, bool value = true) {
    AttnMask m{n_q, n_k, std::vector<std::uint8_t>(static_cast<std::size_t>(n_q) * n_k,
                                                   value ? 1 : 0)};
    return m;
  }

  static AttnMask causal(int n) {
    AttnMask m = full(n, n, false);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) m.visible[static_cast<std::size_t>(i) * n + j] = 1;
    }
    return m;
  }

  // Keys at positions >= visible_prefix are padding and hidden.
  static AttnMask key_padding(int n_q, int n_k, int visible_prefix) {
    AttnMask m = full(n_q, n_k, false);
    for (int i = 0; i < n_q; ++i) {
      for (int j = 0; j < visible_prefix && j < n_k; ++j) {
        m.visible[static_cast<std::size_t>(i) * n_k + j] = 1;
      }
    }
    return m;
  }

  void set(int i, int j, bool v) { visible[static_cast<std::size_t>(i) * cols + j] = v ? 1 : 0; }
};

// Attention(Q,K,V) = softmax(Q K^T / sqrt(d_k)) V, with masked positions
// forced out before the softmax. Returns the convex weights too.
template <typename T>
struct AttentionResult {
  MatT<T> output;   // n_q x d_v
  MatT<T> weights;  // n_q x n_k, rows sum to 1
};

template <typename T>
AttentionResult<T> scaled_dot_attention(const MatT<T>& q, const MatT<T>& k, const MatT<T>& v,
                                        const AttnMask& mask = AttnMask::none()) {
  if (q.cols != k.cols) throw std::invalid_argument("query/key width mismatch");
  if (k.rows != v.rows) throw std::invalid_argument("key/value count mismatch");
  if (!mask.empty() && (mask.rows != q.rows || mask.cols != k.rows)) {
    throw std::invalid_argument("mask shape must be n_q x n_k");
  }
  MatT<T> scores = matops::matmul_nt(q, k);
  matops::scale_inplace(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.cols))));
  AttentionResult<T> result;
  result.weights = matops::softmax_rows_masked(scores, mask.visible);
  result.output = matops::matmul(result.weights, v);
  return result;
}

// MultiHead(Q,K,V) = Concat(head_1..head_h) W^O with
// head_i = Attention(Q W_i^Q, K W_i^K, V W_i^V).
template <typename T>
MatT<T> multi_head(const MatT<T>& q, const MatT<T>& k, const MatT<T>& v, const AttnMask& mask,
                   const AttentionParamsT<T>& params) {
  if (params.wq.empty()) throw std::invalid_argument("multi_head requires at least one head");
  const int h = static_cast<int>(params.wq.size());
  const int d_v = params.wv[0].cols;
  MatT<T> concat(q.rows, h * d_v);
  for (int head = 0; head < h; ++head) {
    auto r = scaled_dot_attention(matops::matmul(q, params.wq[static_cast<std::size_t>(head)]),
                                  matops::matmul(k, params.wk[static_cast<std::size_t>(head)]),
                                  matops::matmul(v, params.wv[static_cast<std::size_t>(head)]), mask);
    for (int i = 0; i < q.rows; ++i) {
      for (int j = 0; j < d_v; ++j) concat.at(i, head * d_v + j) = r.output.at(i, j);
    }
  }
  return matops::matmul(concat, params.wo);
}

// Fixed sinusoidal positional encoding.
template <typename T>
MatT<T> sinusoidal_positions(int n, int d_model) {
  MatT<T> pe(n, d_model);
  for (int pos = 0; pos < n; ++pos) {
    for (int j = 0; j < d_model; ++j) {
      const double exponent = static_cast<double>(2 * (j / 2)) / d_model;
      const double angle = pos / std::pow(10000.0, exponent);
      pe.at(pos, j) = static_cast<T>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

// Encoder output: one d_model row per source position, plus how many of
// those rows are real tokens (the rest are padding).
template <typename T>
struct MemoryT {
  MatT<T> z;
  int content_len = 0;
};

using Memory = MemoryT<float>;

struct StepDistribution {
  std::vector<double> logits;

  std::vector<double> log_probs() const {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double l : logits) max_logit = std::max(max_logit, l);
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - max_logit);
    const double log_z = max_logit + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
    return out;
  }

  std::vector<double> probs() const {
    auto lp = log_probs();
    for (double& x : lp) x = std::exp(x);
    return lp;
  }
};

// Builds forward graphs over a tape for one (source, target-prefix) pair.
// grads may be null for pure inference.
template <typename T>
class GraphBuilder {
 public:
  GraphBuilder(TapeT<T>& tape, const ModelConfig& cfg, const ModelParamsT<T>& params,
               ModelParamsT<T>* grads, bool train_mode = false, SplitMix64* rng = nullptr)
      : tape_(tape), cfg_(cfg), params_(params), grads_(grads),
        train_mode_(train_mode), rng_(rng) {
    if (train_mode_ && cfg_.dropout_rate > 0 && rng_ == nullptr) {
      throw std::invalid_argument("training with dropout requires an rng");
    }
    bind();
  }

  // Self-attention encoder stack; rows beyond content_len are padding.
  int encoder(std::span<const int> src_ids, int content_len) {
    if (src_ids.empty() || content_len < 1) {
      throw std::invalid_argument("cannot encode an empty source");
    }
    const int n = static_cast<int>(src_ids.size());
    AttnMask mask = AttnMask::key_padding(n, n, content_len);
    int x = embed(params_.src_embed, src_ids);
    for (const auto& layer : params_.enc) {
      int a = tape_.layer_norm(x, node(layer.ln1.gain), node(layer.ln1.bias));
      a = attention(a, a, layer.self_attn, mask);
      x = tape_.add(x, drop(a));
      int ff = tape_.layer_norm(x, node(layer.ln2.gain), node(layer.ln2.bias));
      ff = feed_forward(ff, layer.ff);
      x = tape_.add(x, drop(ff));
    }
    return tape_.layer_norm(x, node(params_.enc_final_ln.gain), node(params_.enc_final_ln.bias));
  }

  // Causally masked decoder stack over the prefix, cross-attending into
  // the memory node; returns logits for every prefix position.
  int decoder_logits(std::span<const int> prefix_ids, int memory_node, int memory_content_len) {
    if (prefix_ids.empty()) throw std::invalid_argument("cannot decode an empty prefix");
    if (prefix_ids.front() != tokenizer::Vocab::bos_id) {
      throw std::invalid_argument("decoder prefix must start with <bos>");
    }
    const int m = static_cast<int>(prefix_ids.size());
    const int n_mem = tape_.value(memory_node).rows;
    AttnMask causal = AttnMask::causal(m);
    AttnMask cross = AttnMask::key_padding(m, n_mem, memory_content_len);
    int x = embed(params_.tgt_embed, prefix_ids);
    for (const auto& layer : params_.dec) {
      int a = tape_.layer_norm(x, node(layer.ln1.gain), node(layer.ln1.bias));
      a = attention(a, a, layer.self_attn, causal);
      x = tape_.add(x, drop(a));
      int c = tape_.layer_norm(x, node(layer.ln2.gain), node(layer.ln2.bias));
      c = attention(c, memory_node, layer.cross_attn, cross);
      x = tape_.add(x, drop(c));
      int ff = tape_.layer_norm(x, node(layer.ln3.gain), node(layer.ln3.bias));
      ff = feed_forward(ff, layer.ff);
      x = tape_.add(x, drop(ff));
    }
    x = tape_.layer_norm(x, node(params_.dec_final_ln.gain), node(params_.dec_final_ln.bias));
    return tape_.add_rowvec(tape_.matmul(x, node(params_.w_out)), node(params_.b_out));
  }

 private:
  int node(const MatT<T>& tensor) {
    auto it = cache_.find(&tensor);
    if (it != cache_.end()) return it->second;
    auto grad_it = grad_of_.find(&tensor);
    int id = tape_.param(tensor, grad_it == grad_of_.end() ? nullptr : grad_it->second);
    cache_[&tensor] = id;
    return id;
  }

  int embed(const MatT<T>& table, std::span<const int> ids) {
    int x = tape_.gather_rows(node(table), std::vector<int>(ids.begin(), ids.end()));
    x = tape_.scale(x, static_cast<T>(std::sqrt(static_cast<double>(cfg_.d_model))));
    x = tape_.add(x, tape_.constant(sinusoidal_positions<T>(static_cast<int>(ids.size()), cfg_.d_model)));
    return drop(x);
  }

  int attention(int q_in, int kv_in, const AttentionParamsT<T>& p, const AttnMask& mask) {
    std::vector<int> heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg_.d_k));
    for (std::size_t h = 0; h < p.wq.size(); ++h) {
      int qh = tape_.matmul(q_in, node(p.wq[h]));
      int kh = tape_.matmul(kv_in, node(p.wk[h]));
      int vh = tape_.matmul(kv_in, node(p.wv[h]));
      int scores = tape_.scale(tape_.matmul_nt(qh, kh), static_cast<T>(inv_sqrt_dk));
      int probs = tape_.softmax_rows(scores, mask.visible);
      heads.push_back(tape_.matmul(probs, vh));
    }
    return tape_.matmul(tape_.concat_cols(heads), node(p.wo));
  }

  int feed_forward(int x, const FeedForwardParamsT<T>& ff) {
    int h = tape_.relu(tape_.add_rowvec(tape_.matmul(x, node(ff.w1)), node(ff.b1)));
    return tape_.add_rowvec(tape_.matmul(h, node(ff.w2)), node(ff.b2));
  }

  int drop(int x) {
    if (!train_mode_ || cfg_.dropout_rate <= 0) return x;
    return tape_.dropout(x, cfg_.dropout_rate, *rng_);
  }

  void bind() {
    if (grads_ == nullptr) return;
    std::vector<const MatT<T>*> param_ptrs;
    std::vector<MatT<T>*> grad_ptrs;
    params_.for_each_tensor([&](const std::string&, const MatT<T>& m) { param_ptrs.push_back(&m); });
    grads_->for_each_tensor([&](const std::string&, MatT<T>& m) { grad_ptrs.push_back(&m); });
    for (std::size_t i = 0; i < param_ptrs.size(); ++i) grad_of_[param_ptrs[i]] = grad_ptrs[i];
  }

  TapeT<T>& tape_;
  const ModelConfig& cfg_;
  const ModelParamsT<T>& params_;
  ModelParamsT<T>* grads_;
  bool train_mode_;
  SplitMix64* rng_;
  std::unordered_map<const MatT<T>*, int> cache_;
  std::unordered_map<const MatT<T>*, MatT<T>*> grad_of_;
};

// Value-level encode: runs the encoder stack and extracts Z.
template <typename T>
MemoryT<T> encode(const ModelConfig& cfg, const ModelParamsT<T>& params,
                  const tokenizer::TokenSequence& src, bool train_mode = false,
                  SplitMix64* rng = nullptr) {
  TapeT<T> tape;
  GraphBuilder<T> builder(tape, cfg, params, nullptr, train_mode, rng);
  int memory = builder.encoder(src.ids, src.content_len);
  return {tape.value(memory), src.content_len};
}

// Value-level decoder forward over a fixed memory: one StepDistribution
// per prefix position (position i predicts token i+1).
template <typename T>
std::vector<StepDistribution> decode_logits(const ModelConfig& cfg, const ModelParamsT<T>& params,
                                            const tokenizer::TokenSequence& prefix,
                                            const MemoryT<T>& memory, bool train_mode = false,
                                            SplitMix64* rng = nullptr) {
  TapeT<T> tape;
  GraphBuilder<T> builder(tape, cfg, params, nullptr, train_mode, rng);
  int mem_node = tape.constant(memory.z);
  int logits = builder.decoder_logits(prefix.ids, mem_node, memory.content_len);
  const MatT<T>& lv = tape.value(logits);
  std::vector<StepDistribution> out(static_cast<std::size_t>(lv.rows));
  for (int i = 0; i < lv.rows; ++i) {
    out[static_cast<std::size_t>(i)].logits.resize(static_cast<std::size_t>(lv.cols));
    for (int j = 0; j < lv.cols; ++j) {
      out[static_cast<std::size_t>(i)].logits[static_cast<std::size_t>(j)] = lv.at(i, j);
    }
  }
  return out;
}

struct LossValue {
  double sum = 0.0;
  int token_count = 0;

  double mean() const { return token_count > 0 ? sum / token_count : 0.0; }
};

// Teacher-forced cross entropy: row i of `logits` predicts gold[i]; rows
// whose gold symbol is <pad> are excluded.
template <typename T>
LossValue loss_from_logits(const MatT<T>& logits, std::span<const int> gold,
                           int skip_id = tokenizer::Vocab::pad_id) {
  if (static_cast<int>(gold.size()) != logits.rows) {
    throw std::invalid_argument("one logits row per gold symbol required");
  }
  LossValue loss;
  for (int i = 0; i < logits.rows; ++i) {
    const int y = gold[static_cast<std::size_t>(i)];
    if (y == skip_id) continue;
    if (y < 0 || y >= logits.cols) throw std::out_of_range("gold id out of vocabulary range");
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < logits.cols; ++j) max_logit = std::max(max_logit, static_cast<double>(logits.at(i, j)));
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) sum += std::exp(static_cast<double>(logits.at(i, j)) - max_logit);
    loss.sum += max_logit + std::log(sum) - static_cast<double>(logits.at(i, y));
    ++loss.token_count;
  }
  return loss;
}

// One recorded forward for a (source, target) training pair. Holds the
// tape so backward() can be replayed after inspection.
template <typename T>
struct LossGraph {
  std::unique_ptr<TapeT<T>> tape;
  int loss_node = -1;
  int logits_node = -1;
  int token_count = 0;

  double loss_sum() const { return tape->value(loss_node).at(0, 0); }
  double loss_mean() const { return token_count > 0 ? loss_sum() / token_count : 0.0; }

  void backward() { tape->backward(loss_node); }
};

template <typename T>
LossGraph<T> teacher_forced_loss(const ModelConfig& cfg, const ModelParamsT<T>& params,
                                 ModelParamsT<T>* grads, const tokenizer::TokenSequence& src,
                                 const tokenizer::TokenSequence& tgt, bool train_mode = false,
                                 SplitMix64* rng = nullptr) {
  if (tgt.ids.size() < 2) throw std::invalid_argument("target must contain <bos> and <eos>");
  LossGraph<T> graph;
  graph.tape = std::make_unique<TapeT<T>>();
  GraphBuilder<T> builder(*graph.tape, cfg, params, grads, train_mode, rng);
  int memory = builder.encoder(src.ids, src.content_len);
  std::vector<int> prefix(tgt.ids.begin(), tgt.ids.end() - 1);
  std::vector<int> gold(tgt.ids.begin() + 1, tgt.ids.end());
  graph.logits_node = builder.decoder_logits(prefix, memory, src.content_len);
  graph.loss_node = graph.tape->cross_entropy_sum(graph.logits_node, gold,
                                                  tokenizer::Vocab::pad_id, &graph.token_count);
  return graph;
}

}  // namespace catmt::model
