#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "catmt/model.hpp"
#include "catmt/tokenizer.hpp"
#include "catmt/vicodec.hpp"

namespace catmt::inference {

struct DecodeConfig {
  enum class Strategy { greedy, beam };
  Strategy strategy = Strategy::greedy;
  int beam_size = 1;
  int max_len = 16;          // content-token budget, specials not counted
  double length_norm_alpha = 0.6;

  void validate() const {
    if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    if (length_norm_alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  }
};

struct Hypothesis {
  std::vector<int> ids;  // starts with <bos>
  double log_prob = 0.0;
  bool finished = false;

  int content_len() const {
    int n = 0;
    for (int id : ids) {
      if (id != tokenizer::Vocab::bos_id && id != tokenizer::Vocab::eos_id &&
          id != tokenizer::Vocab::pad_id) {
        ++n;
      }
    }
    return n;
  }

  double normalized_score(double alpha) const {
    return log_prob / std::pow(static_cast<double>(std::max(1, content_len())), alpha);
  }
};

// Next-token logits given the target prefix so far. Scripted models in
// tests and the real Transformer both fit behind this signature.
using StepFn = std::function<std::vector<double>(const std::vector<int>& prefix)>;

namespace detail {

inline std::vector<double> log_softmax(const std::vector<double>& logits) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double l : logits) max_logit = std::max(max_logit, l);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - max_logit);
  const double log_z = max_logit + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

}  // namespace detail

// Argmax chain from <bos>; ties break toward the lowest token id; stops on
// <eos> or after max_len content tokens.
inline Hypothesis greedy_decode(const StepFn& step, const DecodeConfig& config = {}) {
  config.validate();
  Hypothesis hyp;
  hyp.ids.push_back(tokenizer::Vocab::bos_id);
  for (int steps = 0; !hyp.finished; ++steps) {
    auto lsm = detail::log_softmax(step(hyp.ids));
    int best = 0;
    for (std::size_t j = 1; j < lsm.size(); ++j) {
      if (lsm[j] > lsm[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
    }
    hyp.ids.push_back(best);
    hyp.log_prob += lsm[static_cast<std::size_t>(best)];
    // steps also bounds the loop for degenerate models that keep emitting
    // non-content symbols like <pad>
    if (best == tokenizer::Vocab::eos_id || hyp.content_len() >= config.max_len ||
        steps + 1 >= config.max_len) {
      hyp.finished = true;
    }
  }
  return hyp;
}

struct BeamResult {
  Hypothesis best;
  std::vector<Hypothesis> nbest;  // at most beam_size entries, best first
};

// Standard beam expansion over step log-probabilities: each step keeps the
// top beam_size extensions; an <eos> extension retires and consumes its
// slot (so beam_size 1 follows exactly the greedy argmax chain). The
// search stops once beam_size hypotheses have retired or the depth cap is
// hit, whereupon survivors finish as-is. Final ranking is
// log_prob / content_len^alpha with ties broken by token-id sequence
// order, so decoding is fully deterministic.
inline BeamResult beam_decode(const StepFn& step, const DecodeConfig& config = {}) {
  config.validate();
  Hypothesis start;
  start.ids.push_back(tokenizer::Vocab::bos_id);
  std::vector<Hypothesis> active{start};
  std::vector<Hypothesis> finished;

  for (int depth = 0; depth < config.max_len && !active.empty(); ++depth) {
    struct Candidate {
      double log_prob;
      const Hypothesis* parent;
      int token;
    };
    std::vector<Candidate> candidates;
    for (const Hypothesis& hyp : active) {
      auto lsm = detail::log_softmax(step(hyp.ids));
      for (std::size_t tok = 0; tok < lsm.size(); ++tok) {
        candidates.push_back({hyp.log_prob + lsm[tok], &hyp, static_cast<int>(tok)});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.parent->ids != b.parent->ids) return a.parent->ids < b.parent->ids;
      return a.token < b.token;
    });
    std::vector<Hypothesis> next;
    int taken = 0;
    for (const Candidate& cand : candidates) {
      if (taken >= config.beam_size) break;
      ++taken;
      Hypothesis extended = *cand.parent;
      extended.ids.push_back(cand.token);
      extended.log_prob = cand.log_prob;
      if (cand.token == tokenizer::Vocab::eos_id || extended.content_len() >= config.max_len) {
        extended.finished = true;
        finished.push_back(std::move(extended));
      } else {
        next.push_back(std::move(extended));
      }
    }
    active = std::move(next);
    if (static_cast<int>(finished.size()) >= config.beam_size) {
      active.clear();  // search budget spent
      break;
    }
  }
  // Anything still active hit the depth limit without finishing.
  for (Hypothesis& hyp : active) {
    hyp.finished = true;
    finished.push_back(std::move(hyp));
  }
  if (finished.empty()) throw std::runtime_error("beam search produced no hypotheses");
  std::stable_sort(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    const double sa = a.normalized_score(config.length_norm_alpha);
    const double sb = b.normalized_score(config.length_norm_alpha);
    if (sa != sb) return sa > sb;
    return a.ids < b.ids;
  });
  BeamResult result;
  if (finished.size() > static_cast<std::size_t>(config.beam_size)) {
    finished.resize(static_cast<std::size_t>(config.beam_size));
  }
  result.best = finished.front();
  result.nbest = std::move(finished);
  return result;
}

// Sum of the model's stepwise log-softmax values along a forced token
// path; used to cross-check Hypothesis::log_prob.
inline double rescore(const StepFn& step, const std::vector<int>& ids) {
  if (ids.empty() || ids.front() != tokenizer::Vocab::bos_id) {
    throw std::invalid_argument("rescore path must start with <bos>");
  }
  double total = 0.0;
  std::vector<int> prefix{tokenizer::Vocab::bos_id};
  for (std::size_t i = 1; i < ids.size(); ++i) {
    auto lsm = detail::log_softmax(step(prefix));
    total += lsm[static_cast<std::size_t>(ids[i])];
    prefix.push_back(ids[i]);
  }
  return total;
}

// Binds a model + memory into a StepFn: re-runs the decoder on the whole
// prefix and returns the last position's logits.
template <typename T>
StepFn make_step_fn(const model::ModelConfig& cfg, const model::ModelParamsT<T>& params,
                    const model::MemoryT<T>& memory) {
  return [&cfg, &params, &memory](const std::vector<int>& prefix) {
    tokenizer::TokenSequence seq;
    seq.ids = prefix;
    seq.role = tokenizer::Side::target;
    auto steps = model::decode_logits(cfg, params, seq, memory);
    return steps.back().logits;
  };
}

// Everything needed to turn an English string into readable Vietnamese.
struct ModelBundle {
  model::ModelConfig config;
  model::ModelParams params;
  tokenizer::Vocab src_vocab;
  tokenizer::Vocab tgt_vocab;
  DecodeConfig decode;
};

inline Hypothesis decode_hypothesis(const ModelBundle& bundle, const model::Memory& memory) {
  auto step = make_step_fn(bundle.config, bundle.params, memory);
  if (bundle.decode.strategy == DecodeConfig::Strategy::beam) {
    return beam_decode(step, bundle.decode).best;
  }
  return greedy_decode(step, bundle.decode);
}

// encode_ids -> decode -> decode_ids -> vicodec.decode. An input that
// tokenizes to nothing gives the model no source context to attend to, so
// it translates to the empty string.
inline std::string translate(const ModelBundle& bundle, const std::string& english) {
  auto src = tokenizer::encode_ids(english, bundle.src_vocab, /*add_specials=*/false,
                                   tokenizer::Side::source, bundle.config.max_len);
  if (src.content_len == 0) return "";
  auto memory = model::encode(bundle.config, bundle.params, src);
  Hypothesis hyp = decode_hypothesis(bundle, memory);
  tokenizer::TokenSequence out;
  out.ids = hyp.ids;
  out.role = tokenizer::Side::target;
  std::string encoded = tokenizer::decode_ids(out, bundle.tgt_vocab);
  return vicodec::decode(encoded).text;
}

}  // namespace catmt::inference
