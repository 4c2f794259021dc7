#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "catmt/rng.hpp"
#include "catmt/text.hpp"
#include "catmt/vicodec.hpp"

namespace catmt::corpus {

// One aligned English/Vietnamese category name, namespace prefixes already
// stripped. encoded_target is the ASCII form of target under vicodec.
struct CategoryPair {
  std::string source;
  std::string target;
  std::string encoded_target;
  std::string qid;  // originating Wikidata item, optional

  bool operator==(const CategoryPair& o) const {
    return source == o.source && target == o.target &&
           encoded_target == o.encoded_target && qid == o.qid;
  }
};

inline CategoryPair make_pair(std::string source, std::string target, std::string qid = "") {
  CategoryPair pair;
  pair.source = text::trim(source);
  pair.target = text::trim(target);
  pair.encoded_target = vicodec::encode(pair.target).text;
  pair.qid = std::move(qid);
  return pair;
}

class Dataset {
 public:
  Dataset() = default;

  // Returns false (and stores nothing) for a duplicate (source, target).
  bool add(CategoryPair pair) {
    if (pair.source.empty() || pair.target.empty()) {
      throw std::invalid_argument("category pair with empty source or target");
    }
    if (!keys_.insert(pair.source + '\x1f' + pair.target).second) return false;
    pairs_.push_back(std::move(pair));
    return true;
  }

  bool contains(const std::string& source, const std::string& target) const {
    return keys_.count(source + '\x1f' + target) > 0;
  }

  const std::vector<CategoryPair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }

  bool operator==(const Dataset& o) const { return pairs_ == o.pairs_; }

 private:
  std::vector<CategoryPair> pairs_;
  std::unordered_set<std::string> keys_;
};

// Line-delimited JSON, one pair per line:
//   {"source": ..., "target": ..., "encoded_target": ..., "qid": ...}
inline void save(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& pair : dataset.pairs()) {
    nlohmann::json j{{"source", pair.source},
                     {"target", pair.target},
                     {"encoded_target", pair.encoded_target}};
    if (!pair.qid.empty()) j["qid"] = pair.qid;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline Dataset load(const std::filesystem::path& path,
                    std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  Dataset dataset;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      CategoryPair pair;
      pair.source = j.at("source").get<std::string>();
      pair.target = j.at("target").get<std::string>();
      pair.encoded_target = j.value("encoded_target", std::string());
      pair.qid = j.value("qid", std::string());
      if (pair.encoded_target.empty()) {
        pair.encoded_target = vicodec::encode(pair.target).text;
      }
      if (text::trim(pair.source).empty() || text::trim(pair.target).empty()) {
        throw std::runtime_error("empty source or target");
      }
      if (!dataset.add(std::move(pair)) && warnings) {
        warnings->push_back(path.string() + ":" + std::to_string(line_no) +
                            ": duplicate pair skipped");
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed record: " + e.what());
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed record: " + e.what());
    }
  }
  return dataset;
}

// Ratios are kept as integer parts (e.g. 8:1:1) so the arithmetic is exact.
struct SplitSpec {
  std::array<std::uint64_t, 3> ratio_parts{8, 1, 1};
  std::uint64_t seed = 42;
};

struct SplitResult {
  Dataset train, val, test;
};

// Seeded Fisher-Yates shuffle (SplitMix64 indices), then a contiguous
// partition. Sizes are floor-allocated; remainders go to train.
inline SplitResult split(const Dataset& dataset, const SplitSpec& spec) {
  const std::uint64_t total =
      spec.ratio_parts[0] + spec.ratio_parts[1] + spec.ratio_parts[2];
  if (total == 0) throw std::invalid_argument("split ratios sum to zero");
  if (dataset.empty()) throw std::invalid_argument("cannot split an empty dataset");

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(spec.seed);
  rng.shuffle(order);

  const std::uint64_t n = dataset.size();
  std::uint64_t n_val = n * spec.ratio_parts[1] / total;
  std::uint64_t n_test = n * spec.ratio_parts[2] / total;
  std::uint64_t n_train = n - n_val - n_test;

  SplitResult result;
  for (std::uint64_t i = 0; i < n; ++i) {
    const CategoryPair& pair = dataset.pairs()[order[i]];
    if (i < n_train) {
      result.train.add(pair);
    } else if (i < n_train + n_val) {
      result.val.add(pair);
    } else {
      result.test.add(pair);
    }
  }
  return result;
}

struct WordCount {
  std::string word;
  std::uint64_t count;

  bool operator==(const WordCount& o) const { return word == o.word && count == o.count; }
};

struct CorpusStats {
  std::uint64_t max_source_len = 0;
  std::uint64_t max_target_len = 0;
  std::uint64_t vocab_source_sensitive = 0;
  std::uint64_t vocab_target_sensitive = 0;
  std::uint64_t vocab_source_insensitive = 0;
  std::uint64_t vocab_target_insensitive = 0;
  std::uint64_t total_source_tokens = 0;
  std::uint64_t total_target_tokens = 0;
  std::vector<WordCount> top_source_words, top_target_words;
  std::vector<WordCount> rare_source_words, rare_target_words;
};

namespace detail {

inline std::vector<WordCount> ranked(const std::map<std::string, std::uint64_t>& counts,
                                     std::size_t k, bool descending) {
  std::vector<WordCount> all;
  all.reserve(counts.size());
  for (const auto& [w, c] : counts) all.push_back({w, c});
  std::stable_sort(all.begin(), all.end(), [&](const WordCount& a, const WordCount& b) {
    if (a.count != b.count) return descending ? a.count > b.count : a.count < b.count;
    return a.word < b.word;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

}  // namespace detail

// Word lists are reported case-insensitively (lowercased), which is what
// the dataset analyses tabulate; vocabulary sizes are reported both ways.
inline CorpusStats analyze(const Dataset& dataset, int top_k) {
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  CorpusStats stats;
  std::set<std::string> src_sens, tgt_sens;
  std::map<std::string, std::uint64_t> src_insens, tgt_insens;
  for (const auto& pair : dataset.pairs()) {
    auto src_tokens = text::tokenize(pair.source);
    auto tgt_tokens = text::tokenize(pair.target);
    stats.max_source_len = std::max<std::uint64_t>(stats.max_source_len, src_tokens.size());
    stats.max_target_len = std::max<std::uint64_t>(stats.max_target_len, tgt_tokens.size());
    stats.total_source_tokens += src_tokens.size();
    stats.total_target_tokens += tgt_tokens.size();
    for (const auto& t : src_tokens) {
      src_sens.insert(t);
      ++src_insens[text::to_lower(t)];
    }
    for (const auto& t : tgt_tokens) {
      tgt_sens.insert(t);
      ++tgt_insens[text::to_lower(t)];
    }
  }
  stats.vocab_source_sensitive = src_sens.size();
  stats.vocab_target_sensitive = tgt_sens.size();
  stats.vocab_source_insensitive = src_insens.size();
  stats.vocab_target_insensitive = tgt_insens.size();
  const auto k = static_cast<std::size_t>(top_k);
  stats.top_source_words = detail::ranked(src_insens, k, true);
  stats.top_target_words = detail::ranked(tgt_insens, k, true);
  stats.rare_source_words = detail::ranked(src_insens, k, false);
  stats.rare_target_words = detail::ranked(tgt_insens, k, false);
  return stats;
}

inline nlohmann::json stats_to_json(const CorpusStats& s) {
  auto words = [](const std::vector<WordCount>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& wc : v) arr.push_back({{"word", wc.word}, {"count", wc.count}});
    return arr;
  };
  return nlohmann::json{{"max_source_len", s.max_source_len},
                        {"max_target_len", s.max_target_len},
                        {"vocab_source_sensitive", s.vocab_source_sensitive},
                        {"vocab_target_sensitive", s.vocab_target_sensitive},
                        {"vocab_source_insensitive", s.vocab_source_insensitive},
                        {"vocab_target_insensitive", s.vocab_target_insensitive},
                        {"total_source_tokens", s.total_source_tokens},
                        {"total_target_tokens", s.total_target_tokens},
                        {"top_source_words", words(s.top_source_words)},
                        {"top_target_words", words(s.top_target_words)},
                        {"rare_source_words", words(s.rare_source_words)},
                        {"rare_target_words", words(s.rare_target_words)}};
}

}  // namespace catmt::corpus
