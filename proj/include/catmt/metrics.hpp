#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "catmt/text.hpp"
#include "catmt/vicodec.hpp"

namespace catmt::metrics {

struct EvalPair {
  std::vector<std::string> hyp;
  std::vector<std::string> ref;
};

struct EvalReport {
  double rouge_l = 0.0;
  double bleu = 0.0;
  double meteor = 0.0;
  int pair_count = 0;
};

namespace detail {

inline std::map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += tokens[i + static_cast<std::size_t>(j)];
    }
    ++counts[key];
  }
  return counts;
}

inline int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// Exact-match unigram alignment statistics: the maximum match count and,
// among maximum alignments, the fewest chunks (maximal runs contiguous and
// identically ordered in both sides).
struct AlignmentStats {
  int matches = 0;
  int chunks = 0;
};

class ChunkMinimizer {
 public:
  ChunkMinimizer(const std::vector<std::string>& hyp, const std::vector<std::string>& ref)
      : hyp_(hyp), ref_(ref) {
    std::map<std::string, int> hyp_counts, ref_counts;
    for (const auto& t : hyp) ++hyp_counts[t];
    for (const auto& t : ref) ++ref_counts[t];
    for (const auto& [w, c] : hyp_counts) {
      auto it = ref_counts.find(w);
      if (it != ref_counts.end()) target_matches_ += std::min(c, it->second);
    }
  }

  AlignmentStats run() {
    if (target_matches_ == 0) return {0, 0};
    if (ref_.size() > 63 || hyp_.size() > 63) {
      // Out of scope for category names; fall back to a greedy
      // left-to-right earliest-unused alignment.
      return greedy();
    }
    best_chunks_ = std::numeric_limits<int>::max();
    dfs(0, 0ULL, -2, 0, 0);
    return {target_matches_, best_chunks_};
  }

 private:
  AlignmentStats greedy() {
    std::vector<bool> used(ref_.size(), false);
    int matches = 0, chunks = 0, prev_ref = -2;
    for (std::size_t i = 0; i < hyp_.size(); ++i) {
      int pick = -1;
      // prefer the chunk-extending position, then the earliest unused
      if (prev_ref >= 0 && static_cast<std::size_t>(prev_ref + 1) < ref_.size() &&
          !used[static_cast<std::size_t>(prev_ref + 1)] &&
          ref_[static_cast<std::size_t>(prev_ref + 1)] == hyp_[i]) {
        pick = prev_ref + 1;
      } else {
        for (std::size_t j = 0; j < ref_.size(); ++j) {
          if (!used[j] && ref_[j] == hyp_[i]) {
            pick = static_cast<int>(j);
            break;
          }
        }
      }
      if (pick >= 0) {
        used[static_cast<std::size_t>(pick)] = true;
        chunks += (prev_ref >= 0 && pick == prev_ref + 1) ? 0 : 1;
        ++matches;
        prev_ref = pick;
      } else {
        prev_ref = -2;
      }
    }
    return {matches, chunks};
  }

  // Upper bound on matches still reachable from hyp position i.
  int remaining_bound(std::size_t i, std::uint64_t used) const {
    int bound = 0;
    for (std::size_t k = i; k < hyp_.size(); ++k) {
      for (std::size_t j = 0; j < ref_.size(); ++j) {
        if (!(used & (1ULL << j)) && ref_[j] == hyp_[k]) {
          ++bound;
          break;
        }
      }
    }
    return bound;
  }

  void dfs(std::size_t i, std::uint64_t used, int prev_ref, int matches, int chunks) {
    if (chunks >= best_chunks_) return;
    if (matches + remaining_bound(i, used) < target_matches_) return;
    if (i == hyp_.size()) {
      if (matches == target_matches_) best_chunks_ = std::min(best_chunks_, chunks);
      return;
    }
    // chunk-extending match first so the bound tightens early
    if (prev_ref >= 0) {
      const std::size_t j = static_cast<std::size_t>(prev_ref) + 1;
      if (j < ref_.size() && !(used & (1ULL << j)) && ref_[j] == hyp_[i]) {
        dfs(i + 1, used | (1ULL << j), static_cast<int>(j), matches + 1, chunks);
      }
    }
    for (std::size_t j = 0; j < ref_.size(); ++j) {
      if (prev_ref >= 0 && j == static_cast<std::size_t>(prev_ref) + 1) continue;  // done above
      if (!(used & (1ULL << j)) && ref_[j] == hyp_[i]) {
        dfs(i + 1, used | (1ULL << j), static_cast<int>(j), matches + 1, chunks + 1);
      }
    }
    dfs(i + 1, used, -2, matches, chunks);  // leave hyp_[i] unmatched
  }

  const std::vector<std::string>& hyp_;
  const std::vector<std::string>& ref_;
  int target_matches_ = 0;
  int best_chunks_ = 0;
};

}  // namespace detail

// Corpus-level BLEU-4: clipped n-gram counts aggregated over the corpus,
// uniform-weight geometric mean, brevity penalty exp(min(0, 1 - r/c)).
// A zero aggregate numerator for some order is floored at 0.1 before the
// division, so short-reference corpora stay comparable.
inline double bleu(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("bleu needs at least one pair");
  constexpr int kMaxOrder = 4;
  constexpr double kFloor = 0.1;
  std::array<std::int64_t, kMaxOrder> numerators{}, denominators{};
  std::int64_t hyp_len = 0, ref_len = 0;
  for (const auto& pair : pairs) {
    hyp_len += static_cast<std::int64_t>(pair.hyp.size());
    ref_len += static_cast<std::int64_t>(pair.ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      auto hyp_counts = detail::ngram_counts(pair.hyp, n);
      auto ref_counts = detail::ngram_counts(pair.ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        denominators[static_cast<std::size_t>(n - 1)] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) {
          numerators[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
        }
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_precision_sum = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    const double num = numerators[static_cast<std::size_t>(n)] > 0
                           ? static_cast<double>(numerators[static_cast<std::size_t>(n)])
                           : kFloor;
    const double den = std::max<std::int64_t>(denominators[static_cast<std::size_t>(n)], 1);
    log_precision_sum += std::log(num / den);
  }
  const double brevity =
      std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
  return brevity * std::exp(log_precision_sum / kMaxOrder);
}

// Mean per-pair LCS F1 (beta = 1).
inline double rouge_l(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("rouge_l needs at least one pair");
  double total = 0.0;
  for (const auto& pair : pairs) {
    const int lcs = detail::lcs_length(pair.hyp, pair.ref);
    const double p = pair.hyp.empty() ? 0.0 : static_cast<double>(lcs) / pair.hyp.size();
    const double r = pair.ref.empty() ? 0.0 : static_cast<double>(lcs) / pair.ref.size();
    total += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return total / static_cast<double>(pairs.size());
}

// Exact-match METEOR: one-to-one unigram alignment with the fewest chunks
// among maximum-match alignments; F_mean = 10PR/(R+9P); fragmentation
// penalty 0.5 * (chunks/matches)^3. No stemming or synonymy stages.
inline double meteor(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("meteor needs at least one pair");
  double total = 0.0;
  for (const auto& pair : pairs) {
    detail::ChunkMinimizer minimizer(pair.hyp, pair.ref);
    auto stats = minimizer.run();
    if (stats.matches == 0) continue;
    const double m = stats.matches;
    const double p = m / static_cast<double>(pair.hyp.size());
    const double r = m / static_cast<double>(pair.ref.size());
    const double f_mean = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(stats.chunks) / m;
    const double penalty = 0.5 * frag * frag * frag;
    total += f_mean * (1.0 - penalty);
  }
  return total / static_cast<double>(pairs.size());
}

struct EvalOptions {
  bool lowercase = false;
};

inline EvalPair make_eval_pair(const std::string& hyp_line, const std::string& ref_line,
                               const EvalOptions& options = {}) {
  // Scoring happens on readable Vietnamese, so codec choices cannot
  // inflate the scores.
  std::string hyp = vicodec::decode(hyp_line).text;
  std::string ref = vicodec::decode(ref_line).text;
  if (options.lowercase) {
    hyp = text::to_lower(hyp);
    ref = text::to_lower(ref);
  }
  return {text::tokenize(hyp), text::tokenize(ref)};
}

inline EvalReport evaluate(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("evaluation needs at least one pair");
  EvalReport report;
  report.pair_count = static_cast<int>(pairs.size());
  report.bleu = bleu(pairs);
  report.rouge_l = rouge_l(pairs);
  report.meteor = meteor(pairs);
  return report;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline EvalReport evaluate_files(const std::filesystem::path& hyp_path,
                                 const std::filesystem::path& ref_path,
                                 const EvalOptions& options = {}) {
  auto hyp_lines = read_lines(hyp_path);
  auto ref_lines = read_lines(ref_path);
  if (hyp_lines.size() != ref_lines.size()) {
    throw std::runtime_error("line-count mismatch: " + std::to_string(hyp_lines.size()) + " vs " +
                             std::to_string(ref_lines.size()));
  }
  std::vector<EvalPair> pairs;
  pairs.reserve(hyp_lines.size());
  for (std::size_t i = 0; i < hyp_lines.size(); ++i) {
    pairs.push_back(make_eval_pair(hyp_lines[i], ref_lines[i], options));
  }
  return evaluate(pairs);
}

}  // namespace catmt::metrics
