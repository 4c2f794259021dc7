#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "catmt/corpus.hpp"
#include "catmt/rng.hpp"

namespace catmt::harvester {

constexpr int kMaxIdsPerRequest = 50;  // the wbgetentities cap

struct QidBatch {
  std::vector<std::string> ids;
};

struct EntityRecord {
  std::string qid;
  std::map<std::string, std::string> sitelinks;  // wiki code -> page title
};

struct HarvestConfig {
  int target_count = 15000;
  std::uint64_t max_qid = 130000000;  // current Wikidata id space; drifts, so configurable
  int concurrency = 1;
  std::chrono::milliseconds min_request_interval{0};
  std::string user_agent;
  std::uint64_t seed = 42;
  std::uint64_t attempt_budget = 1000000;  // ids probed before giving up
  std::string src_wiki = "enwiki";
  std::string tgt_wiki = "viwiki";
  std::string src_prefix = "Category:";
  std::string tgt_prefix = "Thể loại:";
  std::filesystem::path checkpoint_path;
  bool resume = false;

  void validate() const {
    if (target_count < 1) throw std::invalid_argument("target_count must be >= 1");
    if (concurrency < 1) throw std::invalid_argument("concurrency must be >= 1");
    if (max_qid < 1) throw std::invalid_argument("max_qid must be >= 1");
  }
};

// Monotonic time source; injectable so pacing is testable.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::chrono::milliseconds now() = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock : public Clock {
 public:
  std::chrono::milliseconds now() override {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now().time_since_epoch());
  }
  void sleep_for(std::chrono::milliseconds d) override { std::this_thread::sleep_for(d); }
};

class MockClock : public Clock {
 public:
  std::chrono::milliseconds now() override {
    std::lock_guard<std::mutex> lock(mu_);
    return now_;
  }
  void sleep_for(std::chrono::milliseconds d) override {
    std::lock_guard<std::mutex> lock(mu_);
    now_ += d;
  }

 private:
  std::mutex mu_;
  std::chrono::milliseconds now_{0};
};

// Shared limiter: consecutive acquisitions are spaced by at least the
// minimum interval, across all workers.
class RateLimiter {
 public:
  RateLimiter(Clock& clock, std::chrono::milliseconds min_interval)
      : clock_(clock), min_interval_(min_interval) {}

  void acquire() {
    std::lock_guard<std::mutex> lock(mu_);
    auto now = clock_.now();
    if (has_next_ && now < next_allowed_) {
      clock_.sleep_for(next_allowed_ - now);
      now = next_allowed_;
    }
    next_allowed_ = now + min_interval_;
    has_next_ = true;
  }

 private:
  Clock& clock_;
  std::chrono::milliseconds min_interval_;
  std::mutex mu_;
  std::chrono::milliseconds next_allowed_{0};
  bool has_next_ = false;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// MediaWiki API transport; `query` is the raw query string for
// /w/api.php. Injected so tests run on recorded fixtures.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse get(const std::string& query) = 0;
};

// Serves wbgetentities responses from a JSON universe:
//   {"Q64": {"enwiki": "Category:...", "viwiki": "Thể loại:..."}, ...}
// The path may be one file or a directory whose *.json files are merged.
// Unknown ids come back with the API's "missing" marker.
class FixtureTransport : public Transport {
 public:
  explicit FixtureTransport(const std::filesystem::path& universe_path) {
    universe_ = nlohmann::json::object();
    auto merge_file = [this](const std::filesystem::path& file) {
      std::ifstream in(file);
      if (!in) throw std::runtime_error("cannot open fixture universe: " + file.string());
      nlohmann::json part;
      in >> part;
      universe_.update(part);
    };
    if (std::filesystem::is_directory(universe_path)) {
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::directory_iterator(universe_path)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path());
      }
      if (files.empty()) {
        throw std::runtime_error("no .json fixtures in " + universe_path.string());
      }
      std::sort(files.begin(), files.end());
      for (const auto& file : files) merge_file(file);
    } else {
      merge_file(universe_path);
    }
  }

  explicit FixtureTransport(nlohmann::json universe) : universe_(std::move(universe)) {}

  HttpResponse get(const std::string& query) override {
    request_count_.fetch_add(1, std::memory_order_relaxed);
    auto ids_param = param(query, "ids");
    if (!ids_param) return {400, R"({"error":{"code":"missingparam"}})"};
    nlohmann::json entities = nlohmann::json::object();
    std::string id;
    std::istringstream stream(*ids_param);
    while (std::getline(stream, id, '|')) {
      if (universe_.contains(id)) {
        nlohmann::json sitelinks = nlohmann::json::object();
        for (auto& [wiki, title] : universe_.at(id).items()) {
          sitelinks[wiki] = {{"site", wiki}, {"title", title}};
        }
        entities[id] = {{"id", id}, {"sitelinks", sitelinks}};
      } else {
        entities[id] = {{"id", id}, {"missing", ""}};
      }
    }
    return {200, nlohmann::json{{"entities", entities}}.dump()};
  }

  int request_count() const { return request_count_.load(std::memory_order_relaxed); }

 private:
  static std::optional<std::string> param(const std::string& query, const std::string& key) {
    std::istringstream stream(query);
    std::string part;
    while (std::getline(stream, part, '&')) {
      if (part.rfind(key + "=", 0) == 0) return part.substr(key.size() + 1);
    }
    return std::nullopt;
  }

  nlohmann::json universe_;
  std::atomic<int> request_count_{0};
};

// n ids uniform in [1, max_qid] from the seeded generator, chunked into
// batches of at most 50.
inline std::vector<QidBatch> random_qids(int n, std::uint64_t max_qid, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (max_qid < 1) throw std::invalid_argument("max_qid must be >= 1");
  SplitMix64 rng(seed);
  std::vector<QidBatch> batches;
  QidBatch current;
  for (int i = 0; i < n; ++i) {
    current.ids.push_back("Q" + std::to_string(1 + rng.next_below(max_qid)));
    if (static_cast<int>(current.ids.size()) == kMaxIdsPerRequest) {
      batches.push_back(std::move(current));
      current = {};
    }
  }
  if (!current.ids.empty()) batches.push_back(std::move(current));
  return batches;
}

inline std::string build_query(const QidBatch& batch) {
  std::string ids;
  for (std::size_t i = 0; i < batch.ids.size(); ++i) {
    if (i) ids += '|';
    ids += batch.ids[i];
  }
  return "action=wbgetentities&props=sitelinks&format=json&ids=" + ids;
}

// One round trip for a batch: existing ids yield records, missing ids are
// dropped, transient failures (HTTP 429/5xx) are retried with exponential
// backoff, three attempts in total.
inline std::vector<EntityRecord> fetch_entities(const QidBatch& batch, Transport& transport,
                                                RateLimiter& limiter, Clock& clock) {
  if (batch.ids.empty()) return {};
  if (static_cast<int>(batch.ids.size()) > kMaxIdsPerRequest) {
    throw std::invalid_argument("batch exceeds the API id cap");
  }
  const std::string query = build_query(batch);
  HttpResponse response;
  constexpr int kAttempts = 3;
  for (int attempt = 1; attempt <= kAttempts; ++attempt) {
    limiter.acquire();
    response = transport.get(query);
    const bool transient = response.status == 429 || response.status >= 500 || response.status == 0;
    if (!transient) break;
    if (attempt == kAttempts) {
      throw std::runtime_error("request failed after " + std::to_string(kAttempts) +
                               " attempts (HTTP " + std::to_string(response.status) +
                               ") for ids starting at " + batch.ids.front());
    }
    clock.sleep_for(std::chrono::milliseconds(500L << (attempt - 1)));
  }
  if (response.status != 200) {
    throw std::runtime_error("HTTP " + std::to_string(response.status) +
                             " for ids starting at " + batch.ids.front());
  }
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(response.body);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed payload for ids starting at " + batch.ids.front() + ": " +
                             e.what());
  }
  if (body.contains("error")) {
    throw std::runtime_error("API error for ids starting at " + batch.ids.front() + ": " +
                             body["error"].dump());
  }
  std::vector<EntityRecord> records;
  if (!body.contains("entities")) return records;
  for (const std::string& qid : batch.ids) {
    if (!body["entities"].contains(qid)) continue;
    const auto& entity = body["entities"][qid];
    if (entity.contains("missing")) continue;
    EntityRecord record;
    record.qid = qid;
    if (entity.contains("sitelinks")) {
      for (auto& [wiki, link] : entity["sitelinks"].items()) {
        if (link.contains("title")) record.sitelinks[wiki] = link["title"].get<std::string>();
      }
    }
    records.push_back(std::move(record));
  }
  return records;
}

// A record becomes a pair iff both wikis link it under their category
// namespace; the prefixes are stripped.
inline std::optional<corpus::CategoryPair> extract_pair(const EntityRecord& record,
                                                        const HarvestConfig& config = {}) {
  auto src = record.sitelinks.find(config.src_wiki);
  auto tgt = record.sitelinks.find(config.tgt_wiki);
  if (src == record.sitelinks.end() || tgt == record.sitelinks.end()) return std::nullopt;
  if (src->second.rfind(config.src_prefix, 0) != 0) return std::nullopt;
  if (tgt->second.rfind(config.tgt_prefix, 0) != 0) return std::nullopt;
  std::string source = text::trim(src->second.substr(config.src_prefix.size()));
  std::string target = text::trim(tgt->second.substr(config.tgt_prefix.size()));
  if (source.empty() || target.empty()) return std::nullopt;
  return corpus::make_pair(source, target, record.qid);
}

struct HarvestResult {
  corpus::Dataset dataset;
  bool complete = false;
  std::uint64_t ids_probed = 0;
};

namespace detail {

struct HarvestState {
  std::mutex mu;
  SplitMix64 rng{0};
  std::set<std::string> visited;
  corpus::Dataset sink;
  std::uint64_t ids_probed = 0;
  std::uint64_t round = 0;
  std::string failure;
};

inline void save_progress(const HarvestConfig& config, HarvestState& state) {
  if (config.checkpoint_path.empty()) return;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : state.sink.pairs()) {
    pairs.push_back({{"source", p.source},
                     {"target", p.target},
                     {"encoded_target", p.encoded_target},
                     {"qid", p.qid}});
  }
  nlohmann::json j{{"visited", state.visited}, {"ids_probed", state.ids_probed}, {"pairs", pairs}};
  const auto tmp = config.checkpoint_path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump();
  }
  std::filesystem::rename(tmp, config.checkpoint_path);
}

inline void load_progress(const HarvestConfig& config, HarvestState& state) {
  if (config.checkpoint_path.empty() || !std::filesystem::exists(config.checkpoint_path)) return;
  std::ifstream in(config.checkpoint_path);
  nlohmann::json j;
  in >> j;
  state.visited = j.at("visited").get<std::set<std::string>>();
  state.ids_probed = j.at("ids_probed").get<std::uint64_t>();
  for (const auto& p : j.at("pairs")) {
    corpus::CategoryPair pair;
    pair.source = p.at("source").get<std::string>();
    pair.target = p.at("target").get<std::string>();
    pair.encoded_target = p.at("encoded_target").get<std::string>();
    pair.qid = p.value("qid", std::string());
    state.sink.add(std::move(pair));
  }
}

}  // namespace detail

// Repeats random_qids -> fetch_entities -> extract_pair, deduplicating
// into the sink, until target_count pairs are collected or the attempt
// budget runs out (partial result, complete == false). Progress is
// checkpointed after every batch so a harvest can resume. Output is
// byte-stable across runs at concurrency 1 with a fixture transport.
inline HarvestResult harvest(const HarvestConfig& config, Transport& transport, Clock& clock) {
  config.validate();
  detail::HarvestState state;
  state.rng = SplitMix64(config.seed);
  if (config.resume) detail::load_progress(config, state);
  RateLimiter limiter(clock, config.min_request_interval);

  auto done = [&](const detail::HarvestState& s) {
    return static_cast<int>(s.sink.size()) >= config.target_count ||
           s.ids_probed >= config.attempt_budget || !s.failure.empty();
  };

  auto worker = [&]() {
    for (;;) {
      QidBatch batch;
      {
        std::lock_guard<std::mutex> lock(state.mu);
        if (done(state)) return;
        while (static_cast<int>(batch.ids.size()) < kMaxIdsPerRequest &&
               state.ids_probed < config.attempt_budget &&
               state.visited.size() < config.max_qid) {  // stop once the id space is exhausted
          ++state.ids_probed;
          std::string qid = "Q" + std::to_string(1 + state.rng.next_below(config.max_qid));
          if (state.visited.insert(qid).second) batch.ids.push_back(std::move(qid));
        }
      }
      if (batch.ids.empty()) return;
      try {
        auto records = fetch_entities(batch, transport, limiter, clock);
        std::lock_guard<std::mutex> lock(state.mu);
        for (const auto& record : records) {
          if (auto pair = extract_pair(record, config)) {
            if (static_cast<int>(state.sink.size()) < config.target_count) {
              state.sink.add(std::move(*pair));
            }
          }
        }
        detail::save_progress(config, state);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(state.mu);
        if (state.failure.empty()) state.failure = e.what();
        return;
      }
    }
  };

  if (config.concurrency == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < config.concurrency; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (!state.failure.empty()) throw std::runtime_error(state.failure);

  HarvestResult result;
  result.dataset = std::move(state.sink);
  result.ids_probed = state.ids_probed;
  result.complete = static_cast<int>(result.dataset.size()) >= config.target_count;
  return result;
}

}  // namespace catmt::harvester
