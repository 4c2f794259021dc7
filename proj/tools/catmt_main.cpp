// catmt: English -> Vietnamese Wikipedia category translation pipeline.
// Subcommands cover the whole flow: harvest, encode/decode, split,
// analyze, train, translate, evaluate.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "catmt/catmt.hpp"

#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#endif

namespace {

using namespace catmt;

std::vector<std::string> read_input_lines(const std::string& path) {
  if (path.empty() || path == "-") {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(std::cin, line)) lines.push_back(line);
    return lines;
  }
  return metrics::read_lines(path);
}

class LineWriter {
 public:
  explicit LineWriter(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot open for writing: " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

void print_config(const std::string& name, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cerr << "config[" << name << "]:";
  for (const auto& [k, v] : kv) std::cerr << ' ' << k << '=' << v;
  std::cerr << '\n';
}

#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
class WikidataTransport : public harvester::Transport {
 public:
  explicit WikidataTransport(std::string user_agent) : user_agent_(std::move(user_agent)) {
    client_ = std::make_unique<httplib::SSLClient>("www.wikidata.org");
    client_->set_follow_location(true);
  }

  harvester::HttpResponse get(const std::string& query) override {
    std::string path = "/w/api.php?" + url_encode(query);
    httplib::Headers headers{{"User-Agent", user_agent_}};
    auto res = client_->Get(path, headers);
    if (!res) return {0, ""};
    return {res->status, res->body};
  }

 private:
  static std::string url_encode(const std::string& query) {
    std::string out;
    for (char c : query) {
      if (c == '|') {
        out += "%7C";
      } else if (c == ' ') {
        out += "%20";
      } else {
        out += c;
      }
    }
    return out;
  }

  std::string user_agent_;
  std::unique_ptr<httplib::SSLClient> client_;
};
#endif

struct SplitRatios {
  std::array<std::uint64_t, 3> parts{8, 1, 1};
};

SplitRatios parse_ratios(const std::string& text) {
  SplitRatios r;
  std::istringstream stream(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(stream, part, ':')) {
    if (i >= 3) throw CLI::ValidationError("--ratios", "expected three ':'-separated integers");
    r.parts[i++] = std::stoull(part);
  }
  if (i != 3) throw CLI::ValidationError("--ratios", "expected three ':'-separated integers");
  if (r.parts[0] + r.parts[1] + r.parts[2] == 0) {
    throw CLI::ValidationError("--ratios", "ratios must not all be zero");
  }
  return r;
}

int run_harvest(const std::string& out_path, const std::string& fixture, bool live,
                harvester::HarvestConfig config) {
  if (config.user_agent.empty()) {
    if (const char* env = std::getenv("CATMT_USER_AGENT")) config.user_agent = env;
  }
  print_config("harvest", {{"out", out_path},
                           {"fixture", fixture.empty() ? "<none>" : fixture},
                           {"live", live ? "true" : "false"},
                           {"target_count", std::to_string(config.target_count)},
                           {"max_qid", std::to_string(config.max_qid)},
                           {"concurrency", std::to_string(config.concurrency)},
                           {"min_interval_ms", std::to_string(config.min_request_interval.count())},
                           {"budget", std::to_string(config.attempt_budget)},
                           {"seed", std::to_string(config.seed)},
                           {"user_agent", config.user_agent.empty() ? "<unset>" : config.user_agent},
                           {"checkpoint", config.checkpoint_path.string()},
                           {"resume", config.resume ? "true" : "false"}});

  std::unique_ptr<harvester::Transport> transport;
  if (live) {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
    if (config.user_agent.empty()) {
      throw std::runtime_error("--live requires --user-agent or CATMT_USER_AGENT");
    }
    transport = std::make_unique<WikidataTransport>(config.user_agent);
#else
    throw std::runtime_error("built without TLS support; --live is unavailable");
#endif
  } else {
    if (fixture.empty()) {
      throw std::runtime_error("either --live or --fixture <universe.json> is required");
    }
    transport = std::make_unique<harvester::FixtureTransport>(std::filesystem::path(fixture));
  }
  harvester::SystemClock clock;
  auto result = harvester::harvest(config, *transport, clock);
  corpus::save(result.dataset, out_path);
  std::cerr << "harvested " << result.dataset.size() << " pairs after probing "
            << result.ids_probed << " ids\n";
  if (!result.complete) {
    std::cerr << "shortfall: attempt budget exhausted before reaching "
              << config.target_count << " pairs\n";
  }
  return 0;
}

int run_codec(bool encode_mode, const std::string& in_path, const std::string& out_path) {
  print_config(encode_mode ? "encode" : "decode", {{"in", in_path.empty() ? "-" : in_path},
                                                   {"out", out_path.empty() ? "-" : out_path}});
  auto lines = read_input_lines(in_path);
  LineWriter writer(out_path);
  std::size_t warning_count = 0;
  for (const auto& line : lines) {
    auto result = encode_mode ? vicodec::encode(line) : vicodec::decode(line);
    writer.stream() << result.text << '\n';
    for (const auto& w : result.warnings) {
      std::cerr << "warning: " << w << '\n';
      ++warning_count;
    }
  }
  if (warning_count > 0) std::cerr << warning_count << " warning(s)\n";
  return 0;
}

int run_split(const std::string& in_path, const std::string& ratios_text, std::uint64_t seed,
              const std::string& out_prefix) {
  print_config("split", {{"in", in_path}, {"ratios", ratios_text}, {"seed", std::to_string(seed)},
                         {"out_prefix", out_prefix}});
  auto ratios = parse_ratios(ratios_text);
  std::vector<std::string> warnings;
  auto dataset = corpus::load(in_path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  corpus::SplitSpec spec;
  spec.ratio_parts = ratios.parts;
  spec.seed = seed;
  auto result = corpus::split(dataset, spec);
  corpus::save(result.train, out_prefix + ".train.jsonl");
  corpus::save(result.val, out_prefix + ".val.jsonl");
  corpus::save(result.test, out_prefix + ".test.jsonl");
  std::cerr << "split " << dataset.size() << " -> " << result.train.size() << "/"
            << result.val.size() << "/" << result.test.size() << '\n';
  return 0;
}

int run_analyze(const std::string& in_path, int top_k, const std::string& json_path) {
  print_config("analyze", {{"in", in_path}, {"top_k", std::to_string(top_k)},
                           {"json", json_path.empty() ? "<none>" : json_path}});
  std::vector<std::string> warnings;
  auto dataset = corpus::load(in_path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  auto stats = corpus::analyze(dataset, top_k);

  auto words = [](const std::vector<corpus::WordCount>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ", ";
      out += v[i].word;
    }
    return out;
  };
  std::cout << "Pairs:                               " << dataset.size() << '\n';
  std::cout << "Maximum length of sources:           " << stats.max_source_len << '\n';
  std::cout << "Maximum length of targets:           " << stats.max_target_len << '\n';
  std::cout << "Vocabulary size in sources (sensitive):   " << stats.vocab_source_sensitive << '\n';
  std::cout << "Vocabulary size in targets (sensitive):   " << stats.vocab_target_sensitive << '\n';
  std::cout << "Vocabulary size in sources (insensitive): " << stats.vocab_source_insensitive << '\n';
  std::cout << "Vocabulary size in targets (insensitive): " << stats.vocab_target_insensitive << '\n';
  std::cout << "Popular words in sources:            " << words(stats.top_source_words) << '\n';
  std::cout << "Popular words in targets:            " << words(stats.top_target_words) << '\n';
  std::cout << "Rare words in sources:               " << words(stats.rare_source_words) << '\n';
  std::cout << "Rare words in targets:               " << words(stats.rare_target_words) << '\n';
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + json_path);
    out << corpus::stats_to_json(stats).dump(2) << '\n';
  }
  return 0;
}

struct TrainCli {
  std::string train_path, val_path, checkpoint_path;
  trainer::TrainConfig tc;
  model::ModelConfig mc;
  bool lowercase = false;
  int min_count = 1;
};

int run_train(TrainCli cli) {
  print_config("train", {{"train", cli.train_path},
                         {"val", cli.val_path.empty() ? "<none>" : cli.val_path},
                         {"checkpoint", cli.checkpoint_path},
                         {"epochs", std::to_string(cli.tc.epochs)},
                         {"batch_size", std::to_string(cli.tc.batch_size)},
                         {"max_source_length", std::to_string(cli.tc.max_source_length)},
                         {"warmup", std::to_string(cli.tc.warmup_steps)},
                         {"lr_scale", std::to_string(cli.tc.lr_scale)},
                         {"seed", std::to_string(cli.tc.seed)},
                         {"d_model", std::to_string(cli.mc.d_model)},
                         {"heads", std::to_string(cli.mc.n_heads)},
                         {"d_k", std::to_string(cli.mc.d_k)},
                         {"d_v", std::to_string(cli.mc.d_v)},
                         {"d_ff", std::to_string(cli.mc.d_ff)},
                         {"enc_layers", std::to_string(cli.mc.n_enc_layers)},
                         {"dec_layers", std::to_string(cli.mc.n_dec_layers)},
                         {"max_len", std::to_string(cli.mc.max_len)},
                         {"dropout", std::to_string(cli.mc.dropout_rate)},
                         {"lowercase", cli.lowercase ? "true" : "false"},
                         {"min_count", std::to_string(cli.min_count)}});
  std::vector<std::string> warnings;
  auto train_set = corpus::load(cli.train_path, &warnings);
  corpus::Dataset val_set;
  if (!cli.val_path.empty()) val_set = corpus::load(cli.val_path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

  auto src_vocab = tokenizer::build_vocab(train_set, tokenizer::Side::source, !cli.lowercase, cli.min_count);
  auto tgt_vocab = tokenizer::build_vocab(train_set, tokenizer::Side::target, !cli.lowercase, cli.min_count);
  cli.mc.vocab_src = src_vocab.size();
  cli.mc.vocab_tgt = tgt_vocab.size();
  cli.tc.checkpoint_path = cli.checkpoint_path;

  src_vocab.save(cli.checkpoint_path + ".src.vocab");
  tgt_vocab.save(cli.checkpoint_path + ".tgt.vocab");

  auto result = trainer::train(train_set, val_set, cli.mc, cli.tc, src_vocab, tgt_vocab, &std::cerr);
  std::cerr << "best epoch " << result.best_epoch << " (val_loss "
            << result.best.val_loss_history.back() << "); checkpoint written to "
            << cli.checkpoint_path << '\n';
  return 0;
}

int run_translate(const std::string& checkpoint_path, std::string src_vocab_path,
                  std::string tgt_vocab_path, const std::string& in_path,
                  const std::string& out_path, const std::string& strategy, int beam_size,
                  double alpha) {
  print_config("translate", {{"checkpoint", checkpoint_path},
                             {"in", in_path.empty() ? "-" : in_path},
                             {"out", out_path.empty() ? "-" : out_path},
                             {"strategy", strategy},
                             {"beam_size", std::to_string(beam_size)},
                             {"alpha", std::to_string(alpha)}});
  if (src_vocab_path.empty()) src_vocab_path = checkpoint_path + ".src.vocab";
  if (tgt_vocab_path.empty()) tgt_vocab_path = checkpoint_path + ".tgt.vocab";

  auto ckpt = trainer::load_checkpoint(checkpoint_path);
  inference::ModelBundle bundle;
  bundle.src_vocab = tokenizer::Vocab::load(src_vocab_path);
  bundle.tgt_vocab = tokenizer::Vocab::load(tgt_vocab_path);
  if (bundle.src_vocab.digest() != ckpt.src_vocab_digest ||
      bundle.tgt_vocab.digest() != ckpt.tgt_vocab_digest) {
    throw std::runtime_error("vocab files do not match the checkpoint's digests");
  }
  bundle.config = ckpt.config;
  bundle.params = std::move(ckpt.params);
  bundle.decode.strategy = strategy == "beam" ? inference::DecodeConfig::Strategy::beam
                                              : inference::DecodeConfig::Strategy::greedy;
  bundle.decode.beam_size = beam_size;
  bundle.decode.max_len = bundle.config.max_len;
  bundle.decode.length_norm_alpha = alpha;
  bundle.decode.validate();

  auto lines = read_input_lines(in_path);
  LineWriter writer(out_path);
  for (const auto& line : lines) {
    writer.stream() << inference::translate(bundle, line) << '\n';
  }
  return 0;
}

int run_evaluate(const std::string& hyp_path, const std::string& ref_path, bool lowercase,
                 const std::string& json_path) {
  print_config("evaluate", {{"hyp", hyp_path},
                            {"ref", ref_path},
                            {"lowercase", lowercase ? "true" : "false"},
                            {"json", json_path.empty() ? "<none>" : json_path}});
  metrics::EvalOptions options;
  options.lowercase = lowercase;
  auto report = metrics::evaluate_files(hyp_path, ref_path, options);
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "pairs   " << report.pair_count << '\n';
  std::cout << "ROUGE-L " << report.rouge_l << '\n';
  std::cout << "BLEU    " << report.bleu << '\n';
  std::cout << "METEOR  " << report.meteor << '\n';
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + json_path);
    out << nlohmann::json{{"pair_count", report.pair_count},
                          {"rouge_l", report.rouge_l},
                          {"bleu", report.bleu},
                          {"meteor", report.meteor}}
               .dump(2)
        << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"English -> Vietnamese Wikipedia category translation pipeline"};
  app.require_subcommand(1);

  // harvest
  auto* harvest_cmd = app.add_subcommand("harvest", "collect category pairs from Wikidata");
  std::string harvest_out, harvest_fixture;
  bool harvest_live = false;
  harvester::HarvestConfig harvest_config;
  long long min_interval_ms = 0;
  std::string harvest_checkpoint;
  harvest_cmd->add_option("--out", harvest_out, "output dataset (jsonl)")->required();
  harvest_cmd->add_option("--fixture", harvest_fixture, "fixture universe JSON (hermetic default)");
  harvest_cmd->add_flag("--live", harvest_live, "query the real Wikidata API");
  harvest_cmd->add_option("--target-count", harvest_config.target_count, "pairs to gather");
  harvest_cmd->add_option("--max-qid", harvest_config.max_qid, "upper bound of the random id space");
  harvest_cmd->add_option("--concurrency", harvest_config.concurrency, "parallel workers");
  harvest_cmd->add_option("--min-interval-ms", min_interval_ms, "minimum delay between requests");
  harvest_cmd->add_option("--budget", harvest_config.attempt_budget, "max ids probed");
  harvest_cmd->add_option("--seed", harvest_config.seed, "random seed");
  harvest_cmd->add_option("--user-agent", harvest_config.user_agent,
                          "User-Agent header (or CATMT_USER_AGENT)");
  harvest_cmd->add_option("--checkpoint", harvest_checkpoint, "progress checkpoint file");
  harvest_cmd->add_flag("--resume", harvest_config.resume, "resume from the checkpoint file");

  // encode / decode
  auto* encode_cmd = app.add_subcommand("encode", "diacritics -> @-tokens over a text file");
  auto* decode_cmd = app.add_subcommand("decode", "@-tokens -> diacritics over a text file");
  std::string codec_in, codec_out;
  for (auto* cmd : {encode_cmd, decode_cmd}) {
    cmd->add_option("--in", codec_in, "input file ('-' = stdin)");
    cmd->add_option("--out", codec_out, "output file ('-' = stdout)");
  }

  // split
  auto* split_cmd = app.add_subcommand("split", "shuffle and partition a dataset");
  std::string split_in, split_ratios = "8:1:1", split_prefix;
  std::uint64_t split_seed = 42;
  split_cmd->add_option("--in", split_in, "input dataset (jsonl)")->required();
  split_cmd->add_option("--ratios", split_ratios, "train:val:test integer ratios");
  split_cmd->add_option("--seed", split_seed, "shuffle seed");
  split_cmd->add_option("--out-prefix", split_prefix, "prefix for .train/.val/.test files")->required();

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "dataset statistics");
  std::string analyze_in, analyze_json;
  int analyze_top_k = 10;
  analyze_cmd->add_option("--in", analyze_in, "input dataset (jsonl)")->required();
  analyze_cmd->add_option("--top-k", analyze_top_k, "words per popular/rare list");
  analyze_cmd->add_option("--json", analyze_json, "also write machine-readable stats");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a Transformer from scratch");
  TrainCli train_cli;
  train_cmd->add_option("--train", train_cli.train_path, "training dataset (jsonl)")->required();
  train_cmd->add_option("--val", train_cli.val_path, "validation dataset (jsonl)");
  train_cmd->add_option("--checkpoint", train_cli.checkpoint_path, "output checkpoint")->required();
  train_cmd->add_option("--epochs", train_cli.tc.epochs, "training epochs");
  train_cmd->add_option("--batch-size", train_cli.tc.batch_size, "sequences per optimizer step");
  train_cmd->add_option("--max-source-length", train_cli.tc.max_source_length, "source token cap");
  train_cmd->add_option("--warmup", train_cli.tc.warmup_steps, "lr warmup steps");
  train_cmd->add_option("--lr-scale", train_cli.tc.lr_scale, "lr schedule scale");
  train_cmd->add_option("--seed", train_cli.tc.seed, "global seed");
  train_cmd->add_option("--d-model", train_cli.mc.d_model, "embedding width");
  train_cmd->add_option("--heads", train_cli.mc.n_heads, "attention heads");
  train_cmd->add_option("--d-k", train_cli.mc.d_k, "per-head query/key width");
  train_cmd->add_option("--d-v", train_cli.mc.d_v, "per-head value width");
  train_cmd->add_option("--d-ff", train_cli.mc.d_ff, "feed-forward inner width");
  train_cmd->add_option("--enc-layers", train_cli.mc.n_enc_layers, "encoder layers");
  train_cmd->add_option("--dec-layers", train_cli.mc.n_dec_layers, "decoder layers");
  train_cmd->add_option("--max-len", train_cli.mc.max_len, "target token cap");
  train_cmd->add_option("--dropout", train_cli.mc.dropout_rate, "dropout rate (training only)");
  train_cmd->add_flag("--lowercase", train_cli.lowercase, "case-insensitive vocabularies");
  train_cmd->add_option("--min-count", train_cli.min_count, "minimum token count kept in vocab");

  // translate
  auto* translate_cmd = app.add_subcommand("translate", "translate source lines");
  std::string tr_checkpoint, tr_src_vocab, tr_tgt_vocab, tr_in, tr_out, tr_strategy = "greedy";
  int tr_beam_size = 4;
  double tr_alpha = 0.6;
  translate_cmd->add_option("--checkpoint", tr_checkpoint, "trained checkpoint")->required();
  translate_cmd->add_option("--src-vocab", tr_src_vocab, "source vocab (default <checkpoint>.src.vocab)");
  translate_cmd->add_option("--tgt-vocab", tr_tgt_vocab, "target vocab (default <checkpoint>.tgt.vocab)");
  translate_cmd->add_option("--in", tr_in, "source lines ('-' = stdin)");
  translate_cmd->add_option("--out", tr_out, "translations ('-' = stdout)");
  translate_cmd->add_option("--strategy", tr_strategy, "greedy|beam")
      ->check(CLI::IsMember({"greedy", "beam"}));
  translate_cmd->add_option("--beam-size", tr_beam_size, "beam width");
  translate_cmd->add_option("--alpha", tr_alpha, "length normalization exponent");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score hypotheses against references");
  std::string ev_hyp, ev_ref, ev_json;
  bool ev_lowercase = false;
  evaluate_cmd->add_option("--hyp", ev_hyp, "hypothesis file")->required();
  evaluate_cmd->add_option("--ref", ev_ref, "reference file")->required();
  evaluate_cmd->add_flag("--lowercase", ev_lowercase, "case-fold before scoring");
  evaluate_cmd->add_option("--json", ev_json, "also write a machine-readable report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the diagnostic and usage pointer
    return 2;
  }

  try {
    if (app.got_subcommand(harvest_cmd)) {
      harvest_config.min_request_interval = std::chrono::milliseconds(min_interval_ms);
      harvest_config.checkpoint_path = harvest_checkpoint;
      return run_harvest(harvest_out, harvest_fixture, harvest_live, harvest_config);
    }
    if (app.got_subcommand(encode_cmd)) return run_codec(true, codec_in, codec_out);
    if (app.got_subcommand(decode_cmd)) return run_codec(false, codec_in, codec_out);
    if (app.got_subcommand(split_cmd)) return run_split(split_in, split_ratios, split_seed, split_prefix);
    if (app.got_subcommand(analyze_cmd)) return run_analyze(analyze_in, analyze_top_k, analyze_json);
    if (app.got_subcommand(train_cmd)) return run_train(train_cli);
    if (app.got_subcommand(translate_cmd)) {
      return run_translate(tr_checkpoint, tr_src_vocab, tr_tgt_vocab, tr_in, tr_out, tr_strategy,
                           tr_beam_size, tr_alpha);
    }
    if (app.got_subcommand(evaluate_cmd)) return run_evaluate(ev_hyp, ev_ref, ev_lowercase, ev_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
