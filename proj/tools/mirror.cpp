// mirror: preprocess, train, eval, generate, chat, serve-eval, verify.

#include "mirror/checkpoint.hpp"
#include "mirror/evaluation.hpp"
#include "mirror/inference.hpp"
#include "mirror/objective.hpp"
#include "mirror/server.hpp"
#include "mirror/toy.hpp"
#include "mirror/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace mirror;

namespace {

struct Options {
  std::uint64_t seed = 1234;
  std::string profile = "desk";
  std::string mode = "mirror";
  std::string dataset = "custom";
  std::string strategy = "greedy";
  std::size_t k = 5;
  double temperature = 1.0;
  std::string z_mode = "mean";
  int port = 8080;
  std::string host = "127.0.0.1";

  // paths
  std::string input;
  std::string format;
  std::string out;
  std::string data = "processed";
  std::string checkpoint = "model.ckpt";
  std::string report;
  std::string test;

  // preprocessing
  std::size_t window = 3;
  std::vector<double> split = {0.8, 0.1, 0.1};
  std::size_t vocab_size = 20000;

  // training
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 0.001;
  double lr_decay = 0.5;
  double embed_std = 0.0;
  std::size_t patience = 1;
  std::size_t kl_ramp = 10000;
  double clip_norm = 5.0;
  std::size_t max_len = kDefaultMaxLen;
  std::string precision = "f32";

  // decoding, chat, evaluation service
  std::size_t decode_len = 30;
  std::size_t context_turns = 1;
  std::string session = "eval-session";
  std::string session_id = "default";
  std::string focal;
  std::string comparator;
  std::size_t pairs = kDefaultEvalPairs;
  std::string static_dir;
};

fs::path data_root() {
  const char* env = std::getenv("MIRROR_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

// Relative paths that do not exist as given are looked up under the data root.
fs::path resolve(const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || fs::exists(path)) return path;
  return data_root() / path;
}

fs::path resolve_output(const std::string& p, const std::string& fallback) {
  fs::path path(p.empty() ? fallback : p);
  if (path.is_absolute()) return path;
  return std::getenv("MIRROR_DATA_DIR") ? data_root() / path : path;
}

DatasetKind dataset_kind(const std::string& s) {
  if (s == "dailydialog") return DatasetKind::dailydialog;
  if (s == "movietriples") return DatasetKind::movietriples;
  return DatasetKind::custom;
}

CorpusFormat corpus_format(const Options& o) {
  std::string f = o.format;
  if (f.empty()) {
    f = o.dataset == "dailydialog" ? "dailydialog" : o.dataset == "movietriples" ? "tsv" : "jsonl";
  }
  if (f == "jsonl") return CorpusFormat::jsonl;
  if (f == "dailydialog") return CorpusFormat::dailydialog;
  if (f == "tsv") return CorpusFormat::triples_tsv;
  throw std::invalid_argument("unknown corpus format: " + f);
}

std::vector<Dialogue> read_dialogues(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_jsonl_corpus(in);
}

void write_dialogues(const fs::path& path, std::span<const Dialogue> dialogues) {
  std::ofstream out(path, std::ios::binary);
  write_jsonl_corpus(out, dialogues);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// A test set given either as a preprocessed directory or a JSONL file.
std::vector<Triple> load_triples(const std::string& p, const Options& o, const char* split) {
  fs::path path = resolve(p);
  if (fs::is_directory(path)) path /= std::string(split) + ".jsonl";
  const auto dialogues = read_dialogues(path);
  return window_dialogues(dialogues, o.window);
}

std::string strategy_label(const Options& o) {
  const Strategy s = parse_strategy(o.strategy);
  // beam(1) is greedy search; both record the same label.
  if (s == Strategy::greedy || (s == Strategy::beam && o.k == 1)) return "greedy";
  std::ostringstream os;
  if (s == Strategy::beam) os << "beam(k=" << o.k << ")";
  else os << "sample(t=" << o.temperature << ")";
  return os.str();
}

DecodeRequest decode_options(const Options& o) {
  DecodeRequest r;
  r.strategy = parse_strategy(o.strategy);
  r.beam_k = o.k;
  r.temperature = o.temperature;
  r.z_mode = parse_z_mode(o.z_mode);
  r.max_len = o.decode_len;
  r.seed = o.seed;
  return r;
}

// ---------------------------------------------------------------------------

int cmd_preprocess(const Options& o) {
  std::vector<Dialogue> dialogues;
  if (o.input.empty() || o.input == "toy" || o.input == "toy8") {
    dialogues = toy_dialogues(o.input == "toy8" ? 8 : 32);
  } else {
    dialogues = read_corpus_file(resolve(o.input).string(), corpus_format(o));
  }
  if (o.split.size() != 3) throw std::invalid_argument("--split needs three fractions");
  const double total = o.split[0] + o.split[1] + o.split[2];
  if (!(total > 0.0)) throw std::invalid_argument("--split fractions must sum to a positive value");

  std::vector<std::size_t> order(dialogues.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(o.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = dialogues.size();
  const auto n_train = std::size_t(std::llround(double(n) * o.split[0] / total));
  const auto n_valid = std::min(n - n_train, std::size_t(std::llround(double(n) * o.split[1] / total)));
  std::vector<Dialogue> parts[3];
  for (std::size_t i = 0; i < n; ++i) {
    const int part = i < n_train ? 0 : i < n_train + n_valid ? 1 : 2;
    parts[part].push_back(std::move(dialogues[order[i]]));
  }

  const fs::path out = resolve_output(o.out, "processed");
  fs::create_directories(out);
  write_dialogues(out / "train.jsonl", parts[0]);
  write_dialogues(out / "valid.jsonl", parts[1]);
  write_dialogues(out / "test.jsonl", parts[2]);

  WindowReport report;
  const auto triples = window_dialogues(parts[0], o.window, 1, &report);
  const Vocabulary vocab = build_vocabulary(triples, o.vocab_size);
  vocab.save((out / "vocab.txt").string());

  nlohmann::json stats = {{"dialogues", {{"train", parts[0].size()}, {"valid", parts[1].size()}, {"test", parts[2].size()}}},
                          {"train_triples", report.triples},
                          {"skipped_short", report.skipped_short},
                          {"window", o.window},
                          {"vocab_size", vocab.size()}};
  std::ofstream(out / "stats.json") << stats.dump(2) << '\n';
  std::cout << stats.dump() << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  const fs::path dir = resolve(o.data);
  const auto train = window_dialogues(read_dialogues(dir / "train.jsonl"), o.window);
  auto valid = fs::exists(dir / "valid.jsonl") ? window_dialogues(read_dialogues(dir / "valid.jsonl"), o.window)
                                               : std::vector<Triple>{};
  if (train.empty()) throw std::runtime_error("no training triples in " + dir.string());
  if (valid.empty()) {
    std::cerr << "no validation triples; validating on the training set\n";
    valid = train;
  }
  const Vocabulary vocab = fs::exists(dir / "vocab.txt") ? Vocabulary::load((dir / "vocab.txt").string())
                                                         : build_vocabulary(train);

  TrainConfig tc;
  tc.mode = parse_loss_mode(o.mode);
  tc.profile = parse_profile(o.profile);
  tc.lr = o.lr;
  tc.lr_decay = o.lr_decay;
  tc.patience = o.patience;
  tc.kl_ramp = o.kl_ramp;
  tc.batch_size = o.batch_size;
  tc.max_epochs = o.epochs;
  tc.seed = o.seed;
  tc.clip_norm = o.clip_norm;
  tc.max_len = o.max_len;
  if (o.precision == "f32") tc.precision = Precision::f32_storage;
  else if (o.precision == "f64") tc.precision = Precision::f64;
  else throw std::invalid_argument("--precision must be f32 or f64");

  ModelConfig mc = profile_config(tc.profile, vocab.size(), dataset_kind(o.dataset));
  if (o.embed_std > 0.0) mc.embed_std = o.embed_std;
  Model model = Model::create(mc, o.seed);
  const fs::path ckpt = resolve_output(o.checkpoint, "model.ckpt");
  const fs::path report_path = o.report.empty() ? fs::path(ckpt.string() + ".report.jsonl") : resolve_output(o.report, "");
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  std::ofstream report(report_path, std::ios::binary);
  if (!report) throw std::runtime_error("cannot write " + report_path.string());

  std::cerr << "training " << model.params.parameter_count("") << " parameters on " << train.size()
            << " triples, vocabulary " << vocab.size() << '\n';
  const auto result = fit(model, train, valid, vocab, tc, &report, [](const EpochRecord& r, const Model&) {
    std::cerr << "epoch " << r.epoch << " train " << -r.train.combined << " valid " << r.valid_loss
              << " kl " << r.train.kl << " lr " << r.lr << (r.improved ? " *" : "") << '\n';
    return true;
  });
  if (result.diverged) {
    std::cerr << "training diverged: " << result.divergence << '\n';
    if (result.best_epoch == 0) return 1;
  }
  save_checkpoint(ckpt.string(), model, vocab, tc);
  std::cout << "checkpoint " << ckpt.string() << " (best epoch " << result.best_epoch << ", id "
            << checkpoint_id(ckpt.string()) << ")\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const auto ck = load_checkpoint(resolve(o.checkpoint).string());
  const auto test = load_triples(o.test.empty() ? o.data : o.test, o, "test");
  if (test.empty()) throw std::runtime_error("empty test set");

  std::vector<Tokens> responses;
  DecodeRequest req = decode_options(o);
  for (const auto& t : test) {
    req.context = t.context;
    req.query = t.query;
    responses.push_back(generate_response(req, ck.model, ck.vocab).tokens);
  }
  nlohmann::json metrics = {
      {"checkpoint_id", checkpoint_id(resolve(o.checkpoint).string())},
      {"triples", test.size()},
      {"perplexity", perplexity(test, ck.model, ck.vocab, DecoderId::dec1, o.max_len)},
      {"perplexity_backward", perplexity(test, ck.model, ck.vocab, DecoderId::dec3, o.max_len)},
      {"distinct_1", distinct_n(responses, 1)},
      {"distinct_2", distinct_n(responses, 2)},
      {"decode_strategy", strategy_label(o)}};
  const std::string text = metrics.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(resolve_output(o.out, ""), std::ios::binary);
    out << text;
  }
  return 0;
}

int cmd_generate(const Options& o) {
  const fs::path ckpt = resolve(o.checkpoint);
  const auto ck = load_checkpoint(ckpt.string());
  const auto id = checkpoint_id(ckpt.string());
  const auto test = load_triples(o.test.empty() ? o.data : o.test, o, "test");
  DecodeRequest req = decode_options(o);
  std::vector<ModelOutput> outputs;
  for (std::size_t i = 0; i < test.size(); ++i) {
    req.context = test[i].context;
    req.query = test[i].query;
    req.seed = o.seed + i;
    const auto g = generate_response(req, ck.model, ck.vocab);
    outputs.push_back({i, detokenize(g.tokens), strategy_label(o), id});
  }
  const fs::path out = resolve_output(o.out, "outputs.jsonl");
  std::ofstream f(out, std::ios::binary);
  write_model_outputs(f, outputs);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  std::cout << outputs.size() << " responses written to " << out.string() << '\n';
  return 0;
}

int cmd_chat(const Options& o) {
  const auto ck = load_checkpoint(resolve(o.checkpoint).string());
  ChatSession session(&ck.model, &ck.vocab, o.context_turns);
  session.options() = decode_options(o);
  std::cout << "commands: :reset, :seed N, :quit\n";
  run_chat_repl(session, std::cin, std::cout);
  return 0;
}

EvalServer* g_server = nullptr;

int cmd_serve_eval(const Options& o) {
  const fs::path dir = resolve_output(o.session, "eval-session");
  std::shared_ptr<EvalSession> session;
  if (fs::exists(dir / "session.json")) {
    session = EvalSession::open(dir);
    std::cerr << "resumed session with " << session->journal_records() << " judgments\n";
  } else {
    if (o.focal.empty() || o.comparator.empty() || o.test.empty()) {
      throw std::invalid_argument("a new session needs --test, --focal and --comparator");
    }
    const auto test = load_triples(o.test, o, "test");
    const auto focal = read_model_outputs(resolve(o.focal).string());
    const auto comp = read_model_outputs(resolve(o.comparator).string());
    auto plan = plan_session(test, focal, comp, std::min(o.pairs, test.size()), o.seed,
                             fs::path(o.focal).stem().string(), fs::path(o.comparator).stem().string());
    session = EvalSession::create(dir, std::move(plan));
  }
  EvalServer server(o.static_dir.empty() ? std::nullopt : std::optional<fs::path>(o.static_dir));
  server.add_session(o.session_id, session);
  const int port = o.port == 0 ? server.bind_any_port(o.host) : server.bind(o.host, o.port);
  std::cout << "serving session '" << o.session_id << "' on http://" << o.host << ":" << port << std::endl;
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

int cmd_verify(const Options& o) {
  const auto results = run_verification_suite(std::cout, o.seed);
  for (const auto& r : results) {
    if (!r.passed) {
      std::cerr << "verification failed: " << r.name << '\n';
      return 1;
    }
  }
  std::cout << "all properties hold\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mirror dialogue model toolkit"};
  app.set_config("--config", "", "key = value configuration file");
  app.require_subcommand(1);
  Options o;

  app.add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app.add_option("--profile", o.profile, "Scale profile")->check(CLI::IsMember({"paper", "desk"}))->capture_default_str();
  app.add_option("--mode", o.mode, "Training objective")
      ->check(CLI::IsMember({"mirror", "forward", "backward", "cvae"}))
      ->capture_default_str();
  app.add_option("--dataset", o.dataset, "Dataset kind")
      ->check(CLI::IsMember({"dailydialog", "movietriples", "custom"}))
      ->capture_default_str();
  app.add_option("--strategy", o.strategy, "Decoding strategy")
      ->check(CLI::IsMember({"greedy", "beam", "sample"}))
      ->capture_default_str();
  app.add_option("--k", o.k, "Beam width")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--temperature", o.temperature, "Sampling temperature")->check(CLI::PositiveNumber);
  app.add_option("--z-mode", o.z_mode, "Latent at decode time")->check(CLI::IsMember({"mean", "sample"}));
  app.add_option("--port", o.port, "serve-eval port (0 picks a free one)")->capture_default_str();
  app.add_option("--host", o.host, "serve-eval host")->capture_default_str();

  app.add_option("--input", o.input, "Raw corpus (or 'toy' / 'toy8' for the bundled corpus)");
  app.add_option("--format", o.format, "Raw corpus format")->check(CLI::IsMember({"jsonl", "dailydialog", "tsv"}));
  app.add_option("--out", o.out, "Output path");
  app.add_option("--data", o.data, "Preprocessed data directory")->capture_default_str();
  app.add_option("--checkpoint", o.checkpoint, "Checkpoint path")->capture_default_str();
  app.add_option("--report", o.report, "Training report (JSON lines)");
  app.add_option("--test", o.test, "Test dialogues (JSONL file or preprocessed directory)");

  app.add_option("--window", o.window, "Turns per training window")->check(CLI::Range(3, 1000));
  app.add_option("--split", o.split, "Train, valid and test fractions")->expected(3)->delimiter(',');
  app.add_option("--vocab-size", o.vocab_size, "Vocabulary cap (regular tokens)");

  app.add_option("--epochs", o.epochs, "Maximum epochs")->capture_default_str();
  app.add_option("--batch-size", o.batch_size, "Triples per step")->check(CLI::PositiveNumber);
  app.add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app.add_option("--lr-decay", o.lr_decay, "Learning-rate decay factor");
  app.add_option("--patience", o.patience, "Epochs without improvement before decay");
  app.add_option("--kl-ramp", o.kl_ramp, "KL annealing steps (0 disables)");
  app.add_option("--clip-norm", o.clip_norm, "Global gradient norm cap (0 disables)");
  app.add_option("--embed-std", o.embed_std, "Embedding init std (0 keeps the profile's 0.01)");
  app.add_option("--max-len", o.max_len, "Tokens kept per utterance");
  app.add_option("--precision", o.precision, "Parameter storage")->check(CLI::IsMember({"f32", "f64"}));

  app.add_option("--decode-len", o.decode_len, "Maximum generated tokens");
  app.add_option("--context-turns", o.context_turns, "Chat context window in turns");
  app.add_option("--session", o.session, "Evaluation session directory");
  app.add_option("--session-id", o.session_id, "Session id in the URL");
  app.add_option("--focal", o.focal, "Focal model outputs");
  app.add_option("--comparator", o.comparator, "Comparator model outputs");
  app.add_option("--pairs", o.pairs, "Pairs to evaluate");
  app.add_option("--static", o.static_dir, "Annotator UI directory to serve");

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"preprocess", "Window a corpus, split it and build the vocabulary", cmd_preprocess},
      {"train", "Train a model and write a checkpoint", cmd_train},
      {"eval", "Perplexity and distinct-n metrics as JSON", cmd_eval},
      {"generate", "Write model outputs for a test set", cmd_generate},
      {"chat", "Interactive chat", cmd_chat},
      {"serve-eval", "Serve a pairwise evaluation session", cmd_serve_eval},
      {"verify", "Run the numerical verification suite", cmd_verify},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (const auto& c : commands) {
    if (!app.got_subcommand(c.name)) continue;
    try {
      return c.run(o);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}
