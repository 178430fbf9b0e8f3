#include "mirror/evaluation.hpp"

#include "mirror/encoders.hpp"
#include "mirror/latent.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace mirror {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

double perplexity(std::span<const Triple> test_set, const Model& model, const Vocabulary& vocab,
                  DecoderId decoder, std::size_t max_len) {
  if (test_set.empty()) throw std::invalid_argument("perplexity: empty test set");
  if (vocab.size() != model.config.vocab_size) {
    throw std::invalid_argument("perplexity: vocabulary size " + std::to_string(vocab.size()) +
                                " does not match checkpoint's " +
                                std::to_string(model.config.vocab_size));
  }
  if (decoder != DecoderId::dec1 && decoder != DecoderId::dec3) {
    throw std::invalid_argument("perplexity: only Dec1 and Dec3 are scored");
  }
  constexpr std::size_t kChunk = 64;
  double log_prob = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < test_set.size(); start += kChunk) {
    const auto n = std::min(kChunk, test_set.size() - start);
    const Batch batch = encode_batch(test_set.subspan(start, n), vocab, max_len);
    Tape tape(false);
    Var c_vec = encode_context(tape, model, batch.context);
    Var z = prior_params(tape, model, c_vec).mean;
    const bool forward = decoder == DecoderId::dec1;
    Var other = encode_utterance(tape, model, forward ? batch.query : batch.response);
    const SeqBatch& target = forward ? batch.response_target : batch.query_target;
    auto tf = teacher_forced_log_prob(tape, model, {decoder, {c_vec, z, other}}, target);
    for (double v : tf.total.value().values()) log_prob += v;
    for (auto len : target.lengths) tokens += len - 1;
  }
  return std::exp(-log_prob / double(tokens));
}

double distinct_n(std::span<const Tokens> responses, std::size_t n) {
  if (n == 0) throw std::invalid_argument("distinct_n: n must be >= 1");
  std::set<std::vector<std::string>> unique;
  std::size_t total = 0;
  for (const auto& r : responses) {
    if (r.size() < n) continue;
    for (std::size_t i = 0; i + n <= r.size(); ++i) {
      unique.emplace(r.begin() + std::ptrdiff_t(i), r.begin() + std::ptrdiff_t(i + n));
      ++total;
    }
  }
  return total == 0 ? 0.0 : double(unique.size()) / double(total);
}

// ---------------------------------------------------------------------------
// Model outputs

std::vector<ModelOutput> read_model_outputs(std::istream& in) {
  std::vector<ModelOutput> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      out.push_back({j.at("dialogue_index").get<std::size_t>(), j.at("response_text").get<std::string>(),
                     j.value("decode_strategy", ""), j.value("checkpoint_id", "")});
    } catch (const json::exception& e) {
      throw CorpusError("model outputs line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ModelOutput> read_model_outputs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot read model outputs: " + path);
  return read_model_outputs(in);
}

void write_model_outputs(std::ostream& out, std::span<const ModelOutput> outputs) {
  for (const auto& o : outputs) {
    json j = {{"dialogue_index", o.dialogue_index},
              {"response_text", o.response_text},
              {"decode_strategy", o.decode_strategy},
              {"checkpoint_id", o.checkpoint_id}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Judgments

std::string to_string(Choice c) {
  switch (c) {
    case Choice::a: return "A";
    case Choice::b: return "B";
    case Choice::tie: return "tie";
  }
  return "?";
}

std::optional<Choice> parse_choice(const std::string& s) {
  if (s == "A" || s == "a") return Choice::a;
  if (s == "B" || s == "b") return Choice::b;
  if (s == "tie" || s == "TIE" || s == "Tie") return Choice::tie;
  return std::nullopt;
}

std::string to_string(JudgmentStatus s) {
  switch (s) {
    case JudgmentStatus::accepted: return "accepted";
    case JudgmentStatus::duplicate: return "duplicate";
    case JudgmentStatus::unknown_pair: return "unknown_pair";
    case JudgmentStatus::invalid_choice: return "invalid_choice";
    case JudgmentStatus::pair_complete: return "pair_complete";
  }
  return "?";
}

SessionPlan plan_session(std::span<const Triple> test_set, std::span<const ModelOutput> focal,
                         std::span<const ModelOutput> comparator, std::size_t n_pairs,
                         std::uint64_t seed, std::string focal_name, std::string comparator_name) {
  if (n_pairs == 0) throw std::invalid_argument("plan_session: n_pairs must be >= 1");
  if (n_pairs > test_set.size()) {
    throw std::invalid_argument("plan_session: " + std::to_string(n_pairs) +
                                " pairs requested from a test set of " +
                                std::to_string(test_set.size()));
  }
  std::map<std::size_t, const ModelOutput*> by_focal, by_comp;
  for (const auto& o : focal) by_focal[o.dialogue_index] = &o;
  for (const auto& o : comparator) by_comp[o.dialogue_index] = &o;

  Rng rng(seed);
  std::vector<std::size_t> idx(test_set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n_pairs entries are a uniform sample
  // without replacement.
  for (std::size_t i = 0; i < n_pairs; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::bernoulli_distribution coin(0.5);

  SessionPlan plan;
  plan.focal_model = std::move(focal_name);
  plan.comparator_model = std::move(comparator_name);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::size_t d = idx[i];
    auto f = by_focal.find(d);
    auto c = by_comp.find(d);
    if (f == by_focal.end() || c == by_comp.end()) {
      throw std::invalid_argument("plan_session: missing model output for dialogue " + std::to_string(d));
    }
    EvalPair p;
    p.pair_id = "p" + std::to_string(i);
    p.dialogue_index = d;
    std::string ctx;
    for (const auto& turn : test_set[d].c_all()) ctx += detokenize(turn) + "\n";
    if (!ctx.empty()) ctx.pop_back();
    p.context = std::move(ctx);
    p.focal_side = coin(rng) ? Side::a : Side::b;
    const auto& fr = f->second->response_text;
    const auto& cr = c->second->response_text;
    p.response_a = p.focal_side == Side::a ? fr : cr;
    p.response_b = p.focal_side == Side::a ? cr : fr;
    plan.pairs.push_back(std::move(p));
  }
  return plan;
}

SessionResults aggregate_results(const SessionPlan& plan, std::span<const Judgment> judgments) {
  std::map<std::string, std::vector<Choice>> by_pair;
  for (const auto& j : judgments) by_pair[j.pair_id].push_back(j.choice);

  SessionResults r;
  r.total_pairs = plan.pairs.size();
  r.judgments = judgments.size();
  std::size_t wins = 0, losses = 0, ties = 0;
  std::size_t vote_w = 0, vote_l = 0, vote_t = 0;
  for (const auto& p : plan.pairs) {
    auto it = by_pair.find(p.pair_id);
    if (it == by_pair.end() || it->second.size() < kJudgmentsPerPair) continue;
    std::size_t f = 0, c = 0, t = 0;
    for (Choice ch : it->second) {
      if (ch == Choice::tie) {
        ++t;
      } else if ((ch == Choice::a) == (p.focal_side == Side::a)) {
        ++f;
      } else {
        ++c;
      }
    }
    ++r.completed_pairs;
    vote_w += f;
    vote_l += c;
    vote_t += t;
    if (f * 2 > it->second.size()) {
      ++wins;
    } else if (c * 2 > it->second.size()) {
      ++losses;
    } else {
      ++ties;
    }
  }
  if (r.completed_pairs == 0) throw std::runtime_error("aggregate_results: no completed pairs");
  const double n = double(r.completed_pairs);
  r.majority = {double(wins) / n, double(losses) / n, double(ties) / n, r.completed_pairs};
  const double v = double(vote_w + vote_l + vote_t);
  r.pooled = {double(vote_w) / v, double(vote_l) / v, double(vote_t) / v, r.completed_pairs};
  return r;
}

// ---------------------------------------------------------------------------
// Persistence

std::string plan_to_json(const SessionPlan& plan) {
  json j;
  j["focal_model"] = plan.focal_model;
  j["comparator_model"] = plan.comparator_model;
  j["pairs"] = json::array();
  for (const auto& p : plan.pairs) {
    j["pairs"].push_back({{"pair_id", p.pair_id},
                          {"dialogue_index", p.dialogue_index},
                          {"context", p.context},
                          {"response_a", p.response_a},
                          {"response_b", p.response_b},
                          {"focal_side", p.focal_side == Side::a ? "A" : "B"}});
  }
  return j.dump(2);
}

SessionPlan plan_from_json(const std::string& text) {
  const auto j = json::parse(text);
  SessionPlan plan;
  plan.focal_model = j.at("focal_model");
  plan.comparator_model = j.at("comparator_model");
  for (const auto& p : j.at("pairs")) {
    EvalPair e;
    e.pair_id = p.at("pair_id");
    e.dialogue_index = p.at("dialogue_index");
    e.context = p.at("context");
    e.response_a = p.at("response_a");
    e.response_b = p.at("response_b");
    e.focal_side = p.at("focal_side") == "A" ? Side::a : Side::b;
    plan.pairs.push_back(std::move(e));
  }
  return plan;
}

std::string judgment_to_json(const Judgment& j) {
  return json{{"pair_id", j.pair_id},
              {"annotator", j.annotator},
              {"choice", to_string(j.choice)},
              {"timestamp", j.timestamp}}
      .dump();
}

Judgment judgment_from_json(const std::string& line) {
  const auto j = json::parse(line);
  auto choice = parse_choice(j.at("choice").get<std::string>());
  if (!choice) throw std::runtime_error("journal: invalid choice");
  return {j.at("pair_id"), j.at("annotator"), *choice, j.value("timestamp", std::int64_t{0})};
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
}

void append_durably(const std::filesystem::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw std::runtime_error("cannot open journal " + path.string());
  const std::string rec = line + "\n";
  std::size_t done = 0;
  while (done < rec.size()) {
    const auto n = ::write(fd, rec.data() + done, rec.size() - done);
    if (n < 0) {
      ::close(fd);
      throw std::runtime_error("journal write failed");
    }
    done += std::size_t(n);
  }
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

EvalSession::EvalSession(std::filesystem::path dir, SessionPlan plan)
    : dir_(std::move(dir)), plan_(std::move(plan)), annotators_by_pair_(plan_.pairs.size()) {
  for (std::size_t i = 0; i < plan_.pairs.size(); ++i) pair_index_[plan_.pairs[i].pair_id] = i;
}

std::unique_ptr<EvalSession> EvalSession::create(const std::filesystem::path& dir, SessionPlan plan) {
  std::filesystem::create_directories(dir);
  if (std::filesystem::exists(dir / "session.json")) {
    throw std::runtime_error("session already exists in " + dir.string());
  }
  write_file(dir / "session.json", plan_to_json(plan));
  write_file(dir / "journal.jsonl", "");
  return std::unique_ptr<EvalSession>(new EvalSession(dir, std::move(plan)));
}

std::unique_ptr<EvalSession> EvalSession::open(const std::filesystem::path& dir) {
  std::ifstream in(dir / "session.json");
  if (!in) throw std::runtime_error("no session in " + dir.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::unique_ptr<EvalSession> s(new EvalSession(dir, plan_from_json(ss.str())));
  std::ifstream journal(dir / "journal.jsonl");
  std::string line;
  while (std::getline(journal, line)) {
    if (line.empty()) continue;
    Judgment j;
    try {
      j = judgment_from_json(line);
    } catch (const std::exception&) {
      break;  // torn final record from an interrupted append
    }
    if (s->check(j) == JudgmentStatus::accepted) s->apply(j);
  }
  return s;
}

JudgmentStatus EvalSession::check(const Judgment& j) const {
  auto it = pair_index_.find(j.pair_id);
  if (it == pair_index_.end()) return JudgmentStatus::unknown_pair;
  const auto& who = annotators_by_pair_[it->second];
  if (std::find(who.begin(), who.end(), j.annotator) != who.end()) return JudgmentStatus::duplicate;
  if (who.size() >= kJudgmentsPerPair) return JudgmentStatus::pair_complete;
  return JudgmentStatus::accepted;
}

void EvalSession::apply(const Judgment& j) {
  annotators_by_pair_[pair_index_.at(j.pair_id)].push_back(j.annotator);
  judgments_.push_back(j);
}

JudgmentStatus EvalSession::record_judgment(const Judgment& judgment) {
  std::lock_guard lock(mu_);
  const auto status = check(judgment);
  if (status != JudgmentStatus::accepted) return status;
  append_durably(dir_ / "journal.jsonl", judgment_to_json(judgment));
  apply(judgment);
  return status;
}

JudgmentStatus EvalSession::record_judgment(const std::string& pair_id, const std::string& annotator,
                                            const std::string& choice) {
  auto c = parse_choice(choice);
  if (!c) return JudgmentStatus::invalid_choice;
  if (annotator.empty()) return JudgmentStatus::invalid_choice;
  const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  return record_judgment(Judgment{pair_id, annotator, *c, now});
}

std::optional<EvalPair> EvalSession::next_pair(const std::string& annotator) const {
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < plan_.pairs.size(); ++i) {
    const auto& who = annotators_by_pair_[i];
    if (who.size() >= kJudgmentsPerPair) continue;
    if (std::find(who.begin(), who.end(), annotator) != who.end()) continue;
    return plan_.pairs[i];
  }
  return std::nullopt;
}

std::pair<std::size_t, std::size_t> EvalSession::progress(const std::string& annotator) const {
  std::lock_guard lock(mu_);
  std::size_t done = 0;
  for (const auto& who : annotators_by_pair_) {
    if (std::find(who.begin(), who.end(), annotator) != who.end()) ++done;
  }
  return {done, plan_.pairs.size()};
}

std::vector<Judgment> EvalSession::judgments() const {
  std::lock_guard lock(mu_);
  return judgments_;
}

SessionResults EvalSession::results() const {
  const auto js = judgments();
  return aggregate_results(plan_, js);
}

std::size_t EvalSession::journal_records() const {
  std::lock_guard lock(mu_);
  std::ifstream in(dir_ / "journal.jsonl");
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++n;
  }
  return n;
}

}  // namespace mirror
