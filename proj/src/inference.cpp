#include "mirror/inference.hpp"

#include "mirror/encoders.hpp"
#include "mirror/latent.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace mirror {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::greedy: return "greedy";
    case Strategy::beam: return "beam";
    case Strategy::sample: return "sample";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "greedy") return Strategy::greedy;
  if (s == "beam") return Strategy::beam;
  if (s == "sample") return Strategy::sample;
  throw std::invalid_argument("unknown strategy: " + s);
}

ZMode parse_z_mode(const std::string& s) {
  if (s == "mean" || s == "prior-mean") return ZMode::prior_mean;
  if (s == "sample" || s == "prior-sample") return ZMode::prior_sample;
  throw std::invalid_argument("unknown z mode: " + s);
}

double Hypothesis::normalized() const {
  const double n = double(ids.size() + (finished ? 1 : 0));
  return n > 0 ? score / n : score;
}

// ---------------------------------------------------------------------------
// Search

namespace {

int argmax(const std::vector<double>& v) {
  return int(std::max_element(v.begin(), v.end()) - v.begin());
}

struct Beam {
  Hypothesis hyp;
  StepModel::State state;
  int last;
};

}  // namespace

Hypothesis greedy_search(StepModel& model, const SearchLimits& limits) {
  Hypothesis h;
  auto state = model.initial();
  int prev = limits.bos;
  while (true) {
    auto [logp, next] = model.step(state, prev);
    const int tok = argmax(logp);
    if (tok == limits.eos) {
      h.score += logp[std::size_t(tok)];
      h.finished = true;
      break;
    }
    if (h.ids.size() == limits.max_len) break;
    h.score += logp[std::size_t(tok)];
    h.ids.push_back(tok);
    state = next;
    prev = tok;
  }
  return h;
}

Hypothesis beam_search(StepModel& model, std::size_t k, const SearchLimits& limits) {
  if (k == 0) throw std::invalid_argument("beam_search: k must be >= 1");
  std::vector<Beam> alive{{{}, model.initial(), limits.bos}};
  std::vector<Hypothesis> finished;
  while (!alive.empty() && finished.size() < k) {
    struct Candidate {
      double score;
      std::size_t beam;
      int token;
      StepModel::State state;
    };
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < alive.size(); ++b) {
      auto [logp, next] = model.step(alive[b].state, alive[b].last);
      std::vector<int> order(logp.size());
      std::iota(order.begin(), order.end(), 0);
      const auto top = std::min(k, order.size());
      std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(top), order.end(),
                        [&](int a, int c) {
                          return logp[std::size_t(a)] > logp[std::size_t(c)] ||
                                 (logp[std::size_t(a)] == logp[std::size_t(c)] && a < c);
                        });
      for (std::size_t i = 0; i < top; ++i) {
        cands.push_back({alive[b].hyp.score + logp[std::size_t(order[i])], b, order[i], next});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<Beam> next_alive;
    for (const auto& c : cands) {
      if (next_alive.size() + finished.size() >= k) break;
      Hypothesis h = alive[c.beam].hyp;
      h.score = c.score;
      if (c.token == limits.eos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else if (h.ids.size() < limits.max_len) {
        h.ids.push_back(c.token);
        next_alive.push_back({std::move(h), c.state, c.token});
      }
    }
    // Hypotheses at the length limit can no longer grow; keep them as
    // unfinished results.
    std::vector<Beam> growing;
    for (auto& b : next_alive) {
      if (b.hyp.ids.size() == limits.max_len && finished.size() < k) {
        auto [logp, next] = model.step(b.state, b.last);
        (void)next;
        if (argmax(logp) == limits.eos) {
          b.hyp.score += logp[std::size_t(limits.eos)];
          b.hyp.finished = true;
        }
        finished.push_back(std::move(b.hyp));
      } else {
        growing.push_back(std::move(b));
      }
    }
    alive = std::move(growing);
  }
  if (finished.empty()) {
    for (auto& b : alive) finished.push_back(std::move(b.hyp));
  }
  return *std::max_element(finished.begin(), finished.end(),
                           [](const Hypothesis& a, const Hypothesis& b) {
                             return a.normalized() < b.normalized();
                           });
}

Hypothesis sample_search(StepModel& model, double temperature, Rng& rng, const SearchLimits& limits) {
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_search: temperature must be > 0");
  Hypothesis h;
  auto state = model.initial();
  int prev = limits.bos;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (true) {
    auto [logp, next] = model.step(state, prev);
    double mx = *std::max_element(logp.begin(), logp.end());
    std::vector<double> w(logp.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logp.size(); ++i) total += (w[i] = std::exp((logp[i] - mx) / temperature));
    double u = unit(rng) * total;
    std::size_t tok = 0;
    for (; tok + 1 < w.size(); ++tok) {
      if ((u -= w[tok]) < 0.0) break;
    }
    if (int(tok) == limits.eos) {
      h.score += logp[tok];
      h.finished = true;
      break;
    }
    if (h.ids.size() == limits.max_len) break;
    h.score += logp[tok];
    h.ids.push_back(int(tok));
    state = next;
    prev = int(tok);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Decoder-backed step model

DecoderStepModel::DecoderStepModel(const Model& model, DecoderId id, std::vector<Array> conditioning)
    : model_(model), id_(id) {
  Conditioning cond{id, {}};
  for (auto& a : conditioning) cond.vectors.push_back(tape_.constant(std::move(a)));
  z_ = cond.z();
  states_.push_back(init_decoder_state(tape_, model_, cond));
}

std::pair<std::vector<double>, StepModel::State> DecoderStepModel::step(State state, int prev) {
  auto out = decode_step(tape_, model_, id_, states_.at(state), {prev}, z_);
  const Array logp = log_softmax_rows(out.logits.value());
  states_.push_back(std::move(out.state));
  return {std::vector<double>(logp.values().begin(), logp.values().end()), states_.size() - 1};
}

// ---------------------------------------------------------------------------
// Generation

ConditioningVectors condition_on(const std::vector<Tokens>& context, const Tokens& utterance,
                                 ZMode z_mode, std::uint64_t seed, const Model& model,
                                 const Vocabulary& vocab, std::size_t max_len) {
  if (context.empty()) throw std::invalid_argument("empty context");
  if (utterance.empty()) throw std::invalid_argument("empty utterance");
  for (const auto& t : context) {
    if (t.empty()) throw std::invalid_argument("empty context turn");
  }
  Tape tape(false);
  const SeqBatch c = pad_sequences({flatten_context(context, vocab, max_len)});
  auto u_ids = vocab.encode(utterance);
  if (u_ids.size() > max_len) u_ids.resize(max_len);
  const SeqBatch u = pad_sequences({u_ids});
  Var c_vec = encode_context(tape, model, c);
  Var u_vec = encode_utterance(tape, model, u);
  auto prior = prior_params(tape, model, c_vec);
  Var z = prior.mean;
  if (z_mode == ZMode::prior_sample) {
    Rng rng(seed);
    z = reparameterize(tape, prior, rng).z;
  }
  return {c_vec.value(), u_vec.value(), z.value()};
}

namespace {

Generation run_search(StepModel& step_model, const DecodeRequest& req, const Vocabulary& vocab) {
  if (req.max_len == 0) throw std::invalid_argument("max length must be >= 1");
  SearchLimits limits;
  limits.max_len = req.max_len;
  Hypothesis h;
  switch (req.strategy) {
    case Strategy::greedy: h = greedy_search(step_model, limits); break;
    case Strategy::beam: h = beam_search(step_model, req.beam_k, limits); break;
    case Strategy::sample: {
      Rng rng(req.seed ^ 0x5bd1e995ULL);
      h = sample_search(step_model, req.temperature, rng, limits);
      break;
    }
  }
  Generation g;
  g.ids = h.ids;
  g.tokens = vocab.decode(h.ids);
  g.score = h.score;
  g.finished = h.finished;
  return g;
}

}  // namespace

Generation generate_response(const DecodeRequest& request, const Model& model, const Vocabulary& vocab) {
  if (request.query.empty()) throw std::invalid_argument("generate_response: empty query");
  auto cv = condition_on(request.context, request.query, request.z_mode, request.seed, model, vocab);
  DecoderStepModel step(model, DecoderId::dec1, {cv.c_vec, cv.z, cv.x_vec});
  return run_search(step, request, vocab);
}

Generation backward_infer_query(const std::vector<Tokens>& context, const Tokens& response,
                                const DecodeRequest& options, const Model& model,
                                const Vocabulary& vocab) {
  if (response.empty()) throw std::invalid_argument("backward_infer_query: empty response");
  auto cv = condition_on(context, response, options.z_mode, options.seed, model, vocab);
  DecoderStepModel step(model, DecoderId::dec3, {cv.c_vec, cv.z, cv.x_vec});
  return run_search(step, options, vocab);
}

// ---------------------------------------------------------------------------
// Chat

ChatSession::ChatSession(const Model* model, const Vocabulary* vocab, std::size_t context_turns)
    : model_(model), vocab_(vocab), context_turns_(context_turns) {
  if (context_turns_ == 0) throw std::invalid_argument("ChatSession: context window must be >= 1");
}

std::pair<std::vector<Tokens>, Tokens> ChatSession::current_input() const {
  if (history_.empty()) throw std::logic_error("ChatSession: no turns yet");
  Tokens query = history_.back();
  std::vector<Tokens> context;
  const std::size_t available = history_.size() - 1;
  const std::size_t take = std::min(available, context_turns_);
  for (std::size_t i = available - take; i < available; ++i) context.push_back(history_[i]);
  if (context.empty()) context.push_back({Vocabulary::reserved_tokens()[Vocabulary::kBos]});
  return {context, query};
}

std::string ChatSession::turn(const std::string& user_utterance) {
  if (!model_ || !vocab_) throw std::logic_error("ChatSession: no checkpoint loaded");
  auto toks = tokenize(user_utterance);
  if (toks.empty()) throw std::invalid_argument("ChatSession: empty utterance");
  history_.push_back(std::move(toks));
  auto [context, query] = current_input();
  DecodeRequest req = options_;
  req.context = std::move(context);
  req.query = std::move(query);
  auto g = generate_response(req, *model_, *vocab_);
  Tokens reply = g.tokens.empty() ? Tokens{"..."} : g.tokens;
  history_.push_back(reply);
  return detokenize(reply);
}

void run_chat_repl(ChatSession& session, std::istream& in, std::ostream& out) {
  std::string line;
  out << "> " << std::flush;
  while (std::getline(in, line)) {
    if (line == ":quit") break;
    if (line == ":reset") {
      session.reset();
      out << "[history cleared]\n";
    } else if (line.rfind(":seed ", 0) == 0) {
      try {
        session.set_seed(std::stoull(line.substr(6)));
        out << "[seed set]\n";
      } catch (const std::exception&) {
        out << "[bad seed]\n";
      }
    } else if (!tokenize(line).empty()) {
      out << session.turn(line) << '\n';
    }
    out << "> " << std::flush;
  }
}

}  // namespace mirror
