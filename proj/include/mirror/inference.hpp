#pragma once

#include "mirror/corpus.hpp"
#include "mirror/decoders.hpp"
#include "mirror/model.hpp"

#include <deque>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mirror {

enum class Strategy { greedy, beam, sample };
enum class ZMode { prior_mean, prior_sample };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);
ZMode parse_z_mode(const std::string& s);

// Anything that yields next-token log-probabilities given the previous token.
class StepModel {
 public:
  using State = std::size_t;
  virtual ~StepModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual State initial() = 0;
  // Log-probabilities of the token following `prev`, and the state after it.
  virtual std::pair<std::vector<double>, State> step(State state, int prev) = 0;
};

struct Hypothesis {
  std::vector<int> ids;  // emitted tokens, EOS excluded
  double score = 0.0;    // total log probability, EOS included when finished
  bool finished = false;

  // Score per emitted token, EOS counted.
  double normalized() const;
};

struct SearchLimits {
  int bos = Vocabulary::kBos;
  int eos = Vocabulary::kEos;
  std::size_t max_len = 30;
};

Hypothesis greedy_search(StepModel& model, const SearchLimits& limits);
// Finished hypotheses are ranked by length-normalized score.
Hypothesis beam_search(StepModel& model, std::size_t k, const SearchLimits& limits);
Hypothesis sample_search(StepModel& model, double temperature, Rng& rng, const SearchLimits& limits);

// Step model over one of the four decoders with fixed conditioning.
class DecoderStepModel : public StepModel {
 public:
  // `conditioning` rows are [1 x dim] value arrays in decoder order.
  DecoderStepModel(const Model& model, DecoderId id, std::vector<Array> conditioning);

  std::size_t vocab_size() const override { return model_.config.vocab_size; }
  State initial() override { return 0; }
  std::pair<std::vector<double>, State> step(State state, int prev) override;

 private:
  const Model& model_;
  DecoderId id_;
  Tape tape_{false};
  Var z_;
  std::vector<DecoderState> states_;
};

struct DecodeRequest {
  std::vector<Tokens> context;
  Tokens query;
  Strategy strategy = Strategy::greedy;
  std::size_t beam_k = 5;
  double temperature = 1.0;
  ZMode z_mode = ZMode::prior_mean;
  std::size_t max_len = 30;
  std::uint64_t seed = 1234;
};

struct Generation {
  Tokens tokens;
  std::vector<int> ids;
  double score = 0.0;
  bool finished = false;
};

// Encodes (c, x), draws z from the prior, and decodes the response with Dec1.
Generation generate_response(const DecodeRequest& request, const Model& model, const Vocabulary& vocab);

// Decodes the query from (c, y) with Dec3; `request.query` holds the response.
Generation backward_infer_query(const std::vector<Tokens>& context, const Tokens& response,
                                const DecodeRequest& options, const Model& model,
                                const Vocabulary& vocab);

struct ConditioningVectors {
  Array c_vec;
  Array x_vec;  // or y_vec for the backward direction
  Array z;
};

// Value-only encoding of one (context, utterance) pair with z from the prior.
ConditioningVectors condition_on(const std::vector<Tokens>& context, const Tokens& utterance,
                                 ZMode z_mode, std::uint64_t seed, const Model& model,
                                 const Vocabulary& vocab, std::size_t max_len = kDefaultMaxLen);

class ChatSession {
 public:
  // `context_turns` is m: how many turns before the query form the context.
  ChatSession(const Model* model, const Vocabulary* vocab, std::size_t context_turns = 1);

  std::string turn(const std::string& user_utterance);
  void reset() { history_.clear(); }
  void set_seed(std::uint64_t seed) { options_.seed = seed; }
  DecodeRequest& options() { return options_; }

  const std::deque<Tokens>& history() const { return history_; }
  // (context, query) the model would see for the current history.
  std::pair<std::vector<Tokens>, Tokens> current_input() const;
  void push_turn(Tokens turn) { history_.push_back(std::move(turn)); }

 private:
  const Model* model_;
  const Vocabulary* vocab_;
  std::size_t context_turns_;
  std::deque<Tokens> history_;
  DecodeRequest options_;
};

// Plain-text REPL. Commands: ":reset", ":quit", ":seed N".
void run_chat_repl(ChatSession& session, std::istream& in, std::ostream& out);

}  // namespace mirror
