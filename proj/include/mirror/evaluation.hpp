#pragma once

#include "mirror/corpus.hpp"
#include "mirror/decoders.hpp"
#include "mirror/model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mirror {

// ---------------------------------------------------------------------------
// Automatic metrics

// exp(-sum log p / sum predicted tokens) for the given decoder with z at the
// prior mean. Dec1 scores responses; Dec3 scores queries.
double perplexity(std::span<const Triple> test_set, const Model& model, const Vocabulary& vocab,
                  DecoderId decoder = DecoderId::dec1, std::size_t max_len = kDefaultMaxLen);

// Unique n-grams over total n-grams across all responses; 0 when there are none.
double distinct_n(std::span<const Tokens> responses, std::size_t n);

// ---------------------------------------------------------------------------
// Model-output files: one JSON object per line with
// {dialogue_index, response_text, decode_strategy, checkpoint_id}.

struct ModelOutput {
  std::size_t dialogue_index = 0;
  std::string response_text;
  std::string decode_strategy;
  std::string checkpoint_id;
};

std::vector<ModelOutput> read_model_outputs(std::istream& in);
std::vector<ModelOutput> read_model_outputs(const std::string& path);
void write_model_outputs(std::ostream& out, std::span<const ModelOutput> outputs);

// ---------------------------------------------------------------------------
// Pairwise judgments

enum class Choice { a, b, tie };
std::string to_string(Choice c);
std::optional<Choice> parse_choice(const std::string& s);

enum class Side { a, b };

struct EvalPair {
  std::string pair_id;
  std::size_t dialogue_index = 0;
  std::string context;  // context turns and query, one per line
  std::string response_a;
  std::string response_b;
  Side focal_side = Side::a;  // hidden from annotators
};

struct Judgment {
  std::string pair_id;
  std::string annotator;
  Choice choice = Choice::tie;
  std::int64_t timestamp = 0;  // unix seconds
};

struct AggregateResult {
  double wins = 0.0;
  double losses = 0.0;
  double ties = 0.0;
  std::size_t counted_pairs = 0;
};

struct SessionResults {
  AggregateResult majority;  // one outcome per pair, 1/1/1 split is a tie
  AggregateResult pooled;    // every judgment is a vote
  std::size_t total_pairs = 0;
  std::size_t completed_pairs = 0;
  std::size_t judgments = 0;
};

inline constexpr std::size_t kJudgmentsPerPair = 3;
inline constexpr std::size_t kDefaultEvalPairs = 200;

struct SessionPlan {
  std::string focal_model;
  std::string comparator_model;
  std::vector<EvalPair> pairs;
};

// Samples n_pairs test dialogues without replacement and randomizes which
// side shows the focal model. `focal` and `comparator` are indexed by
// dialogue_index.
SessionPlan plan_session(std::span<const Triple> test_set, std::span<const ModelOutput> focal,
                         std::span<const ModelOutput> comparator, std::size_t n_pairs,
                         std::uint64_t seed, std::string focal_name = "A",
                         std::string comparator_name = "B");

enum class JudgmentStatus { accepted, duplicate, unknown_pair, invalid_choice, pair_complete };
std::string to_string(JudgmentStatus s);

// Majority rule over exactly three judgments per pair (and pooled votes),
// computed over completed pairs only. Throws when none are complete.
SessionResults aggregate_results(const SessionPlan& plan, std::span<const Judgment> judgments);

// A persisted session: plan in <dir>/session.json, append-only judgment
// journal in <dir>/journal.jsonl. Thread-safe.
class EvalSession {
 public:
  static std::unique_ptr<EvalSession> create(const std::filesystem::path& dir, SessionPlan plan);
  // Loads the plan and replays the journal.
  static std::unique_ptr<EvalSession> open(const std::filesystem::path& dir);

  const SessionPlan& plan() const { return plan_; }
  const std::filesystem::path& dir() const { return dir_; }

  // Next pair this annotator has not judged and that still needs judgments.
  std::optional<EvalPair> next_pair(const std::string& annotator) const;
  // (judged by this annotator, total pairs)
  std::pair<std::size_t, std::size_t> progress(const std::string& annotator) const;

  // The judgment is appended and flushed to the journal before returning
  // `accepted`.
  JudgmentStatus record_judgment(const Judgment& judgment);
  JudgmentStatus record_judgment(const std::string& pair_id, const std::string& annotator,
                                 const std::string& choice);

  std::vector<Judgment> judgments() const;
  SessionResults results() const;
  std::size_t journal_records() const;

 private:
  EvalSession(std::filesystem::path dir, SessionPlan plan);
  JudgmentStatus check(const Judgment& j) const;
  void apply(const Judgment& j);

  std::filesystem::path dir_;
  SessionPlan plan_;
  std::map<std::string, std::size_t> pair_index_;
  mutable std::mutex mu_;
  std::vector<Judgment> judgments_;
  std::vector<std::vector<std::string>> annotators_by_pair_;
};

// Plan (de)serialization, including the hidden side mapping.
std::string plan_to_json(const SessionPlan& plan);
SessionPlan plan_from_json(const std::string& text);
std::string judgment_to_json(const Judgment& j);
Judgment judgment_from_json(const std::string& line);

}  // namespace mirror
