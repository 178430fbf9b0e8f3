#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mirror {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Tokens = std::vector<std::string>;

struct Dialogue {
  std::vector<Tokens> turns;
  std::vector<int> speakers;  // optional; empty when unknown
};

// One training unit: context turns, the query turn right before the
// response, and the response itself.
struct Triple {
  std::vector<Tokens> context;
  Tokens query;
  Tokens response;

  // Context followed by the query.
  std::vector<Tokens> c_all() const;
  bool operator==(const Triple&) const = default;
};

struct WindowReport {
  std::size_t dialogues = 0;
  std::size_t skipped_short = 0;
  std::size_t triples = 0;
};

// Lowercases and splits on whitespace; ASCII punctuation becomes separate
// tokens. Bytes >= 0x80 are treated as word characters.
Tokens tokenize(std::string_view text);
std::string detokenize(const Tokens& tokens);

// Every contiguous run of `window` turns (advancing by `stride`) yields one
// triple: the first window-2 turns form the context, then query, response.
std::vector<Triple> window_dialogues(std::span<const Dialogue> dialogues, std::size_t window = 3,
                                     std::size_t stride = 1, WindowReport* report = nullptr);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSep = 4;
  static constexpr std::size_t kReserved = 5;
  static const std::vector<std::string>& reserved_tokens();

  Vocabulary();
  // Regular tokens in id order (ids start at kReserved).
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t size() const { return id_to_token_.size(); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }

  std::vector<int> encode(const Tokens& tokens) const;
  // Drops PAD, BOS and EOS.
  Tokens decode(std::span<const int> ids) const;

  // One regular token per line; line n holds id n + kReserved.
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  void insert(const std::string& token);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Keeps the max_size most frequent tokens; ties go to the lexicographically
// smaller token.
Vocabulary build_vocabulary(std::span<const Triple> triples, std::size_t max_size = 20000);

// Right-padded id matrix, row-major [batch x max_len].
struct SeqBatch {
  std::size_t batch = 0;
  std::size_t max_len = 0;
  std::vector<int> ids;
  std::vector<std::size_t> lengths;

  int at(std::size_t row, std::size_t t) const { return ids[row * max_len + t]; }
  std::span<const int> row(std::size_t r) const { return {ids.data() + r * max_len, lengths[r]}; }
  // Ids at time step t for every row (PAD past the end).
  std::vector<int> column(std::size_t t) const;
  // 1.0 where t < length, else 0.0.
  std::vector<double> mask(std::size_t t) const;
};

SeqBatch pad_sequences(const std::vector<std::vector<int>>& rows);

struct Batch {
  SeqBatch context;          // turns joined with SEP
  SeqBatch query;            // encoder view
  SeqBatch response;         // encoder view
  SeqBatch query_target;     // BOS ... EOS
  SeqBatch response_target;  // BOS ... EOS
  std::size_t vocab_size = 0;

  std::size_t size() const { return query.batch; }
};

inline constexpr std::size_t kDefaultMaxLen = 50;

std::vector<int> flatten_context(const std::vector<Tokens>& turns, const Vocabulary& vocab,
                                 std::size_t max_len);
Batch encode_batch(std::span<const Triple> triples, const Vocabulary& vocab,
                   std::size_t max_len = kDefaultMaxLen);

// Unified corpus: one JSON object per line, {"turns": [...], "speakers": [...]}.
std::vector<Dialogue> read_jsonl_corpus(std::istream& in);
void write_jsonl_corpus(std::ostream& out, std::span<const Dialogue> dialogues);
// DailyDialog: one dialogue per line, turns separated by "__eou__".
std::vector<Dialogue> read_dailydialog(std::istream& in);
// Tab-separated context, query, response per line.
std::vector<Dialogue> read_triples_tsv(std::istream& in);

enum class CorpusFormat { jsonl, dailydialog, triples_tsv };
std::vector<Dialogue> read_corpus_file(const std::string& path, CorpusFormat format);

}  // namespace mirror
