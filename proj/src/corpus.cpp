#include "mirror/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace mirror {

std::vector<Tokens> Triple::c_all() const {
  auto out = context;
  out.push_back(query);
  return out;
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80 && std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    }
  }
  flush();
  return out;
}

std::string detokenize(const Tokens& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

std::vector<Triple> window_dialogues(std::span<const Dialogue> dialogues, std::size_t window,
                                     std::size_t stride, WindowReport* report) {
  if (window < 3) throw std::invalid_argument("window_dialogues: window must be >= 3");
  if (stride < 1) throw std::invalid_argument("window_dialogues: stride must be >= 1");
  std::vector<Triple> out;
  WindowReport local;
  for (const auto& d : dialogues) {
    ++local.dialogues;
    const auto& turns = d.turns;
    if (turns.size() < window) {
      ++local.skipped_short;
      continue;
    }
    for (std::size_t start = 0; start + window <= turns.size(); start += stride) {
      Triple t;
      t.context.assign(turns.begin() + std::ptrdiff_t(start),
                       turns.begin() + std::ptrdiff_t(start + window - 2));
      t.query = turns[start + window - 2];
      t.response = turns[start + window - 1];
      out.push_back(std::move(t));
    }
  }
  local.triples = out.size();
  if (report) *report = local;
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

const std::vector<std::string>& Vocabulary::reserved_tokens() {
  static const std::vector<std::string> kTokens = {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"};
  return kTokens;
}

Vocabulary::Vocabulary() {
  for (const auto& t : reserved_tokens()) insert(t);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (t.empty()) throw CorpusError("vocabulary: empty token");
    if (contains(t)) throw CorpusError("vocabulary: duplicate token '" + t + "'");
    insert(t);
  }
}

void Vocabulary::insert(const std::string& token) {
  token_to_id_.emplace(token, int(id_to_token_.size()));
  id_to_token_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || std::size_t(id) >= id_to_token_.size()) {
    throw std::out_of_range("vocabulary: id " + std::to_string(id));
  }
  return id_to_token_[std::size_t(id)];
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(std::span<const int> ids) const {
  Tokens out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    out.push_back(token(id));
  }
  return out;
}

void Vocabulary::save(std::ostream& out) const {
  for (std::size_t i = kReserved; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(tokens);
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write vocabulary: " + path);
  save(out);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read vocabulary: " + path);
  return load(in);
}

Vocabulary build_vocabulary(std::span<const Triple> triples, std::size_t max_size) {
  if (triples.empty()) throw CorpusError("build_vocabulary: empty corpus");
  std::map<std::string, std::size_t> counts;
  auto count = [&](const Tokens& turn) {
    for (const auto& t : turn) ++counts[t];
  };
  for (const auto& tr : triples) {
    for (const auto& turn : tr.context) count(turn);
    count(tr.query);
    count(tr.response);
  }
  for (const auto& r : Vocabulary::reserved_tokens()) counts.erase(r);
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic, so a stable sort on count
  // leaves ties in lexicographic order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return Vocabulary(tokens);
}

// ---------------------------------------------------------------------------
// Batching

std::vector<int> SeqBatch::column(std::size_t t) const {
  std::vector<int> out(batch, Vocabulary::kPad);
  for (std::size_t b = 0; b < batch; ++b) out[b] = at(b, t);
  return out;
}

std::vector<double> SeqBatch::mask(std::size_t t) const {
  std::vector<double> out(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) out[b] = t < lengths[b] ? 1.0 : 0.0;
  return out;
}

SeqBatch pad_sequences(const std::vector<std::vector<int>>& rows) {
  SeqBatch s;
  s.batch = rows.size();
  for (const auto& r : rows) s.max_len = std::max(s.max_len, r.size());
  s.max_len = std::max<std::size_t>(s.max_len, 1);
  s.ids.assign(s.batch * s.max_len, Vocabulary::kPad);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    std::copy(rows[b].begin(), rows[b].end(), s.ids.begin() + std::ptrdiff_t(b * s.max_len));
    s.lengths.push_back(rows[b].size());
  }
  return s;
}

namespace {

std::vector<int> truncated(const Tokens& turn, const Vocabulary& vocab, std::size_t max_len) {
  auto ids = vocab.encode(turn);
  if (ids.size() > max_len) ids.resize(max_len);
  return ids;
}

std::vector<int> framed(std::vector<int> ids) {
  ids.insert(ids.begin(), Vocabulary::kBos);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

}  // namespace

std::vector<int> flatten_context(const std::vector<Tokens>& turns, const Vocabulary& vocab,
                                 std::size_t max_len) {
  std::vector<int> out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i) out.push_back(Vocabulary::kSep);
    auto ids = truncated(turns[i], vocab, max_len);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

Batch encode_batch(std::span<const Triple> triples, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 2) throw std::invalid_argument("encode_batch: max_len must be >= 2");
  std::vector<std::vector<int>> ctx, qry, rsp, qtg, rtg;
  for (const auto& t : triples) {
    if (t.context.empty() || t.query.empty() || t.response.empty()) {
      throw CorpusError("encode_batch: degenerate triple");
    }
    ctx.push_back(flatten_context(t.context, vocab, max_len));
    qry.push_back(truncated(t.query, vocab, max_len));
    rsp.push_back(truncated(t.response, vocab, max_len));
    qtg.push_back(framed(qry.back()));
    rtg.push_back(framed(rsp.back()));
  }
  Batch b;
  b.context = pad_sequences(ctx);
  b.query = pad_sequences(qry);
  b.response = pad_sequences(rsp);
  b.query_target = pad_sequences(qtg);
  b.response_target = pad_sequences(rtg);
  b.vocab_size = vocab.size();
  return b;
}

// ---------------------------------------------------------------------------
// Corpus files

namespace {

Dialogue make_dialogue(const std::vector<std::string>& raw_turns, std::vector<int> speakers,
                       std::size_t line_no) {
  Dialogue d;
  for (const auto& raw : raw_turns) {
    auto toks = tokenize(raw);
    if (toks.empty()) {
      throw CorpusError("line " + std::to_string(line_no) + ": empty turn after tokenization");
    }
    d.turns.push_back(std::move(toks));
  }
  if (d.turns.empty()) throw CorpusError("line " + std::to_string(line_no) + ": dialogue has no turns");
  if (!speakers.empty() && speakers.size() != d.turns.size()) {
    throw CorpusError("line " + std::to_string(line_no) + ": speaker count differs from turn count");
  }
  d.speakers = std::move(speakers);
  return d;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<Dialogue> read_jsonl_corpus(std::istream& in) {
  std::vector<Dialogue> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("turns") || !j["turns"].is_array()) {
      throw CorpusError("line " + std::to_string(line_no) + ": missing \"turns\" array");
    }
    std::vector<int> speakers;
    if (j.contains("speakers")) speakers = j["speakers"].get<std::vector<int>>();
    out.push_back(make_dialogue(j["turns"].get<std::vector<std::string>>(), std::move(speakers), line_no));
  }
  return out;
}

void write_jsonl_corpus(std::ostream& out, std::span<const Dialogue> dialogues) {
  for (const auto& d : dialogues) {
    nlohmann::json j;
    j["turns"] = nlohmann::json::array();
    for (const auto& t : d.turns) j["turns"].push_back(detokenize(t));
    if (!d.speakers.empty()) j["speakers"] = d.speakers;
    out << j.dump() << '\n';
  }
}

std::vector<Dialogue> read_dailydialog(std::istream& in) {
  static constexpr std::string_view kEou = "__eou__";
  std::vector<Dialogue> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> turns;
    std::size_t pos = 0;
    while (true) {
      auto next = line.find(kEou, pos);
      auto piece = trim(std::string_view(line).substr(pos, next == std::string::npos ? next : next - pos));
      if (next == std::string::npos) {
        if (!piece.empty()) turns.push_back(piece);
        break;
      }
      turns.push_back(piece);
      pos = next + kEou.size();
    }
    std::vector<int> speakers;
    for (std::size_t i = 0; i < turns.size(); ++i) speakers.push_back(int(i % 2));
    out.push_back(make_dialogue(turns, std::move(speakers), line_no));
  }
  return out;
}

std::vector<Dialogue> read_triples_tsv(std::istream& in) {
  std::vector<Dialogue> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::size_t pos = 0;
    while (true) {
      auto tab = line.find('\t', pos);
      cols.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (cols.size() != 3) {
      throw CorpusError("line " + std::to_string(line_no) + ": expected 3 tab-separated columns, got " +
                        std::to_string(cols.size()));
    }
    out.push_back(make_dialogue(cols, {0, 1, 0}, line_no));
  }
  return out;
}

std::vector<Dialogue> read_corpus_file(const std::string& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read corpus: " + path);
  switch (format) {
    case CorpusFormat::jsonl: return read_jsonl_corpus(in);
    case CorpusFormat::dailydialog: return read_dailydialog(in);
    case CorpusFormat::triples_tsv: return read_triples_tsv(in);
  }
  throw CorpusError("unknown corpus format");
}

}  // namespace mirror
