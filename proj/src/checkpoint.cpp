#include "mirror/checkpoint.hpp"

#include <json.hpp>

#include <array>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mirror {

std::string to_string(ScaleProfile p) { return p == ScaleProfile::paper ? "paper" : "desk"; }

ScaleProfile parse_profile(const std::string& s) {
  if (s == "paper") return ScaleProfile::paper;
  if (s == "desk") return ScaleProfile::desk;
  throw std::invalid_argument("unknown profile: " + s);
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                                 char((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw CheckpointError("checkpoint: truncated");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get_u32(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw CheckpointError("checkpoint: truncated string");
  return s;
}

nlohmann::json config_json(const Model& model, const TrainConfig& t) {
  const auto& m = model.config;
  return {{"model",
           {{"vocab_size", m.vocab_size},
            {"embed_dim", m.embed_dim},
            {"hidden_dim", m.hidden_dim},
            {"z_dim", m.z_dim},
            {"layers", m.layers},
            {"init_range", m.init_range},
            {"embed_std", m.embed_std}}},
          {"train",
           {{"mode", to_string(t.mode)},
            {"lr", t.lr},
            {"lr_decay", t.lr_decay},
            {"patience", t.patience},
            {"kl_ramp", t.kl_ramp},
            {"batch_size", t.batch_size},
            {"max_epochs", t.max_epochs},
            {"seed", t.seed},
            {"profile", to_string(t.profile)},
            {"clip_norm", t.clip_norm},
            {"max_len", t.max_len},
            {"precision", t.precision == Precision::f64 ? "f64" : "f32"}}}};
}

}  // namespace

void save_checkpoint(std::ostream& out, const Model& model, const Vocabulary& vocab,
                     const TrainConfig& train) {
  if (vocab.size() != model.config.vocab_size) {
    throw CheckpointError("save_checkpoint: vocabulary size differs from the model's");
  }
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_string(out, config_json(model, train).dump());
  put_u32(out, std::uint32_t(vocab.size() - Vocabulary::kReserved));
  for (std::size_t i = Vocabulary::kReserved; i < vocab.size(); ++i) put_string(out, vocab.token(int(i)));
  put_u32(out, std::uint32_t(model.params.size()));
  for (const auto& [name, a] : model.params) {
    put_string(out, name);
    put_u32(out, std::uint32_t(a.rank()));
    for (auto e : a.shape()) put_u32(out, std::uint32_t(e));
    for (double v : a.values()) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  }
  if (!out) throw CheckpointError("save_checkpoint: write failed");
}

void save_checkpoint(const std::string& path, const Model& model, const Vocabulary& vocab,
                     const TrainConfig& train) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  save_checkpoint(out, model, vocab, train);
}

Checkpoint load_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw CheckpointError("checkpoint: bad magic");
  }
  const auto version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto cfg = nlohmann::json::parse(get_string(in));
  const auto& m = cfg.at("model");
  ck.model.config.vocab_size = m.at("vocab_size");
  ck.model.config.embed_dim = m.at("embed_dim");
  ck.model.config.hidden_dim = m.at("hidden_dim");
  ck.model.config.z_dim = m.at("z_dim");
  ck.model.config.layers = m.at("layers");
  ck.model.config.init_range = m.at("init_range");
  ck.model.config.embed_std = m.at("embed_std");
  const auto& t = cfg.at("train");
  ck.train.mode = parse_loss_mode(t.at("mode"));
  ck.train.lr = t.at("lr");
  ck.train.lr_decay = t.at("lr_decay");
  ck.train.patience = t.at("patience");
  ck.train.kl_ramp = t.at("kl_ramp");
  ck.train.batch_size = t.at("batch_size");
  ck.train.max_epochs = t.at("max_epochs");
  ck.train.seed = t.at("seed");
  ck.train.profile = parse_profile(t.at("profile"));
  ck.train.clip_norm = t.at("clip_norm");
  ck.train.max_len = t.at("max_len");
  ck.train.precision = t.at("precision") == "f64" ? Precision::f64 : Precision::f32_storage;

  const auto n_tokens = get_u32(in);
  std::vector<std::string> tokens;
  tokens.reserve(n_tokens);
  for (std::uint32_t i = 0; i < n_tokens; ++i) tokens.push_back(get_string(in));
  ck.vocab = Vocabulary(tokens);
  if (ck.vocab.size() != ck.model.config.vocab_size) {
    throw CheckpointError("checkpoint: vocabulary size differs from model config");
  }

  const auto n_arrays = get_u32(in);
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    const auto name = get_string(in);
    const auto rank = get_u32(in);
    if (rank == 0 || rank > 8) throw CheckpointError("checkpoint: bad rank for " + name);
    Array::Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get_u32(in));
    Array a(shape);
    for (auto& v : a.values()) {
      const std::uint32_t bits = get_u32(in);
      float f;
      std::memcpy(&f, &bits, 4);
      v = f;
    }
    ck.model.params.add(name, std::move(a));
  }
  // Shapes must match what this configuration produces.
  const Model expected = Model::create(ck.model.config, 0);
  if (expected.params.size() != ck.model.params.size()) {
    throw CheckpointError("checkpoint: parameter set does not match configuration");
  }
  for (const auto& [name, a] : expected.params) {
    if (!ck.model.params.contains(name) || !ck.model.params.get(name).same_shape(a)) {
      throw CheckpointError("checkpoint: missing or misshapen parameter " + name);
    }
  }
  return ck;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint: " + path);
  return load_checkpoint(in);
}

std::string checkpoint_id(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace mirror
