#include "mirror/model.hpp"

#include <algorithm>

namespace mirror {

ModelConfig paper_profile(std::size_t vocab_size, DatasetKind dataset) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = 200;
  c.hidden_dim = 1000;
  c.z_dim = dataset == DatasetKind::movietriples ? 100 : 160;
  return c;
}

ModelConfig desk_profile(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = 64;
  c.hidden_dim = 128;
  c.z_dim = 16;
  return c;
}

ModelConfig profile_config(ScaleProfile profile, std::size_t vocab_size, DatasetKind dataset) {
  return profile == ScaleProfile::paper ? paper_profile(vocab_size, dataset) : desk_profile(vocab_size);
}

namespace {

Array uniform(std::size_t rows, std::size_t cols, double range, Rng& rng) {
  std::uniform_real_distribution<double> dist(-range, range);
  Array a = Array::zeros(rows, cols);
  for (auto& v : a.values()) v = dist(rng);
  return a;
}

Array normal(std::size_t rows, std::size_t cols, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std);
  Array a = Array::zeros(rows, cols);
  for (auto& v : a.values()) v = dist(rng);
  return a;
}

void add_lstm(ParamStore& p, const std::string& prefix, std::size_t input, std::size_t hidden,
              std::size_t layers, double range, Rng& rng) {
  for (std::size_t k = 0; k < layers; ++k) {
    const std::size_t in = k == 0 ? input : hidden;
    const std::string name = prefix + ".l" + std::to_string(k);
    p.add(name + ".w", uniform(in + hidden, 4 * hidden, range, rng));
    p.add(name + ".b", Array::zeros(1, 4 * hidden));
  }
}

void add_affine(ParamStore& p, const std::string& prefix, std::size_t in, std::size_t out,
                double range, Rng& rng) {
  p.add(prefix + ".w", uniform(in, out, range, rng));
  p.add(prefix + ".b", Array::zeros(1, out));
}

}  // namespace

Model Model::create(const ModelConfig& config, std::uint64_t seed) {
  if (config.vocab_size <= 5 || config.embed_dim == 0 || config.hidden_dim == 0 ||
      config.z_dim == 0 || config.layers == 0) {
    throw std::invalid_argument("Model::create: invalid configuration");
  }
  Model m;
  m.config = config;
  Rng rng(seed);
  const auto V = config.vocab_size, E = config.embed_dim, H = config.hidden_dim,
             Z = config.z_dim, L = config.layers;
  const double r = config.init_range;
  m.params.add("embedding", normal(V, E, config.embed_std, rng));
  add_lstm(m.params, "enc_utt", E, H, L, r, rng);
  add_lstm(m.params, "enc_ctx", E, H, L, r, rng);
  add_affine(m.params, "posterior.hidden", 3 * H, config.latent_hidden(), r, rng);
  add_affine(m.params, "posterior.out", config.latent_hidden(), 2 * Z, r, rng);
  add_affine(m.params, "prior.hidden", H, config.latent_hidden(), r, rng);
  add_affine(m.params, "prior.out", config.latent_hidden(), 2 * Z, r, rng);
  for (int d = 1; d <= 4; ++d) {
    const std::string name = "dec" + std::to_string(d);
    const std::size_t cond = (d == 1 || d == 3) ? 2 * H + Z : H + Z;
    add_affine(m.params, name + ".init", cond, L * H, r, rng);
    add_lstm(m.params, name, E + Z, H, L, r, rng);
    add_affine(m.params, name + ".out", H, V, r, rng);
  }
  return m;
}

void Model::zero_output_projections() {
  for (int d = 1; d <= 4; ++d) {
    params.get("dec" + std::to_string(d) + ".out.w").fill(0.0);
    params.get("dec" + std::to_string(d) + ".out.b").fill(0.0);
  }
}

std::vector<std::string> Model::recognition_parameter_names() const {
  std::vector<std::string> out;
  for (const auto& [name, a] : params) {
    if (name.rfind("posterior.", 0) == 0) out.push_back(name);
  }
  return out;
}

LstmWeights lstm_weights(Tape& tape, const Model& model, const std::string& prefix) {
  LstmWeights w;
  w.hidden = model.config.hidden_dim;
  for (std::size_t k = 0; k < model.config.layers; ++k) {
    const std::string name = prefix + ".l" + std::to_string(k);
    w.w.push_back(tape.param(model.params, name + ".w"));
    w.b.push_back(tape.param(model.params, name + ".b"));
  }
  return w;
}

LstmState lstm_zero_state(Tape& tape, std::size_t batch, std::size_t hidden, std::size_t layers) {
  LstmState s;
  for (std::size_t k = 0; k < layers; ++k) {
    s.h.push_back(tape.constant(Array::zeros(batch, hidden)));
    s.c.push_back(tape.constant(Array::zeros(batch, hidden)));
  }
  return s;
}

namespace {

Var carry(Var fresh, Var old, const std::vector<double>* mask) {
  if (!mask || std::all_of(mask->begin(), mask->end(), [](double m) { return m == 1.0; })) {
    return fresh;
  }
  Tape& t = *fresh.tape;
  Array keep = Array::zeros(mask->size(), 1), hold = Array::zeros(mask->size(), 1);
  for (std::size_t i = 0; i < mask->size(); ++i) {
    keep[i] = (*mask)[i];
    hold[i] = 1.0 - (*mask)[i];
  }
  return add(mul_col(fresh, t.constant(std::move(keep))), mul_col(old, t.constant(std::move(hold))));
}

}  // namespace

LstmState lstm_step(const LstmWeights& weights, Var input, const LstmState& prev,
                    const std::vector<double>* mask) {
  const std::size_t H = weights.hidden;
  LstmState next;
  Var x = input;
  for (std::size_t k = 0; k < weights.w.size(); ++k) {
    Var gates = add_bias(matmul(concat_cols({x, prev.h[k]}), weights.w[k]), weights.b[k]);
    Var i = sigmoid(slice_cols(gates, 0, H));
    Var f = sigmoid(slice_cols(gates, H, H));
    Var g = tanh(slice_cols(gates, 2 * H, H));
    Var o = sigmoid(slice_cols(gates, 3 * H, H));
    Var c = add(mul(f, prev.c[k]), mul(i, g));
    Var h = mul(o, tanh(c));
    next.c.push_back(carry(c, prev.c[k], mask));
    next.h.push_back(carry(h, prev.h[k], mask));
    x = next.h.back();
  }
  return next;
}

Var affine(Tape& tape, const Model& model, const std::string& prefix, Var input) {
  return add_bias(matmul(input, tape.param(model.params, prefix + ".w")),
                  tape.param(model.params, prefix + ".b"));
}

}  // namespace mirror
