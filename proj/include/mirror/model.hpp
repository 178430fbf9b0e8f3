#pragma once

#include "mirror/tape.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mirror {

using Rng = std::mt19937_64;

enum class ScaleProfile { paper, desk };
enum class DatasetKind { dailydialog, movietriples, custom };

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t z_dim = 16;
  std::size_t layers = 2;
  double init_range = 0.08;
  double embed_std = 0.01;

  std::size_t latent_hidden() const { return 2 * z_dim; }
  bool operator==(const ModelConfig&) const = default;
};

// Embedding 200, hidden 1000; z is 160 for DailyDialog and 100 for
// MovieTriples.
ModelConfig paper_profile(std::size_t vocab_size, DatasetKind dataset);
// Embedding 64, hidden 128, z 16.
ModelConfig desk_profile(std::size_t vocab_size);
ModelConfig profile_config(ScaleProfile profile, std::size_t vocab_size, DatasetKind dataset);

// All generation and recognition parameters, addressed by name:
//   embedding                      shared token table [V x E]
//   enc_utt.l{k}.{w,b}, enc_ctx.*  stacked LSTM encoders
//   posterior.{hidden,out}.{w,b}   q(z | c, x, y)
//   prior.{hidden,out}.{w,b}       p(z | c)
//   dec{1..4}.init.{w,b}           conditioning -> initial hidden state
//   dec{1..4}.l{k}.{w,b}           stacked LSTM decoder
//   dec{1..4}.out.{w,b}            vocabulary projection
struct Model {
  ModelConfig config;
  ParamStore params;

  static Model create(const ModelConfig& config, std::uint64_t seed);

  void zero_output_projections();
  std::vector<std::string> recognition_parameter_names() const;
};

// LSTM over a stack of layers named `<prefix>.l<k>`.
struct LstmState {
  std::vector<Var> h;
  std::vector<Var> c;
};

struct LstmWeights {
  std::vector<Var> w;
  std::vector<Var> b;
  std::size_t hidden = 0;
};

LstmWeights lstm_weights(Tape& tape, const Model& model, const std::string& prefix);
LstmState lstm_zero_state(Tape& tape, std::size_t batch, std::size_t hidden, std::size_t layers);
// One time step. Rows whose mask entry is 0 keep their previous state.
LstmState lstm_step(const LstmWeights& weights, Var input, const LstmState& prev,
                    const std::vector<double>* mask = nullptr);

// Affine layer `<prefix>.w`, `<prefix>.b`.
Var affine(Tape& tape, const Model& model, const std::string& prefix, Var input);

}  // namespace mirror
