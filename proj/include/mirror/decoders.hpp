#pragma once

#include "mirror/corpus.hpp"
#include "mirror/model.hpp"

#include <vector>

namespace mirror {

// Dec1: p(y | c, z, x)   Dec2: p(x | c, z)
// Dec3: p(x | c, z, y)   Dec4: p(y | c, z)
enum class DecoderId { dec1 = 1, dec2 = 2, dec3 = 3, dec4 = 4 };

std::size_t conditioning_arity(DecoderId id);
std::string decoder_prefix(DecoderId id);

// Ordered conditioning vectors: c_vec, z, then x_vec (Dec1) or y_vec (Dec3).
struct Conditioning {
  DecoderId id = DecoderId::dec1;
  std::vector<Var> vectors;

  Var z() const { return vectors.at(1); }
};

struct DecoderState {
  LstmState lstm;
};

// Initial hidden state of every layer is an affine map of the concatenated
// conditioning vectors; cell states start at zero.
DecoderState init_decoder_state(Tape& tape, const Model& model, const Conditioning& cond);

struct StepOutput {
  Var logits;  // [batch x vocab]
  DecoderState state;
};

// Feeds [embedding(prev); z] through the decoder cell.
StepOutput decode_step(Tape& tape, const Model& model, DecoderId id, const DecoderState& state,
                       const std::vector<int>& prev_tokens, Var z);

struct TeacherForced {
  Var total;                   // [batch x 1]
  std::vector<Var> per_token;  // one [batch x 1] entry per predicted position
};

// Log-likelihood of a BOS ... EOS framed target under gold-prefix feeding.
// BOS is never predicted; EOS is. Positions past a row's length contribute 0.
TeacherForced teacher_forced_log_prob(Tape& tape, const Model& model, const Conditioning& cond,
                                      const SeqBatch& target);

}  // namespace mirror
