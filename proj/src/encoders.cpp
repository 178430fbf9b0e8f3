#include "mirror/encoders.hpp"

namespace mirror {

Var encode_sequence(Tape& tape, const Model& model, EncoderKind kind, const SeqBatch& tokens) {
  if (tokens.batch == 0) throw std::invalid_argument("encode: empty batch");
  for (auto len : tokens.lengths) {
    if (len == 0) throw std::invalid_argument("encode: fully masked input row");
  }
  const auto weights =
      lstm_weights(tape, model, kind == EncoderKind::utterance ? "enc_utt" : "enc_ctx");
  Var table = tape.param(model.params, "embedding");
  auto state = lstm_zero_state(tape, tokens.batch, model.config.hidden_dim, model.config.layers);
  std::size_t steps = 0;
  for (auto len : tokens.lengths) steps = std::max(steps, len);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto mask = tokens.mask(t);
    Var x = embedding(table, tokens.column(t));
    state = lstm_step(weights, x, state, &mask);
  }
  return state.h.back();
}

}  // namespace mirror
