#pragma once

#include "mirror/corpus.hpp"
#include "mirror/model.hpp"

namespace mirror {

enum class EncoderKind { utterance, context };

// Final top-layer hidden state at each row's last unmasked position,
// [batch x hidden]. PAD positions past a row's length never touch its state.
Var encode_sequence(Tape& tape, const Model& model, EncoderKind kind, const SeqBatch& tokens);

// Enc_utt, used for both the query and the response.
inline Var encode_utterance(Tape& tape, const Model& model, const SeqBatch& tokens) {
  return encode_sequence(tape, model, EncoderKind::utterance, tokens);
}

// Enc_ctx over context turns already flattened with SEP (see encode_batch).
inline Var encode_context(Tape& tape, const Model& model, const SeqBatch& flattened) {
  return encode_sequence(tape, model, EncoderKind::context, flattened);
}

}  // namespace mirror
