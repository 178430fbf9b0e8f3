#include "mirror/decoders.hpp"

namespace mirror {

std::size_t conditioning_arity(DecoderId id) {
  return (id == DecoderId::dec1 || id == DecoderId::dec3) ? 3 : 2;
}

std::string decoder_prefix(DecoderId id) { return "dec" + std::to_string(int(id)); }

namespace {

void check_conditioning(const Model& model, const Conditioning& cond) {
  if (cond.vectors.size() != conditioning_arity(cond.id)) {
    throw std::invalid_argument(decoder_prefix(cond.id) + ": expected " +
                                std::to_string(conditioning_arity(cond.id)) +
                                " conditioning vectors, got " + std::to_string(cond.vectors.size()));
  }
  const auto H = model.config.hidden_dim, Z = model.config.z_dim;
  for (std::size_t i = 0; i < cond.vectors.size(); ++i) {
    const std::size_t want = i == 1 ? Z : H;
    if (cond.vectors[i].cols() != want) {
      throw ShapeError(decoder_prefix(cond.id) + ": conditioning vector " + std::to_string(i) +
                       " has width " + std::to_string(cond.vectors[i].cols()));
    }
  }
}

}  // namespace

DecoderState init_decoder_state(Tape& tape, const Model& model, const Conditioning& cond) {
  check_conditioning(model, cond);
  const auto H = model.config.hidden_dim, L = model.config.layers;
  Var flat = affine(tape, model, decoder_prefix(cond.id) + ".init", concat_cols(cond.vectors));
  DecoderState s;
  const auto batch = flat.rows();
  for (std::size_t k = 0; k < L; ++k) {
    s.lstm.h.push_back(slice_cols(flat, k * H, H));
    s.lstm.c.push_back(tape.constant(Array::zeros(batch, H)));
  }
  return s;
}

StepOutput decode_step(Tape& tape, const Model& model, DecoderId id, const DecoderState& state,
                       const std::vector<int>& prev_tokens, Var z) {
  const std::string prefix = decoder_prefix(id);
  const auto weights = lstm_weights(tape, model, prefix);
  Var emb = embedding(tape.param(model.params, "embedding"), prev_tokens);
  StepOutput out;
  out.state.lstm = lstm_step(weights, concat_cols({emb, z}), state.lstm);
  out.logits = affine(tape, model, prefix + ".out", out.state.lstm.h.back());
  return out;
}

TeacherForced teacher_forced_log_prob(Tape& tape, const Model& model, const Conditioning& cond,
                                      const SeqBatch& target) {
  if (target.batch == 0 || target.max_len < 2) {
    throw std::invalid_argument("teacher_forced_log_prob: empty target");
  }
  for (std::size_t b = 0; b < target.batch; ++b) {
    if (target.lengths[b] < 2 || target.at(b, 0) != Vocabulary::kBos) {
      throw std::invalid_argument("teacher_forced_log_prob: target row " + std::to_string(b) +
                                  " is not framed BOS ... EOS");
    }
  }
  auto state = init_decoder_state(tape, model, cond);
  const std::string prefix = decoder_prefix(cond.id);
  const auto weights = lstm_weights(tape, model, prefix);
  Var table = tape.param(model.params, "embedding");
  Var out_w = tape.param(model.params, prefix + ".out.w");
  Var out_b = tape.param(model.params, prefix + ".out.b");
  Var z = cond.z();

  TeacherForced tf;
  std::size_t steps = 0;
  for (auto len : target.lengths) steps = std::max(steps, len);
  for (std::size_t t = 0; t + 1 < steps; ++t) {
    Var emb = embedding(table, target.column(t));
    state.lstm = lstm_step(weights, concat_cols({emb, z}), state.lstm);
    Var logits = add_bias(matmul(state.lstm.h.back(), out_w), out_b);
    tf.per_token.push_back(log_softmax_pick(logits, target.column(t + 1), target.mask(t + 1)));
  }
  tf.total = sum_cols(concat_cols(tf.per_token));
  return tf;
}

}  // namespace mirror
