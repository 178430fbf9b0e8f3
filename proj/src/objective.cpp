#include "mirror/objective.hpp"

#include "mirror/decoders.hpp"
#include "mirror/encoders.hpp"
#include "mirror/latent.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mirror {

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::mirror: return "mirror";
    case LossMode::forward: return "forward";
    case LossMode::backward: return "backward";
    case LossMode::cvae: return "cvae";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "mirror") return LossMode::mirror;
  if (s == "forward") return LossMode::forward;
  if (s == "backward") return LossMode::backward;
  if (s == "cvae") return LossMode::cvae;
  throw std::invalid_argument("unknown loss mode: " + s);
}

double combine_terms(LossMode mode, const LossBreakdown& t, double w) {
  switch (mode) {
    case LossMode::mirror: return 0.5 * (t.r_fwd_y + t.r_fwd_x + t.r_bwd_x + t.r_bwd_y) - w * t.kl;
    case LossMode::forward: return t.r_fwd_y + t.r_fwd_x - w * t.kl;
    case LossMode::backward: return t.r_bwd_x + t.r_bwd_y - w * t.kl;
    case LossMode::cvae: return t.r_fwd_y - w * t.kl;
  }
  return 0.0;
}

namespace {

std::size_t predicted_tokens(const SeqBatch& target) {
  std::size_t n = 0;
  for (auto len : target.lengths) n += len - 1;
  return n;
}

std::string dump_terms(const LossBreakdown& t) {
  std::ostringstream os;
  os << "r_fwd_y=" << t.r_fwd_y << " r_fwd_x=" << t.r_fwd_x << " r_bwd_x=" << t.r_bwd_x
     << " r_bwd_y=" << t.r_bwd_y << " kl=" << t.kl;
  return os.str();
}

}  // namespace

LossResult compute_loss(Tape& tape, const Model& model, const Batch& batch, LossMode mode,
                        double kl_weight, LatentNoise noise) {
  if (!(kl_weight >= 0.0 && kl_weight <= 1.0)) {
    throw std::invalid_argument("compute_loss: kl_weight must lie in [0, 1]");
  }
  if (batch.vocab_size != model.config.vocab_size) {
    throw std::invalid_argument("compute_loss: batch vocabulary size " +
                                std::to_string(batch.vocab_size) + " differs from model's " +
                                std::to_string(model.config.vocab_size));
  }
  const double B = double(batch.size());
  Var c_vec = encode_context(tape, model, batch.context);
  Var x_vec = encode_utterance(tape, model, batch.query);
  Var y_vec = encode_utterance(tape, model, batch.response);

  auto q = posterior_params(tape, model, c_vec, x_vec, y_vec);
  auto p = prior_params(tape, model, c_vec);

  LatentSample latent;
  switch (noise.kind) {
    case LatentNoise::Kind::sample: latent = reparameterize(tape, q, *noise.rng); break;
    case LatentNoise::Kind::fixed: latent = reparameterize(tape, q, std::move(noise.eps)); break;
    case LatentNoise::Kind::posterior_mean:
      latent = {q.mean, Array::zeros(batch.size(), model.config.z_dim)};
      break;
  }
  Var z = latent.z;

  auto mean_over_batch = [&](Var per_row) { return scale(sum(per_row), 1.0 / B); };
  Var fwd_y = mean_over_batch(
      teacher_forced_log_prob(tape, model, {DecoderId::dec1, {c_vec, z, x_vec}}, batch.response_target).total);
  Var fwd_x = mean_over_batch(
      teacher_forced_log_prob(tape, model, {DecoderId::dec2, {c_vec, z}}, batch.query_target).total);
  Var bwd_x = mean_over_batch(
      teacher_forced_log_prob(tape, model, {DecoderId::dec3, {c_vec, z, y_vec}}, batch.query_target).total);
  Var bwd_y = mean_over_batch(
      teacher_forced_log_prob(tape, model, {DecoderId::dec4, {c_vec, z}}, batch.response_target).total);
  Var kl = mean_over_batch(gaussian_kl(q, p));

  LossBreakdown t;
  t.r_fwd_y = fwd_y.value()[0];
  t.r_fwd_x = fwd_x.value()[0];
  t.r_bwd_x = bwd_x.value()[0];
  t.r_bwd_y = bwd_y.value()[0];
  t.kl = kl.value()[0];
  t.tokens_y = predicted_tokens(batch.response_target);
  t.tokens_x = predicted_tokens(batch.query_target);
  t.batch = batch.size();

  Var kl_term = scale(kl, -kl_weight);
  Var objective;
  switch (mode) {
    case LossMode::mirror:
      objective = add(scale(add(add(fwd_y, fwd_x), add(bwd_x, bwd_y)), 0.5), kl_term);
      break;
    case LossMode::forward: objective = add(add(fwd_y, fwd_x), kl_term); break;
    case LossMode::backward: objective = add(add(bwd_x, bwd_y), kl_term); break;
    case LossMode::cvae: objective = add(fwd_y, kl_term); break;
  }
  t.combined = objective.value()[0];
  if (!std::isfinite(t.combined)) {
    throw NumericError("compute_loss: non-finite objective (" + dump_terms(t) + ")");
  }
  return {objective, t, std::move(latent.eps)};
}

double kl_anneal_weight(std::size_t step, std::size_t ramp) {
  if (ramp == 0) return 1.0;
  return std::min(1.0, double(step) / double(ramp));
}

namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& t) {
  const double w = double(t.batch);
  acc.r_fwd_y += w * t.r_fwd_y;
  acc.r_fwd_x += w * t.r_fwd_x;
  acc.r_bwd_x += w * t.r_bwd_x;
  acc.r_bwd_y += w * t.r_bwd_y;
  acc.kl += w * t.kl;
  acc.combined += w * t.combined;
  acc.tokens_x += t.tokens_x;
  acc.tokens_y += t.tokens_y;
  acc.batch += t.batch;
}

void finalize(LossBreakdown& acc) {
  if (acc.batch == 0) return;
  const double w = 1.0 / double(acc.batch);
  acc.r_fwd_y *= w;
  acc.r_fwd_x *= w;
  acc.r_bwd_x *= w;
  acc.r_bwd_y *= w;
  acc.kl *= w;
  acc.combined *= w;
}

nlohmann::json breakdown_json(const LossBreakdown& t) {
  return {{"r_fwd_y", t.r_fwd_y}, {"r_fwd_x", t.r_fwd_x}, {"r_bwd_x", t.r_bwd_x},
          {"r_bwd_y", t.r_bwd_y}, {"kl", t.kl},           {"combined", t.combined},
          {"tokens_y", t.tokens_y}, {"tokens_x", t.tokens_x}, {"triples", t.batch}};
}

}  // namespace

LossBreakdown evaluate_loss(const Model& model, std::span<const Triple> triples,
                            const Vocabulary& vocab, LossMode mode, std::size_t max_len,
                            std::size_t batch_size) {
  LossBreakdown acc;
  for (std::size_t start = 0; start < triples.size(); start += batch_size) {
    const auto n = std::min(batch_size, triples.size() - start);
    const Batch batch = encode_batch(triples.subspan(start, n), vocab, max_len);
    Tape tape(false);
    accumulate(acc, compute_loss(tape, model, batch, mode, 1.0, LatentNoise::posterior_mean()).breakdown);
  }
  finalize(acc);
  return acc;
}

std::string epoch_record_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch},
                      {"steps", r.steps},
                      {"lr", r.lr},
                      {"kl_weight", r.kl_weight},
                      {"train", breakdown_json(r.train)},
                      {"valid", breakdown_json(r.valid)},
                      {"valid_loss", r.valid_loss},
                      {"improved", r.improved}};
  return j.dump();
}

FitReport fit(Model& model, std::span<const Triple> train, std::span<const Triple> valid,
              const Vocabulary& vocab, const TrainConfig& config, std::ostream* report,
              const EpochCallback& on_epoch) {
  if (train.empty() || valid.empty()) throw std::invalid_argument("fit: empty train or validation set");
  if (!(config.lr > 0.0)) throw std::invalid_argument("fit: lr must be positive");
  if (config.batch_size == 0) throw std::invalid_argument("fit: batch size must be positive");
  if (vocab.size() != model.config.vocab_size) {
    throw std::invalid_argument("fit: vocabulary size differs from the model's");
  }

  Rng shuffle_rng(config.seed);
  Rng noise_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState adam;
  adam.lr = config.lr;
  if (config.precision == Precision::f32_storage) model.params.quantize_f32();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  FitReport out;
  ParamStore best = model.params;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const auto n = std::min(config.batch_size, order.size() - start);
        std::vector<Triple> chunk;
        chunk.reserve(n);
        for (std::size_t i = start; i < start + n; ++i) chunk.push_back(train[order[i]]);
        const Batch batch = encode_batch(chunk, vocab, config.max_len);
        const double w = kl_anneal_weight(step, config.kl_ramp);
        Tape tape;
        auto loss = compute_loss(tape, model, batch, config.mode, w, LatentNoise::sample(noise_rng));
        Gradients grads = tape.backward(scale(loss.objective, -1.0), model.params);
        if (config.clip_norm > 0.0) clip_global_norm(grads, config.clip_norm);
        adam_step(model.params, grads, adam);
        if (config.precision == Precision::f32_storage) model.params.quantize_f32();
        accumulate(rec.train, loss.breakdown);
        rec.kl_weight = w;
        ++step;
      }
      finalize(rec.train);
      rec.valid = evaluate_loss(model, valid, vocab, config.mode, config.max_len);
    } catch (const NumericError& e) {
      out.diverged = true;
      out.divergence = e.what();
      break;
    }
    rec.steps = step;
    rec.lr = adam.lr;
    rec.valid_loss = -rec.valid.combined;
    if (rec.valid_loss < best_loss) {
      best_loss = rec.valid_loss;
      best = model.params;
      out.best_epoch = epoch;
      rec.improved = true;
      bad_epochs = 0;
    } else if (++bad_epochs >= config.patience) {
      adam.lr *= config.lr_decay;
      bad_epochs = 0;
    }
    out.epochs.push_back(rec);
    if (report) *report << epoch_record_json(rec) << '\n' << std::flush;
    if (on_epoch && !on_epoch(rec, model)) break;
  }
  out.best_valid_loss = best_loss;
  if (out.best_epoch != 0) model.params = best;
  return out;
}

}  // namespace mirror
