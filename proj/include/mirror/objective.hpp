#pragma once

#include "mirror/corpus.hpp"
#include "mirror/model.hpp"
#include "mirror/optim.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

namespace mirror {

enum class LossMode { mirror, forward, backward, cvae };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& s);

// Per-batch averages of the summed-over-tokens log-likelihood terms.
struct LossBreakdown {
  double r_fwd_y = 0.0;  // log p(y | c, z, x), Dec1
  double r_fwd_x = 0.0;  // log p(x | c, z),    Dec2
  double r_bwd_x = 0.0;  // log p(x | c, z, y), Dec3
  double r_bwd_y = 0.0;  // log p(y | c, z),    Dec4
  double kl = 0.0;
  double combined = 0.0;  // objective to maximize
  std::size_t tokens_y = 0;
  std::size_t tokens_x = 0;
  std::size_t batch = 0;
};

// How z is obtained from the posterior.
struct LatentNoise {
  enum class Kind { sample, fixed, posterior_mean };
  Kind kind = Kind::posterior_mean;
  Rng* rng = nullptr;
  Array eps;

  static LatentNoise sample(Rng& rng) { return {Kind::sample, &rng, {}}; }
  static LatentNoise fixed(Array eps) { return {Kind::fixed, nullptr, std::move(eps)}; }
  static LatentNoise posterior_mean() { return {}; }
};

struct LossResult {
  Var objective;  // scalar, equal to breakdown.combined
  LossBreakdown breakdown;
  Array eps;  // the noise used (zeros for posterior_mean)
};

double combine_terms(LossMode mode, const LossBreakdown& terms, double kl_weight);

// Builds the objective for `mode` on the tape:
//   mirror   0.5 (r_fwd_y + r_fwd_x + r_bwd_x + r_bwd_y) - w kl
//   forward  r_fwd_y + r_fwd_x - w kl
//   backward r_bwd_x + r_bwd_y - w kl
//   cvae     r_fwd_y - w kl
// One z per triple drawn from q(z | c, x, y).
LossResult compute_loss(Tape& tape, const Model& model, const Batch& batch, LossMode mode,
                        double kl_weight, LatentNoise noise);

// Linear ramp min(1, step / ramp); ramp 0 means a constant 1.
double kl_anneal_weight(std::size_t step, std::size_t ramp);

struct TrainConfig {
  LossMode mode = LossMode::mirror;
  double lr = 0.001;
  double lr_decay = 0.5;
  std::size_t patience = 1;
  std::size_t kl_ramp = 10000;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::uint64_t seed = 1234;
  ScaleProfile profile = ScaleProfile::desk;
  double clip_norm = 5.0;
  std::size_t max_len = kDefaultMaxLen;
  Precision precision = Precision::f32_storage;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double lr = 0.0;
  double kl_weight = 0.0;
  LossBreakdown train;
  LossBreakdown valid;
  double valid_loss = 0.0;  // negated validation objective
  bool improved = false;
};

struct FitReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_valid_loss = 0.0;
  bool diverged = false;
  std::string divergence;
};

// Called after each epoch with the current parameters; return false to stop.
using EpochCallback = std::function<bool(const EpochRecord&, const Model&)>;

// Validation objective with kl weight 1 and z at the posterior mean,
// averaged over triples.
LossBreakdown evaluate_loss(const Model& model, std::span<const Triple> triples,
                            const Vocabulary& vocab, LossMode mode, std::size_t max_len,
                            std::size_t batch_size = 64);

// Trains `model` in place and leaves the best-validation parameters in it.
FitReport fit(Model& model, std::span<const Triple> train, std::span<const Triple> valid,
              const Vocabulary& vocab, const TrainConfig& config, std::ostream* report = nullptr,
              const EpochCallback& on_epoch = {});

std::string epoch_record_json(const EpochRecord& record);

}  // namespace mirror
