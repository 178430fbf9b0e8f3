#pragma once

#include "mirror/model.hpp"

namespace mirror {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

// Diagonal Gaussian with one row per batch element; variance = exp(log_var).
struct GaussianParams {
  Array mean;
  Array log_var;
};

struct GaussianVars {
  Var mean;
  Var log_var;

  GaussianParams values() const { return {mean.value(), log_var.value()}; }
};

struct LatentSample {
  Var z;
  Array eps;
};

// q(z | c, x, y): tanh hidden layer over [c; x; y], then (mean, log_var).
GaussianVars posterior_params(Tape& tape, const Model& model, Var c_vec, Var x_vec, Var y_vec);
// p(z | c): same shape of network conditioned on the context only.
GaussianVars prior_params(Tape& tape, const Model& model, Var c_vec);

// z = mean + exp(0.5 * log_var) * eps with eps ~ N(0, I).
LatentSample reparameterize(Tape& tape, const GaussianVars& params, Rng& rng);
LatentSample reparameterize(Tape& tape, const GaussianVars& params, Array eps);

// Closed-form KL(q || p) per row, [batch x 1].
Var gaussian_kl(const GaussianVars& q, const GaussianVars& p);
// Value-only closed form summed over all rows.
double gaussian_kl(const GaussianParams& q, const GaussianParams& p);

}  // namespace mirror
