#pragma once

#include "mirror/tape.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace mirror {

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::map<std::string, Array> m;
  std::map<std::string, Array> v;
};

// Bias-corrected Adam. Moments are created lazily with the parameter shapes.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state);

double global_norm(const Gradients& grads);
// Rescales all gradients so that their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

enum class Precision { f32_storage, f64 };

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise this many sampled coordinates per
  // parameter array.
  std::size_t coords_per_param = 0;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Scalar function of the parameters, recorded on the given tape.
using ScalarFn = std::function<Var(Tape&, const ParamStore&)>;

// Compares `analytic` against central differences of `fn` at `point`.
GradCheckReport compare_gradients(const ScalarFn& fn, const ParamStore& point,
                                  const Gradients& analytic, const GradCheckOptions& opts = {});

// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
GradCheckReport grad_check(const ScalarFn& fn, const ParamStore& point,
                           const GradCheckOptions& opts = {});

}  // namespace mirror
