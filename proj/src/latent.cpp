#include "mirror/latent.hpp"

#include <cmath>

namespace mirror {

namespace {

GaussianVars gaussian_head(Tape& tape, const Model& model, const std::string& prefix, Var input) {
  const std::size_t Z = model.config.z_dim;
  Var hidden = tanh(affine(tape, model, prefix + ".hidden", input));
  Var out = affine(tape, model, prefix + ".out", hidden);
  return {slice_cols(out, 0, Z), clamp(slice_cols(out, Z, Z), kLogVarMin, kLogVarMax)};
}

void require_width(Var v, std::size_t width, const char* what) {
  if (v.cols() != width) {
    throw ShapeError(std::string(what) + ": expected width " + std::to_string(width) + ", got " +
                     std::to_string(v.cols()));
  }
}

}  // namespace

GaussianVars posterior_params(Tape& tape, const Model& model, Var c_vec, Var x_vec, Var y_vec) {
  const auto H = model.config.hidden_dim;
  require_width(c_vec, H, "posterior_params(c)");
  require_width(x_vec, H, "posterior_params(x)");
  require_width(y_vec, H, "posterior_params(y)");
  return gaussian_head(tape, model, "posterior", concat_cols({c_vec, x_vec, y_vec}));
}

GaussianVars prior_params(Tape& tape, const Model& model, Var c_vec) {
  require_width(c_vec, model.config.hidden_dim, "prior_params(c)");
  return gaussian_head(tape, model, "prior", c_vec);
}

LatentSample reparameterize(Tape& tape, const GaussianVars& params, Rng& rng) {
  const auto& mv = params.mean.value();
  Array eps = Array::zeros(mv.rows(), mv.cols());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& e : eps.values()) e = normal(rng);
  return reparameterize(tape, params, std::move(eps));
}

LatentSample reparameterize(Tape& tape, const GaussianVars& params, Array eps) {
  const auto& mv = params.mean.value();
  if (eps.rows() != mv.rows() || eps.cols() != mv.cols()) {
    throw ShapeError("reparameterize: noise shape " + eps.shape_string());
  }
  Var sigma = exp(scale(params.log_var, 0.5));
  Var z = add(params.mean, mul(sigma, tape.constant(eps)));
  return {z, std::move(eps)};
}

Var gaussian_kl(const GaussianVars& q, const GaussianVars& p) {
  const auto& qm = q.mean.value();
  const auto& pm = p.mean.value();
  if (qm.rows() != pm.rows() || qm.cols() != pm.cols()) {
    throw ShapeError("gaussian_kl: dimension mismatch");
  }
  // 0.5 * [lv_p - lv_q + (exp(lv_q) + (mu_q - mu_p)^2) * exp(-lv_p) - 1]
  Var diff = sub(q.mean, p.mean);
  Var spread = add(exp(q.log_var), mul(diff, diff));
  Var ratio = mul(spread, exp(scale(p.log_var, -1.0)));
  Var terms = add_scalar(add(sub(p.log_var, q.log_var), ratio), -1.0);
  return scale(sum_cols(terms), 0.5);
}

double gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
  if (!q.mean.same_shape(p.mean) || !q.log_var.same_shape(p.log_var) ||
      !q.mean.same_shape(q.log_var)) {
    throw ShapeError("gaussian_kl: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    const double d = q.mean[i] - p.mean[i];
    kl += 0.5 * (p.log_var[i] - q.log_var[i] +
                 (std::exp(q.log_var[i]) + d * d) * std::exp(-p.log_var[i]) - 1.0);
  }
  return kl;
}

}  // namespace mirror
