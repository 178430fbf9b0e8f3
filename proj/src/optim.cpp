#include "mirror/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mirror {

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    const auto& p = params.get(name);
    if (!p.same_shape(g)) {
      throw ShapeError("adam_step: gradient for " + name + " has shape " + g.shape_string() +
                       ", parameter has " + p.shape_string());
    }
    if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient for " + name);
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
  for (const auto& [name, g] : grads) {
    auto& p = params.get(name);
    auto& m = state.m.try_emplace(name, p.shape(), 0.0).first->second;
    auto& v = state.v.try_emplace(name, p.shape(), 0.0).first->second;
    if (!m.same_shape(p) || !v.same_shape(p)) throw ShapeError("adam_step: moment shape for " + name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double global_norm(const Gradients& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g.values()) sq += x * x;
  }
  return std::sqrt(sq);
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads) {
      for (auto& x : g.values()) x *= s;
    }
  }
  return norm;
}

namespace {

double evaluate(const ScalarFn& fn, const ParamStore& point) {
  Tape tape(false);
  Var out = fn(tape, point);
  if (out.value().size() != 1) throw ShapeError("grad_check: function is not scalar");
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite evaluation");
  return v;
}

}  // namespace

GradCheckReport compare_gradients(const ScalarFn& fn, const ParamStore& point,
                                  const Gradients& analytic, const GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  GradCheckReport report;
  ParamStore work = point;
  std::mt19937_64 rng(opts.seed);
  for (auto& [name, values] : work) {
    const auto& a = analytic.at(name);
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.coords_per_param != 0 && coords.size() > opts.coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + opts.step;
      const double up = evaluate(fn, work);
      values[i] = saved - opts.step;
      const double down = evaluate(fn, work);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-12});
      const double rel = std::abs(a[i] - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.worst_analytic = a[i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

GradCheckReport grad_check(const ScalarFn& fn, const ParamStore& point,
                           const GradCheckOptions& opts) {
  Tape tape;
  Var out = fn(tape, point);
  if (out.value().size() != 1) throw ShapeError("grad_check: function is not scalar");
  if (!std::isfinite(out.value()[0])) throw NumericError("grad_check: non-finite evaluation");
  const Gradients analytic = tape.backward(out, point);
  return compare_gradients(fn, point, analytic, opts);
}

}  // namespace mirror
