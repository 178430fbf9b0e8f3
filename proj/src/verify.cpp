#include "mirror/verify.hpp"

#include "mirror/objective.hpp"
#include "mirror/optim.hpp"
#include "mirror/toy.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace mirror {

double kl_monte_carlo(const GaussianParams& q, const GaussianParams& p, std::size_t samples, Rng& rng) {
  const std::size_t d = q.mean.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> q_sd(d), p_sd(d);
  for (std::size_t i = 0; i < d; ++i) {
    q_sd[i] = std::exp(0.5 * q.log_var[i]);
    p_sd[i] = std::exp(0.5 * p.log_var[i]);
  }
  // log N(z; m, s^2) = -0.5 log(2 pi) - log s - 0.5 ((z - m) / s)^2; the
  // constant cancels in the difference.
  double acc = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    double diff = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double z = q.mean[i] + q_sd[i] * normal(rng);
      const double uq = (z - q.mean[i]) / q_sd[i];
      const double up = (z - p.mean[i]) / p_sd[i];
      diff += (-std::log(q_sd[i]) - 0.5 * uq * uq) - (-std::log(p_sd[i]) - 0.5 * up * up);
    }
    acc += diff;
  }
  return acc / double(samples);
}

namespace {

Array random_array(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array a = Array::zeros(r, c);
  for (auto& v : a.values()) v = u(rng);
  return a;
}

// Reduces any array to a scalar through a fixed random weighting so that
// every output coordinate carries a distinct adjoint.
Var readout(Tape& t, Var v, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(v, t.constant(random_array(v.rows(), v.cols(), rng))));
}

struct PrimitiveCase {
  std::string name;
  ScalarFn fn;
};

}  // namespace

PropertyResult verify_primitive_gradients(std::uint64_t seed) {
  Rng rng(seed);
  ParamStore p;
  p.add("a", random_array(3, 4, rng));
  p.add("b", random_array(3, 4, rng));
  p.add("m", random_array(4, 5, rng));
  p.add("bias", random_array(1, 4, rng));
  p.add("col", random_array(3, 1, rng));
  p.add("table", random_array(6, 4, rng));
  p.add("w1", random_array(4, 8, rng, -0.5, 0.5));
  p.add("w2", random_array(8, 5, rng, -0.5, 0.5));
  p.add("b1", random_array(1, 8, rng, -0.1, 0.1));

  auto P = [](Tape& t, const ParamStore& s, const char* n) { return t.param(s, n); };
  const std::vector<PrimitiveCase> cases = {
      {"matmul", [&](Tape& t, const ParamStore& s) { return readout(t, matmul(P(t, s, "a"), P(t, s, "m")), 1); }},
      {"add", [&](Tape& t, const ParamStore& s) { return readout(t, add(P(t, s, "a"), P(t, s, "b")), 2); }},
      {"add_bias", [&](Tape& t, const ParamStore& s) { return readout(t, add_bias(P(t, s, "a"), P(t, s, "bias")), 3); }},
      {"sub", [&](Tape& t, const ParamStore& s) { return readout(t, sub(P(t, s, "a"), P(t, s, "b")), 4); }},
      {"mul", [&](Tape& t, const ParamStore& s) { return readout(t, mul(P(t, s, "a"), P(t, s, "b")), 5); }},
      {"mul_col", [&](Tape& t, const ParamStore& s) { return readout(t, mul_col(P(t, s, "a"), P(t, s, "col")), 6); }},
      {"scale", [&](Tape& t, const ParamStore& s) { return readout(t, add_scalar(scale(P(t, s, "a"), -1.7), 0.3), 7); }},
      {"tanh", [&](Tape& t, const ParamStore& s) { return readout(t, tanh(P(t, s, "a")), 8); }},
      {"sigmoid", [&](Tape& t, const ParamStore& s) { return readout(t, sigmoid(P(t, s, "a")), 9); }},
      {"exp", [&](Tape& t, const ParamStore& s) { return readout(t, exp(P(t, s, "a")), 10); }},
      {"log", [&](Tape& t, const ParamStore& s) { return readout(t, log(exp(P(t, s, "a"))), 11); }},
      {"clamp", [&](Tape& t, const ParamStore& s) { return readout(t, clamp(P(t, s, "a"), -0.5, 0.5), 12); }},
      {"concat_cols",
       [&](Tape& t, const ParamStore& s) { return readout(t, concat_cols({P(t, s, "a"), P(t, s, "b"), P(t, s, "a")}), 13); }},
      {"slice_cols", [&](Tape& t, const ParamStore& s) { return readout(t, slice_cols(P(t, s, "a"), 1, 2), 14); }},
      {"embedding",
       [&](Tape& t, const ParamStore& s) { return readout(t, embedding(P(t, s, "table"), {0, 3, 3, 5, 1}), 15); }},
      {"sum_cols", [&](Tape& t, const ParamStore& s) { return readout(t, sum_cols(P(t, s, "a")), 16); }},
      {"log_softmax_pick",
       [&](Tape& t, const ParamStore& s) {
         return sum(log_softmax_pick(matmul(P(t, s, "a"), P(t, s, "m")), {4, 0, 2}, {1.0, 0.5, 0.0}));
       }},
      {"two_layer_softmax_net",
       [&](Tape& t, const ParamStore& s) {
         Var h = tanh(add_bias(matmul(P(t, s, "a"), P(t, s, "w1")), P(t, s, "b1")));
         Var logits = matmul(h, P(t, s, "w2"));
         return scale(sum(log_softmax_pick(logits, {1, 3, 4}, {1.0, 1.0, 1.0})), -1.0);
       }},
  };

  PropertyResult r{"primitive gradients", true, 0.0, kGradTolerance, ""};
  for (const auto& c : cases) {
    const auto rep = grad_check(c.fn, p, {1e-5, 0, seed});
    if (rep.max_rel_error > r.measured) {
      r.measured = rep.max_rel_error;
      std::ostringstream os;
      os << "worst: " << c.name << " (" << rep.worst_param << "[" << rep.worst_index << "], analytic "
         << rep.worst_analytic << ", numeric " << rep.worst_numeric << ")";
      r.detail = os.str();
    }
  }
  r.passed = r.measured < kGradTolerance;
  return r;
}

PropertyResult verify_loss_gradients(std::uint64_t seed, std::size_t coords_per_param) {
  const auto triples = toy_triples(32);
  const Vocabulary vocab = build_vocabulary(triples);
  // A fresh initialization has vanishingly small gradients deep in the
  // encoders, below the resolution of central differences on a loss of this
  // size. Checking at a wider random point keeps every gradient measurable.
  ModelConfig cfg = desk_profile(vocab.size());
  cfg.init_range = 0.3;
  cfg.embed_std = 0.5;
  Model model = Model::create(cfg, seed);
  const std::vector<Triple> two(triples.begin(), triples.begin() + 2);
  const Batch batch = encode_batch(two, vocab);
  Rng rng(seed);
  const Array eps = random_array(2, model.config.z_dim, rng);
  ScalarFn fn = [&](Tape& t, const ParamStore& s) {
    Model view{model.config, s};
    return compute_loss(t, view, batch, LossMode::mirror, 0.7, LatentNoise::fixed(eps)).objective;
  };
  const auto rep = grad_check(fn, model.params, {1e-5, coords_per_param, seed});
  std::ostringstream os;
  os << rep.coords_checked << " coordinates; worst " << rep.worst_param << "[" << rep.worst_index
     << "], analytic " << rep.worst_analytic << ", numeric " << rep.worst_numeric;
  return {"mirror loss gradients", rep.max_rel_error < kGradTolerance, rep.max_rel_error, kGradTolerance,
          os.str()};
}

PropertyResult verify_kl_monte_carlo(std::uint64_t seed, std::size_t pairs, std::size_t samples) {
  Rng rng(seed);
  PropertyResult r{"KL Monte Carlo agreement", true, 0.0, kKlMonteCarloTolerance, ""};
  constexpr std::size_t kDim = 4;
  for (std::size_t i = 0; i < pairs; ++i) {
    GaussianParams q{random_array(1, kDim, rng), random_array(1, kDim, rng)};
    GaussianParams p{random_array(1, kDim, rng), random_array(1, kDim, rng)};
    const double closed = gaussian_kl(q, p);
    const double mc = kl_monte_carlo(q, p, samples, rng);
    const double rel = std::abs(closed - mc) / closed;
    if (rel > r.measured) {
      r.measured = rel;
      std::ostringstream os;
      os << "pair " << i << ": closed " << closed << ", monte carlo " << mc;
      r.detail = os.str();
    }
  }
  r.passed = r.measured < kKlMonteCarloTolerance;
  return r;
}

PropertyResult verify_kl_fixtures() {
  auto g = [](double mu, double lv) { return GaussianParams{Array::row({mu}), Array::row({lv})}; };
  const double e = std::numbers::e;
  const double errs[] = {
      std::abs(gaussian_kl(g(0.3, -0.2), g(0.3, -0.2)) - 0.0),
      std::abs(gaussian_kl(g(1.0, 0.0), g(0.0, 0.0)) - 0.5),
      std::abs(gaussian_kl(g(0.0, 1.0), g(0.0, 0.0)) - (e - 2.0) / 2.0),
  };
  double worst = 0.0;
  for (double x : errs) worst = std::max(worst, x);
  return {"KL closed-form fixtures", worst < kKlFixtureTolerance, worst, kKlFixtureTolerance,
          "identical, unit mean shift, variance e"};
}

PropertyResult verify_mirror_identity(std::uint64_t seed, std::size_t settings) {
  const auto triples = toy_triples(8);
  const Vocabulary vocab = build_vocabulary(triples);
  ModelConfig cfg = desk_profile(vocab.size());
  cfg.hidden_dim = 32;
  cfg.embed_dim = 16;
  cfg.z_dim = 8;
  const std::vector<Triple> three(triples.begin(), triples.begin() + 3);
  const Batch batch = encode_batch(three, vocab);
  Rng rng(seed);
  PropertyResult r{"mirror = average of forward and backward bounds", true, 0.0, kIdentityTolerance, ""};
  for (std::size_t i = 0; i < settings; ++i) {
    cfg.init_range = std::uniform_real_distribution<double>(0.05, 0.5)(rng);
    const Model model = Model::create(cfg, rng());
    const Array eps = random_array(batch.size(), cfg.z_dim, rng, -2.0, 2.0);
    const double w = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    auto run = [&](LossMode mode) {
      Tape t(false);
      return compute_loss(t, model, batch, mode, w, LatentNoise::fixed(eps)).breakdown;
    };
    const auto mirror = run(LossMode::mirror);
    const auto fwd = run(LossMode::forward);
    const auto bwd = run(LossMode::backward);
    // Both bounds at full KL weight, then the annealed KL on top.
    const double eq4 = fwd.combined + w * fwd.kl - fwd.kl;
    const double eq5 = bwd.combined + w * bwd.kl - bwd.kl;
    const double expected = 0.5 * eq4 + 0.5 * eq5 + (1.0 - w) * mirror.kl;
    const double err = std::abs(mirror.combined - expected);
    if (err > r.measured) {
      r.measured = err;
      std::ostringstream os;
      os << "setting " << i << ": mirror " << mirror.combined << " vs " << expected;
      r.detail = os.str();
    }
  }
  r.passed = r.measured < kIdentityTolerance;
  return r;
}

std::vector<PropertyResult> run_verification_suite(std::ostream& log, std::uint64_t seed) {
  std::vector<PropertyResult> out;
  auto report = [&](PropertyResult r) {
    log << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.measured << " (threshold "
        << r.threshold << ") " << r.detail << '\n'
        << std::flush;
    out.push_back(std::move(r));
  };
  report(verify_primitive_gradients(seed + 10));
  report(verify_loss_gradients(seed + 11));
  report(verify_kl_fixtures());
  report(verify_kl_monte_carlo(seed + 12));
  report(verify_mirror_identity(seed + 13));
  return out;
}

}  // namespace mirror
