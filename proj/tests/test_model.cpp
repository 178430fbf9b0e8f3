#include <doctest.h>

#include "mirror/decoders.hpp"
#include "mirror/encoders.hpp"
#include "mirror/evaluation.hpp"
#include "mirror/latent.hpp"
#include "mirror/objective.hpp"
#include "mirror/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

using namespace mirror;

namespace {

ModelConfig small_config(std::size_t vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 8;
  c.hidden_dim = 12;
  c.z_dim = 4;
  c.layers = 2;
  return c;
}

GaussianParams gaussian(std::initializer_list<double> mean, std::initializer_list<double> log_var) {
  return {Array::row(mean), Array::row(log_var)};
}

// Diagonal Gaussian KL written out term by term.
double kl_oracle(const std::vector<double>& mq, const std::vector<double>& vq, const std::vector<double>& mp,
                 const std::vector<double>& vp) {
  double s = 0.0;
  for (std::size_t i = 0; i < mq.size(); ++i) {
    s += std::log(std::sqrt(vp[i]) / std::sqrt(vq[i])) + (vq[i] + (mq[i] - mp[i]) * (mq[i] - mp[i])) / (2 * vp[i]) - 0.5;
  }
  return s;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("parameter shapes and initialization") {
    const auto cfg = desk_profile(100);
    CHECK(cfg.embed_dim == 64);
    CHECK(cfg.hidden_dim == 128);
    CHECK(cfg.z_dim == 16);
    const auto dd = paper_profile(100, DatasetKind::dailydialog);
    CHECK(dd.embed_dim == 200);
    CHECK(dd.hidden_dim == 1000);
    CHECK(dd.z_dim == 160);
    CHECK(paper_profile(100, DatasetKind::movietriples).z_dim == 100);

    const auto m = Model::create(small_config(20), 3);
    const auto H = 12, E = 8, Z = 4;
    CHECK(m.params.get("embedding").rows() == 20);
    CHECK(m.params.get("embedding").cols() == E);
    CHECK(m.params.get("enc_utt.l0.w").rows() == E + H);
    CHECK(m.params.get("enc_utt.l0.w").cols() == 4 * H);
    CHECK(m.params.get("enc_utt.l1.w").rows() == 2 * H);
    CHECK(m.params.get("dec1.init.w").rows() == 2 * H + Z);
    CHECK(m.params.get("dec2.init.w").rows() == H + Z);
    CHECK(m.params.get("dec3.l0.w").rows() == E + Z + H);
    CHECK(m.params.get("dec4.out.w").cols() == 20);
    CHECK(m.params.get("posterior.hidden.w").rows() == 3 * H);
    CHECK(m.params.get("prior.out.w").cols() == 2 * Z);
    for (const auto& [name, a] : m.params) {
      if (name == "embedding") continue;
      const bool lstm_bias = name.find(".l") != std::string::npos && name.back() == 'b';
      for (double v : a.values()) {
        if (lstm_bias) {
          CHECK(v == 0.0);
        } else {
          CHECK(std::abs(v) <= 0.08);
        }
      }
    }
    CHECK(m.recognition_parameter_names().size() == 4);
    CHECK_THROWS(Model::create(small_config(5), 1));
  }

  TEST_CASE("creation is deterministic in the seed") {
    const auto a = Model::create(small_config(20), 3), b = Model::create(small_config(20), 3),
               c = Model::create(small_config(20), 4);
    CHECK(std::ranges::equal(a.params.get("dec2.l1.w").values(), b.params.get("dec2.l1.w").values()));
    CHECK_FALSE(std::ranges::equal(a.params.get("dec2.l1.w").values(), c.params.get("dec2.l1.w").values()));
  }

  TEST_CASE("KL matches hand-derived fixtures") {
    CHECK(gaussian_kl(gaussian({0, 0}, {0, 0}), gaussian({0, 0}, {0, 0})) == doctest::Approx(0.0));
    CHECK(std::abs(gaussian_kl(gaussian({1}, {0}), gaussian({0}, {0})) - 0.5) < 1e-12);
    CHECK(std::abs(gaussian_kl(gaussian({0}, {1}), gaussian({0}, {0})) - (std::numbers::e - 2) / 2) < 1e-12);
  }

  TEST_CASE("KL agrees with the term-by-term formula") {
    Rng rng(21);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> mq(3), lq(3), mp(3), lp(3), vq(3), vp(3);
      for (int i = 0; i < 3; ++i) {
        mq[i] = u(rng), lq[i] = u(rng), mp[i] = u(rng), lp[i] = u(rng);
        vq[i] = std::exp(lq[i]), vp[i] = std::exp(lp[i]);
      }
      GaussianParams q{Array({1, mq.size()}, mq), Array({1, lq.size()}, lq)}, p{Array({1, mp.size()}, mp), Array({1, lp.size()}, lp)};
      CHECK(gaussian_kl(q, p) == doctest::Approx(kl_oracle(mq, vq, mp, vp)).epsilon(1e-10));
      Tape t;
      Var kl = gaussian_kl({t.constant(q.mean), t.constant(q.log_var)}, {t.constant(p.mean), t.constant(p.log_var)});
      CHECK(kl.value()[0] == doctest::Approx(kl_oracle(mq, vq, mp, vp)).epsilon(1e-10));
    }
  }

  TEST_CASE("reparameterization uses the supplied noise") {
    Tape t;
    GaussianVars g{t.constant(Array::row({1.0, -2.0})), t.constant(Array::row({0.0, 2.0 * std::log(3.0)}))};
    auto s = reparameterize(t, g, Array::row({0.5, -1.0}));
    CHECK(s.z.value()[0] == doctest::Approx(1.5));
    CHECK(s.z.value()[1] == doctest::Approx(-5.0));
  }

  TEST_CASE("encoder output ignores padding") {
    const auto triples = toy_triples(8);
    const auto v = build_vocabulary(triples);
    const auto m = Model::create(small_config(v.size()), 5);
    std::size_t shortest = 0;
    for (std::size_t i = 1; i < triples.size(); ++i) {
      if (triples[i].query.size() < triples[shortest].query.size()) shortest = i;
    }
    const auto alone = encode_batch(std::span(triples).subspan(shortest, 1), v);
    const auto batch = encode_batch(triples, v);
    REQUIRE(batch.query.max_len > alone.query.max_len);
    Tape t(false);
    const Array a = encode_utterance(t, m, alone.query).value();
    const Array b = encode_utterance(t, m, batch.query).value();
    for (std::size_t j = 0; j < a.cols(); ++j) CHECK(a.at(0, j) == doctest::Approx(b.at(shortest, j)).epsilon(1e-12));
  }

  TEST_CASE("zero output projections give -L ln V for every term and perplexity V") {
    const auto triples = toy_triples(8);
    const auto v = build_vocabulary(triples);
    auto m = Model::create(desk_profile(v.size()), 2);
    m.zero_output_projections();
    const auto batch = encode_batch(triples, v);
    Tape t(false);
    Rng rng(1);
    auto loss = compute_loss(t, m, batch, LossMode::mirror, 1.0, LatentNoise::sample(rng));
    const double ln_v = std::log(double(v.size()));
    double mean_x = 0.0, mean_y = 0.0;
    for (const auto& tr : triples) {
      mean_x += double(tr.query.size() + 1);
      mean_y += double(tr.response.size() + 1);
    }
    mean_x /= double(triples.size());
    mean_y /= double(triples.size());
    const auto& b = loss.breakdown;
    CHECK(b.r_fwd_y == doctest::Approx(-mean_y * ln_v).epsilon(1e-4));
    CHECK(b.r_bwd_y == doctest::Approx(-mean_y * ln_v).epsilon(1e-4));
    CHECK(b.r_fwd_x == doctest::Approx(-mean_x * ln_v).epsilon(1e-4));
    CHECK(b.r_bwd_x == doctest::Approx(-mean_x * ln_v).epsilon(1e-4));
    CHECK(perplexity(triples, m, v, DecoderId::dec1) == doctest::Approx(double(v.size())).epsilon(1e-3));
    CHECK(perplexity(triples, m, v, DecoderId::dec3) == doctest::Approx(double(v.size())).epsilon(1e-3));
    CHECK_THROWS(perplexity(triples, m, v, DecoderId::dec2));
  }

  TEST_CASE("decoders reject malformed conditioning and targets") {
    const auto triples = toy_triples(8);
    const auto v = build_vocabulary(triples);
    const auto m = Model::create(small_config(v.size()), 2);
    const auto batch = encode_batch(std::span(triples).subspan(0, 2), v);
    Tape t(false);
    Var c = t.constant(Array::zeros(2, 12));
    Var z = t.constant(Array::zeros(2, 4));
    CHECK_THROWS(teacher_forced_log_prob(t, m, {DecoderId::dec1, {c, z}}, batch.response_target));
    CHECK_THROWS(teacher_forced_log_prob(t, m, {DecoderId::dec2, {c, c}}, batch.response_target));
    CHECK_THROWS(teacher_forced_log_prob(t, m, {DecoderId::dec2, {c, z}}, batch.response));
    CHECK_NOTHROW(teacher_forced_log_prob(t, m, {DecoderId::dec2, {c, z}}, batch.response_target));
  }

  TEST_CASE("loss modes combine the same terms") {
    LossBreakdown b;
    b.r_fwd_y = -1, b.r_fwd_x = -2, b.r_bwd_x = -3, b.r_bwd_y = -4, b.kl = 0.5;
    CHECK(combine_terms(LossMode::mirror, b, 0.4) == doctest::Approx(-5.2));
    CHECK(combine_terms(LossMode::forward, b, 0.4) == doctest::Approx(-3.2));
    CHECK(combine_terms(LossMode::backward, b, 0.4) == doctest::Approx(-7.2));
    CHECK(combine_terms(LossMode::cvae, b, 1.0) == doctest::Approx(-1.5));
    CHECK(parse_loss_mode("cvae") == LossMode::cvae);
    CHECK_THROWS(parse_loss_mode("sideways"));
  }

  TEST_CASE("mirror objective equals half the forward plus half the backward bound") {
    const auto triples = toy_triples(8);
    const auto v = build_vocabulary(triples);
    const auto m = Model::create(small_config(v.size()), 8);
    const auto batch = encode_batch(std::span(triples).subspan(0, 3), v);
    Rng rng(4);
    std::normal_distribution<double> n01;
    Array eps = Array::zeros(3, 4);
    for (auto& e : eps.values()) e = n01(rng);
    for (double w : {0.0, 0.3, 1.0}) {
      Tape t(false);
      const auto mir = compute_loss(t, m, batch, LossMode::mirror, w, LatentNoise::fixed(eps)).breakdown;
      const auto fwd = compute_loss(t, m, batch, LossMode::forward, w, LatentNoise::fixed(eps)).breakdown;
      const auto bwd = compute_loss(t, m, batch, LossMode::backward, w, LatentNoise::fixed(eps)).breakdown;
      CHECK(mir.combined == doctest::Approx(0.5 * fwd.combined + 0.5 * bwd.combined).epsilon(1e-12));
      CHECK(fwd.kl == mir.kl);
    }
  }

  TEST_CASE("kl weight is validated and annealed linearly") {
    CHECK(kl_anneal_weight(0, 100) == 0.0);
    CHECK(kl_anneal_weight(25, 100) == 0.25);
    CHECK(kl_anneal_weight(500, 100) == 1.0);
    CHECK(kl_anneal_weight(3, 0) == 1.0);
    const auto triples = toy_triples(8);
    const auto v = build_vocabulary(triples);
    const auto m = Model::create(small_config(v.size()), 8);
    const auto batch = encode_batch(triples, v);
    Tape t(false);
    CHECK_THROWS(compute_loss(t, m, batch, LossMode::mirror, 1.5, LatentNoise::posterior_mean()));
  }

  TEST_CASE("a few epochs of training reduce the validation loss") {
    const auto triples = toy_triples(8);
    const auto v = build_vocabulary(triples);
    auto m = Model::create(small_config(v.size()), 8);
    TrainConfig tc;
    tc.max_epochs = 6;
    tc.batch_size = 4;
    tc.lr = 0.01;
    tc.kl_ramp = 10;
    std::ostringstream report;
    const auto r = fit(m, triples, triples, v, tc, &report);
    REQUIRE(r.epochs.size() == 6);
    CHECK_FALSE(r.diverged);
    CHECK(r.epochs.back().valid_loss < r.epochs.front().valid_loss);
    CHECK(r.epochs.back().steps == 12);
    std::size_t lines = 0;
    std::istringstream in(report.str());
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == 6);

    std::size_t calls = 0;
    auto m2 = Model::create(small_config(v.size()), 8);
    fit(m2, triples, triples, v, tc, nullptr, [&](const EpochRecord&, const Model&) { return ++calls < 2; });
    CHECK(calls == 2);
  }

  TEST_CASE("f32 storage keeps parameters representable as float") {
    const auto triples = toy_triples(8);
    const auto v = build_vocabulary(triples);
    auto m = Model::create(small_config(v.size()), 8);
    TrainConfig tc;
    tc.max_epochs = 1;
    fit(m, triples, triples, v, tc);
    for (double x : m.params.get("dec1.out.w").values()) CHECK(double(float(x)) == x);
  }
}
