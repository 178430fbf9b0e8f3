#pragma once

#include "mirror/latent.hpp"
#include "mirror/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mirror {

struct PropertyResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // the quantity compared against the threshold
  double threshold = 0.0;
  std::string detail;
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kKlMonteCarloTolerance = 0.01;
inline constexpr double kKlFixtureTolerance = 1e-9;
inline constexpr double kIdentityTolerance = 1e-6;

// Monte Carlo estimate of E_q[log q(z) - log p(z)] for diagonal Gaussians
// given as single rows. Independent of the closed form.
double kl_monte_carlo(const GaussianParams& q, const GaussianParams& p, std::size_t samples, Rng& rng);

// Central differences against every tape primitive (matmul, add, add_bias,
// sub, mul, mul_col, scale, tanh, sigmoid, exp, log, clamp, concat, slice,
// embedding, sums, fused softmax cross-entropy) and a two-layer softmax net.
PropertyResult verify_primitive_gradients(std::uint64_t seed = 11);

// Full mirror objective, desk profile, two toy triples, fixed noise.
// Samples `coords_per_param` coordinates of every parameter array.
PropertyResult verify_loss_gradients(std::uint64_t seed = 12, std::size_t coords_per_param = 16);

// Closed form vs 1e6-sample Monte Carlo for `pairs` random Gaussian pairs.
PropertyResult verify_kl_monte_carlo(std::uint64_t seed = 13, std::size_t pairs = 20,
                                     std::size_t samples = 1000000);
// 0, 0.5 and (e - 2) / 2 fixtures.
PropertyResult verify_kl_fixtures();

// mirror = 0.5 * forward bound + 0.5 * backward bound under a shared z.
PropertyResult verify_mirror_identity(std::uint64_t seed = 14, std::size_t settings = 100);

// Runs the above in order, printing one PASS/FAIL line per property.
std::vector<PropertyResult> run_verification_suite(std::ostream& log, std::uint64_t seed = 1);

}  // namespace mirror
