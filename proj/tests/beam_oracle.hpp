#pragma once

#include "mirror/inference.hpp"

#include <cmath>
#include <functional>
#include <limits>

// Two-step table model over tokens A, B, C, D (ids 5..8), then EOS.
//   BOS -> A 0.6, B 0.4
//   A   -> C 0.5, D 0.5
//   B   -> C 0.9, D 0.1
//   C,D -> EOS 1.0
// Greedy commits to A and ends with probability 0.30; B C scores 0.36.
namespace beam_oracle {

inline constexpr int A = 5, B = 6, C = 7, D = 8;
inline constexpr std::size_t kVocab = 9;

class TableModel : public mirror::StepModel {
 public:
  std::size_t vocab_size() const override { return kVocab; }
  State initial() override { return 0; }
  std::pair<std::vector<double>, State> step(State, int prev) override {
    std::vector<double> p(kVocab, 0.0);
    switch (prev) {
      case mirror::Vocabulary::kBos: p[A] = 0.6, p[B] = 0.4; break;
      case A: p[C] = 0.5, p[D] = 0.5; break;
      case B: p[C] = 0.9, p[D] = 0.1; break;
      default: p[mirror::Vocabulary::kEos] = 1.0; break;
    }
    std::vector<double> logp(kVocab);
    for (std::size_t i = 0; i < kVocab; ++i) logp[i] = p[i] > 0 ? std::log(p[i]) : -1e9;
    return {logp, State(prev)};
  }
};

struct Best {
  std::vector<int> ids;
  double log_prob = -std::numeric_limits<double>::infinity();
};

// Exhaustive search over every finished sequence up to max_len tokens.
inline Best enumerate(mirror::StepModel& model, std::size_t max_len) {
  Best best;
  std::vector<int> prefix;
  std::function<void(mirror::StepModel::State, int, double)> go = [&](mirror::StepModel::State s, int prev,
                                                                      double lp) {
    auto [logp, next] = model.step(s, prev);
    for (int tok = 0; tok < int(logp.size()); ++tok) {
      if (logp[std::size_t(tok)] < -1e8) continue;
      const double total = lp + logp[std::size_t(tok)];
      if (tok == mirror::Vocabulary::kEos) {
        if (total > best.log_prob) best = {prefix, total};
      } else if (prefix.size() < max_len) {
        prefix.push_back(tok);
        go(next, tok, total);
        prefix.pop_back();
      }
    }
  };
  go(model.initial(), mirror::Vocabulary::kBos, 0.0);
  return best;
}

}  // namespace beam_oracle
