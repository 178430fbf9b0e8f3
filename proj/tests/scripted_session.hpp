#pragma once

#include "mirror/evaluation.hpp"

#include <array>
#include <string>
#include <vector>

// Ten pairs with three scripted annotators each. Choices are written as the
// annotators would submit them (a, b or tie); which side is the focal model
// differs per pair.
//
// Read from the focal model's point of view:
//   p0 F F F  win     p5 F F T  win
//   p1 F F C  win     p6 C C C  loss
//   p2 F C T  tie     p7 F T T  tie
//   p3 C C F  loss    p8 C F T  tie
//   p4 T T F  tie     p9 F F F  win
// Majority: 4 wins, 2 losses, 4 ties. Votes: 15 focal, 8 comparator, 7 tie.
namespace scripted {

struct Row {
  mirror::Side focal;
  std::array<const char*, 3> choices;
};

inline const std::array<Row, 10> kRows = {{
    {mirror::Side::a, {"a", "a", "a"}},
    {mirror::Side::b, {"b", "b", "a"}},
    {mirror::Side::b, {"b", "a", "tie"}},
    {mirror::Side::a, {"b", "b", "a"}},
    {mirror::Side::b, {"tie", "tie", "b"}},
    {mirror::Side::a, {"a", "a", "tie"}},
    {mirror::Side::b, {"a", "a", "a"}},
    {mirror::Side::a, {"a", "tie", "tie"}},
    {mirror::Side::b, {"a", "b", "tie"}},
    {mirror::Side::a, {"a", "a", "a"}},
}};

inline const std::array<std::string, 3> kAnnotators = {"ann1", "ann2", "ann3"};

inline constexpr double kMajorityWins = 4.0 / 10.0;
inline constexpr double kMajorityLosses = 2.0 / 10.0;
inline constexpr double kMajorityTies = 4.0 / 10.0;
inline constexpr double kPooledWins = 15.0 / 30.0;
inline constexpr double kPooledLosses = 8.0 / 30.0;
inline constexpr double kPooledTies = 7.0 / 30.0;

inline mirror::SessionPlan plan(std::size_t n = kRows.size()) {
  mirror::SessionPlan p;
  p.focal_model = "focal";
  p.comparator_model = "comparator";
  for (std::size_t i = 0; i < n; ++i) {
    mirror::EvalPair e;
    e.pair_id = "p" + std::to_string(i);
    e.dialogue_index = i;
    e.context = "context " + std::to_string(i);
    const std::string f = "focal reply " + std::to_string(i), c = "other reply " + std::to_string(i);
    e.focal_side = kRows[i].focal;
    e.response_a = e.focal_side == mirror::Side::a ? f : c;
    e.response_b = e.focal_side == mirror::Side::a ? c : f;
    p.pairs.push_back(e);
  }
  return p;
}

inline std::vector<mirror::Judgment> judgments(std::size_t n = kRows.size()) {
  std::vector<mirror::Judgment> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      out.push_back({"p" + std::to_string(i), kAnnotators[a], *mirror::parse_choice(kRows[i].choices[a]),
                     std::int64_t(1700000000 + i * 10 + a)});
    }
  }
  return out;
}

}  // namespace scripted
