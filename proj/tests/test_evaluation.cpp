#include <doctest.h>

#include "mirror/evaluation.hpp"
#include "scripted_session.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

using namespace mirror;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mirror-test-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

std::vector<Triple> dummy_test_set(std::size_t n) {
  std::vector<Triple> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({{{"c", std::to_string(i)}}, {"q"}, {"r"}});
  return out;
}

std::vector<ModelOutput> outputs(std::size_t n, const std::string& tag) {
  std::vector<ModelOutput> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({i, tag + " " + std::to_string(i), "greedy", tag});
  return out;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("scripted fixture aggregates to the hand-computed fractions") {
    const auto r = aggregate_results(scripted::plan(), scripted::judgments());
    CHECK(r.completed_pairs == 10);
    CHECK(r.judgments == 30);
    CHECK(r.majority.wins == doctest::Approx(scripted::kMajorityWins).epsilon(1e-12));
    CHECK(r.majority.losses == doctest::Approx(scripted::kMajorityLosses).epsilon(1e-12));
    CHECK(r.majority.ties == doctest::Approx(scripted::kMajorityTies).epsilon(1e-12));
    CHECK(r.pooled.wins == doctest::Approx(scripted::kPooledWins).epsilon(1e-12));
    CHECK(r.pooled.losses == doctest::Approx(scripted::kPooledLosses).epsilon(1e-12));
    CHECK(r.pooled.ties == doctest::Approx(scripted::kPooledTies).epsilon(1e-12));
    CHECK(std::abs(r.majority.wins + r.majority.losses + r.majority.ties - 1.0) < 1e-9);
    CHECK(std::abs(r.pooled.wins + r.pooled.losses + r.pooled.ties - 1.0) < 1e-9);
  }

  TEST_CASE("pairs with fewer than three judgments are not counted") {
    auto js = scripted::judgments();
    js.pop_back();
    const auto r = aggregate_results(scripted::plan(), js);
    CHECK(r.completed_pairs == 9);
    CHECK(r.majority.wins == doctest::Approx(3.0 / 9.0));
    CHECK(aggregate_results(scripted::plan(), std::vector<Judgment>(js.begin(), js.begin() + 3)).completed_pairs == 1);
    CHECK_THROWS(aggregate_results(scripted::plan(), std::vector<Judgment>(js.begin(), js.begin() + 2)));
  }

  TEST_CASE("every prefix of the fixture sums to one") {
    for (std::size_t n = 1; n <= 10; ++n) {
      const auto r = aggregate_results(scripted::plan(n), scripted::judgments(n));
      CHECK(std::abs(r.majority.wins + r.majority.losses + r.majority.ties - 1.0) < 1e-9);
      CHECK(std::abs(r.pooled.wins + r.pooled.losses + r.pooled.ties - 1.0) < 1e-9);
    }
  }

  TEST_CASE("choice parsing") {
    CHECK(parse_choice("a") == Choice::a);
    CHECK(parse_choice("b") == Choice::b);
    CHECK(parse_choice("tie") == Choice::tie);
    CHECK_FALSE(parse_choice("c").has_value());
    CHECK_FALSE(parse_choice("").has_value());
  }

  TEST_CASE("plan samples without replacement and hides the focal side in a fair coin") {
    const auto test = dummy_test_set(50);
    const auto f = outputs(50, "focal"), c = outputs(50, "comp");
    const auto plan = plan_session(test, f, c, 20, 3);
    CHECK(plan.pairs.size() == 20);
    std::set<std::size_t> seen;
    for (const auto& p : plan.pairs) {
      CHECK(seen.insert(p.dialogue_index).second);
      const auto& focal_text = p.focal_side == Side::a ? p.response_a : p.response_b;
      CHECK(focal_text == "focal " + std::to_string(p.dialogue_index));
    }
    CHECK_THROWS(plan_session(test, f, c, 51, 3));
    CHECK_THROWS(plan_session(test, f, outputs(10, "comp"), 50, 3));

    std::size_t focal_a = 0, total = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) {
      for (const auto& p : plan_session(test, f, c, 1, s).pairs) {
        focal_a += p.focal_side == Side::a;
        ++total;
      }
    }
    const double frac = double(focal_a) / double(total);
    CHECK(frac >= 0.49);
    CHECK(frac <= 0.51);
  }

  TEST_CASE("plan and judgments survive JSON round trips") {
    const auto plan = scripted::plan();
    const auto back = plan_from_json(plan_to_json(plan));
    REQUIRE(back.pairs.size() == plan.pairs.size());
    for (std::size_t i = 0; i < plan.pairs.size(); ++i) {
      CHECK(back.pairs[i].pair_id == plan.pairs[i].pair_id);
      CHECK(back.pairs[i].focal_side == plan.pairs[i].focal_side);
      CHECK(back.pairs[i].response_b == plan.pairs[i].response_b);
    }
    const auto j = scripted::judgments()[4];
    const auto jb = judgment_from_json(judgment_to_json(j));
    CHECK(jb.pair_id == j.pair_id);
    CHECK(jb.annotator == j.annotator);
    CHECK(jb.choice == j.choice);
    CHECK(jb.timestamp == j.timestamp);
  }

  TEST_CASE("model outputs round trip") {
    const auto outs = outputs(3, "m");
    std::stringstream buf;
    write_model_outputs(buf, outs);
    const auto back = read_model_outputs(buf);
    REQUIRE(back.size() == 3);
    CHECK(back[2].response_text == "m 2");
    CHECK(back[2].decode_strategy == "greedy");
    std::istringstream bad("{\"response_text\": \"x\"}\n");
    CHECK_THROWS_AS(read_model_outputs(bad), CorpusError);
  }

  TEST_CASE("session enforces one judgment per annotator and three per pair") {
    const auto dir = fresh_dir("session");
    auto s = EvalSession::create(dir, scripted::plan(2));
    CHECK(s->record_judgment("p0", "ann1", "a") == JudgmentStatus::accepted);
    CHECK(s->record_judgment("p0", "ann1", "b") == JudgmentStatus::duplicate);
    CHECK(s->record_judgment("p0", "ann2", "maybe") == JudgmentStatus::invalid_choice);
    CHECK(s->record_judgment("p9", "ann2", "a") == JudgmentStatus::unknown_pair);
    CHECK(s->record_judgment("p0", "ann2", "b") == JudgmentStatus::accepted);
    CHECK(s->record_judgment("p0", "ann3", "tie") == JudgmentStatus::accepted);
    CHECK(s->record_judgment("p0", "ann4", "a") == JudgmentStatus::pair_complete);
    CHECK(s->next_pair("ann4")->pair_id == "p1");
    CHECK(s->next_pair("ann1")->pair_id == "p1");
    CHECK(s->progress("ann1") == std::pair<std::size_t, std::size_t>{1, 2});
    CHECK(s->journal_records() == 3);
    fs::remove_all(dir);
  }

  TEST_CASE("reopening replays the journal into identical results") {
    const auto dir = fresh_dir("replay");
    SessionResults before;
    {
      auto s = EvalSession::create(dir, scripted::plan());
      for (const auto& j : scripted::judgments()) REQUIRE(s->record_judgment(j) == JudgmentStatus::accepted);
      before = s->results();
    }
    auto s = EvalSession::open(dir);
    const auto after = s->results();
    CHECK(after.majority.wins == before.majority.wins);
    CHECK(after.majority.losses == before.majority.losses);
    CHECK(after.pooled.ties == before.pooled.ties);
    CHECK(s->journal_records() == 30);
    CHECK_FALSE(s->next_pair("ann1").has_value());
    CHECK_FALSE(s->next_pair("new").has_value());
    fs::remove_all(dir);
  }

  TEST_CASE("creating over an existing session is refused") {
    const auto dir = fresh_dir("exists");
    EvalSession::create(dir, scripted::plan(1));
    CHECK_THROWS(EvalSession::create(dir, scripted::plan(1)));
    fs::remove_all(dir);
  }

  TEST_CASE("distinct-n") {
    std::vector<Tokens> rs = {{"a", "b", "a"}, {"a", "b"}};
    CHECK(distinct_n(rs, 1) == doctest::Approx(2.0 / 5.0));
    CHECK(distinct_n(rs, 2) == doctest::Approx(2.0 / 3.0));
    CHECK(distinct_n(rs, 3) == doctest::Approx(1.0));
    CHECK(distinct_n(rs, 4) == 0.0);
  }
}
