#include <doctest.h>

#include "cli_runner.hpp"
#include "mirror/evaluation.hpp"

#include <json.hpp>

#include <unistd.h>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mirror-cli-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with status 2") {
    CHECK(cli::run("").code == 2);
    CHECK(cli::run("frobnicate").code == 2);
    CHECK(cli::run("train --no-such-flag").code == 2);
    CHECK(cli::run("train --mode sideways").code == 2);
    CHECK(cli::run("--help").code == 0);
  }

  TEST_CASE("runtime errors exit with status 1") {
    const auto dir = scratch("err");
    CHECK(cli::run("eval --checkpoint missing.ckpt", dir).code == 1);
    CHECK(cli::run("preprocess --input nowhere.jsonl", dir).code == 1);
    fs::remove_all(dir);
  }

  TEST_CASE("preprocess, train, eval and generate on the toy corpus") {
    const auto dir = scratch("pipeline");
    auto r = cli::run("preprocess --input toy --out data", dir);
    REQUIRE(r.code == 0);
    const auto stats = nlohmann::json::parse(cli::slurp(dir / "data/stats.json"));
    CHECK(stats["dialogues"]["train"] == 26);
    CHECK(stats["dialogues"]["valid"] == 3);
    CHECK(stats["dialogues"]["test"] == 3);
    CHECK(stats["train_triples"] == 26);

    r = cli::run("train --data data --checkpoint m.ckpt --epochs 1 --batch-size 16", dir);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "m.ckpt"));
    CHECK(fs::exists(dir / "m.ckpt.report.jsonl"));

    r = cli::run("eval --data data --checkpoint m.ckpt", dir);
    REQUIRE(r.code == 0);
    const auto metrics = nlohmann::json::parse(r.out);
    CHECK(metrics["triples"] == 3);
    CHECK(metrics["perplexity"].get<double>() > 1.0);
    CHECK(metrics["decode_strategy"] == "greedy");

    r = cli::run("generate --data data --checkpoint m.ckpt --strategy beam --k 3 --out beam.jsonl", dir);
    REQUIRE(r.code == 0);
    const auto outs = mirror::read_model_outputs((dir / "beam.jsonl").string());
    REQUIRE(outs.size() == 3);
    CHECK(outs[0].decode_strategy == "beam(k=3)");
    CHECK(outs[2].dialogue_index == 2);
    CHECK(outs[0].checkpoint_id.size() == 16);
    fs::remove_all(dir);
  }

  TEST_CASE("options can come from a config file") {
    const auto dir = scratch("config");
    std::ofstream(dir / "run.ini") << "seed = 5\nout = from_config\nsplit = 0.5,0.25,0.25\n";
    auto r = cli::run("--config run.ini preprocess --input toy8", dir);
    REQUIRE(r.code == 0);
    const auto stats = nlohmann::json::parse(cli::slurp(dir / "from_config/stats.json"));
    CHECK(stats["dialogues"]["train"] == 4);
    CHECK(stats["dialogues"]["test"] == 2);
    fs::remove_all(dir);
  }

  TEST_CASE("relative paths resolve under MIRROR_DATA_DIR") {
    const auto dir = scratch("datadir");
    fs::create_directories(dir / "store");
    std::ofstream(dir / "store/corpus.tsv") << "a b\tc d\te f\ng h\ti j\tk l\n";
    fs::create_directories(dir / "work");
    CHECK(cli::run("preprocess --input corpus.tsv --format tsv --split 1,0,0 --out p", dir / "work").code == 1);
    const std::string cmd = "cd '" + (dir / "work").string() + "' && MIRROR_DATA_DIR='" + (dir / "store").string() +
                            "' '" + MIRROR_CLI + "' preprocess --input corpus.tsv --format tsv --split 1,0,0 --out p" +
                            " >/dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    const auto stats = nlohmann::json::parse(cli::slurp(dir / "store/p/stats.json"));
    CHECK(stats["train_triples"] == 2);
    CHECK_FALSE(fs::exists(dir / "work/p"));
    fs::remove_all(dir);
  }
}
