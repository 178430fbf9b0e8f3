#include <doctest.h>

#include "mirror/server.hpp"
#include "scripted_session.hpp"

#include <httplib.h>
#include <json.hpp>

#include <filesystem>
#include <thread>

#include <unistd.h>

using namespace mirror;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunningServer {
  explicit RunningServer(std::shared_ptr<EvalSession> session) {
    server.add_session("s1", std::move(session));
    port = server.bind_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~RunningServer() {
    server.stop();
    thread.join();
  }
  EvalServer server;
  int port = 0;
  std::thread thread;
};

httplib::Result post_judgment(httplib::Client& cli, const std::string& pair, const std::string& who,
                              const std::string& choice) {
  return cli.Post("/api/session/s1/judgment",
                  json{{"pair_id", pair}, {"annotator", who}, {"choice", choice}}.dump(), "application/json");
}

}  // namespace

TEST_SUITE("server") {
  TEST_CASE("next-pair, judgment and results over HTTP") {
    const auto dir = fs::temp_directory_path() / ("mirror-server-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    std::shared_ptr<EvalSession> session = EvalSession::create(dir, scripted::plan(2));
    RunningServer rs(session);
    httplib::Client cli("127.0.0.1", rs.port);

    auto r = cli.Get("/api/session/s1/next-pair?annotator=ann1");
    REQUIRE(r);
    CHECK(r->status == 200);
    const auto pair = json::parse(r->body);
    CHECK(pair["pair_id"] == "p0");
    CHECK(pair["progress"]["done"] == 0);
    CHECK(pair["progress"]["total"] == 2);
    CHECK_FALSE(pair.contains("focal_side"));
    CHECK(r->body.find("side") == std::string::npos);

    CHECK(post_judgment(cli, "p0", "ann1", "a")->status == 201);
    CHECK(post_judgment(cli, "p0", "ann1", "a")->status == 409);
    CHECK(post_judgment(cli, "p0", "ann2", "left")->status == 422);
    CHECK(post_judgment(cli, "zz", "ann2", "a")->status == 404);
    CHECK(cli.Post("/api/session/s1/judgment", "{not json", "application/json")->status == 400);
    CHECK(cli.Get("/api/session/nope/results")->status == 404);
    CHECK(cli.Get("/api/session/s1/next-pair")->status == 400);

    r = cli.Get("/api/session/s1/next-pair?annotator=ann1");
    CHECK(json::parse(r->body)["pair_id"] == "p1");

    auto res = json::parse(cli.Get("/api/session/s1/results")->body);
    CHECK(res["completed_pairs"] == 0);
    CHECK(res["majority"].is_null());

    CHECK(post_judgment(cli, "p0", "ann2", "a")->status == 201);
    CHECK(post_judgment(cli, "p0", "ann3", "tie")->status == 201);
    CHECK(post_judgment(cli, "p0", "ann4", "b")->status == 409);
    res = json::parse(cli.Get("/api/session/s1/results")->body);
    CHECK(res["completed_pairs"] == 1);
    CHECK(res["wins"].get<double>() == 1.0);

    CHECK(post_judgment(cli, "p1", "ann1", "b")->status == 201);
    r = cli.Get("/api/session/s1/next-pair?annotator=ann1");
    CHECK(r->status == 204);
    fs::remove_all(dir);
  }
}
