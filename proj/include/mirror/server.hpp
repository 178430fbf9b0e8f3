#pragma once

#include "mirror/evaluation.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace mirror {

// HTTP JSON API for pairwise annotation:
//   GET  /api/session/{id}/next-pair?annotator=NAME  200 pair | 204 none left
//   POST /api/session/{id}/judgment                  201 | 409 | 422 | 404
//   GET  /api/session/{id}/results                   aggregate + counts
// Responses never include which model produced which side.
class EvalServer {
 public:
  explicit EvalServer(std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~EvalServer();
  EvalServer(const EvalServer&) = delete;
  EvalServer& operator=(const EvalServer&) = delete;

  void add_session(const std::string& id, std::shared_ptr<EvalSession> session);

  // Returns the bound port.
  int bind(const std::string& host, int port);
  int bind_any_port(const std::string& host);
  // Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  std::shared_ptr<EvalSession> find(const std::string& id) const;
  void install_routes();

  std::unique_ptr<httplib::Server> server_;
  std::map<std::string, std::shared_ptr<EvalSession>> sessions_;
};

std::string results_json(const EvalSession& session);

}  // namespace mirror
