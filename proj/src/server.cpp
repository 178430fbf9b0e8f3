#include "mirror/server.hpp"

#include <httplib.h>
#include <json.hpp>

namespace mirror {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json aggregate_json(const AggregateResult& a) {
  return {{"wins", a.wins}, {"losses", a.losses}, {"ties", a.ties}, {"counted_pairs", a.counted_pairs}};
}

}  // namespace

std::string results_json(const EvalSession& session) {
  const auto judgments = session.judgments();
  json body;
  body["total_pairs"] = session.plan().pairs.size();
  body["judgments"] = judgments.size();
  try {
    const auto r = aggregate_results(session.plan(), judgments);
    body["completed_pairs"] = r.completed_pairs;
    body["wins"] = r.majority.wins;
    body["losses"] = r.majority.losses;
    body["ties"] = r.majority.ties;
    body["majority"] = aggregate_json(r.majority);
    body["pooled"] = aggregate_json(r.pooled);
  } catch (const std::runtime_error&) {
    body["completed_pairs"] = 0;
    body["majority"] = nullptr;
    body["pooled"] = nullptr;
  }
  return body.dump();
}

EvalServer::EvalServer(std::optional<std::filesystem::path> static_dir)
    : server_(std::make_unique<httplib::Server>()) {
  if (static_dir) server_->set_mount_point("/", static_dir->string());
  install_routes();
}

EvalServer::~EvalServer() { stop(); }

void EvalServer::add_session(const std::string& id, std::shared_ptr<EvalSession> session) {
  sessions_[id] = std::move(session);
}

std::shared_ptr<EvalSession> EvalServer::find(const std::string& id) const {
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void EvalServer::install_routes() {
  server_->Get(R"(/api/session/([^/]+)/next-pair)", [this](const httplib::Request& req, httplib::Response& res) {
    auto session = find(req.matches[1]);
    if (!session) return send_json(res, 404, {{"error", "unknown_session"}});
    const auto annotator = req.get_param_value("annotator");
    if (annotator.empty()) return send_json(res, 400, {{"error", "missing_annotator"}});
    auto pair = session->next_pair(annotator);
    if (!pair) {
      res.status = 204;
      return;
    }
    const auto [done, total] = session->progress(annotator);
    send_json(res, 200,
              {{"pair_id", pair->pair_id},
               {"context", pair->context},
               {"response_a", pair->response_a},
               {"response_b", pair->response_b},
               {"progress", {{"done", done}, {"total", total}}}});
  });

  server_->Post(R"(/api/session/([^/]+)/judgment)", [this](const httplib::Request& req, httplib::Response& res) {
    auto session = find(req.matches[1]);
    if (!session) return send_json(res, 404, {{"error", "unknown_session"}});
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return send_json(res, 400, {{"error", "bad_json"}});
    }
    if (!body.is_object() || !body.contains("pair_id") || !body.contains("annotator") ||
        !body["pair_id"].is_string() || !body["annotator"].is_string()) {
      return send_json(res, 400, {{"error", "missing_fields"}});
    }
    const std::string choice = body.contains("choice") && body["choice"].is_string() ? body["choice"].get<std::string>() : "";
    JudgmentStatus status;
    try {
      status = session->record_judgment(body["pair_id"], body["annotator"], choice);
    } catch (const std::exception& e) {
      return send_json(res, 500, {{"error", "journal"}, {"detail", e.what()}});
    }
    switch (status) {
      case JudgmentStatus::accepted: return send_json(res, 201, {{"status", "accepted"}});
      case JudgmentStatus::duplicate: return send_json(res, 409, {{"error", "duplicate"}});
      case JudgmentStatus::pair_complete: return send_json(res, 409, {{"error", "pair_complete"}});
      case JudgmentStatus::invalid_choice: return send_json(res, 422, {{"error", "invalid_choice"}});
      case JudgmentStatus::unknown_pair: return send_json(res, 404, {{"error", "unknown_pair"}});
    }
  });

  server_->Get(R"(/api/session/([^/]+)/results)", [this](const httplib::Request& req, httplib::Response& res) {
    auto session = find(req.matches[1]);
    if (!session) return send_json(res, 404, {{"error", "unknown_session"}});
    res.status = 200;
    res.set_content(results_json(*session), "application/json");
  });
}

int EvalServer::bind(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

int EvalServer::bind_any_port(const std::string& host) {
  const int port = server_->bind_to_any_port(host);
  if (port < 0) throw std::runtime_error("cannot bind " + host);
  return port;
}

bool EvalServer::listen_after_bind() { return server_->listen_after_bind(); }

void EvalServer::stop() {
  if (server_) server_->stop();
}

void EvalServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace mirror
