#include "bpa/gateway.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa {

using nlohmann::json;

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownToken:
    case ErrorCode::UnknownTrigger:
    case ErrorCode::UnknownRow:
      return 404;
    case ErrorCode::DuplicateFeedback:
    case ErrorCode::DuplicateName:
      return 409;
    case ErrorCode::HealthProbeFailed:
      return 502;
    case ErrorCode::EmptyUtterance:
    case ErrorCode::InvalidUtterance:
    case ErrorCode::ValidationError:
    case ErrorCode::Serialization:
    case ErrorCode::ProtocolError:
    case ErrorCode::BindError:
      return 400;
    default:
      return 500;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code), json{{"error", std::string(to_string(code))}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  try {
    return req.body.empty() ? json::object() : json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Serialization, std::string("invalid JSON body: ") + e.what());
  }
}

// Wraps a handler so library errors become JSON error responses.
template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, ErrorCode::Serialization, e.what());
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"error", "Internal"}, {"message", e.what()}}.dump(), "application/json");
    }
  };
}

// /health and attachments are exempt so probes and <img> tags work without
// custom headers.
void require_protocol(httplib::Server& s, std::vector<std::string> exempt_prefixes) {
  s.set_pre_routing_handler([exempt_prefixes](const httplib::Request& req, httplib::Response& res) {
    for (const auto& p : exempt_prefixes) {
      if (req.method == "GET" && req.path.rfind(p, 0) == 0) return httplib::Server::HandlerResponse::Unhandled;
    }
    if (req.get_header_value(kProtocolHeader) != kProtocolVersion) {
      send_error(res, ErrorCode::ProtocolError,
                 std::string("missing or unsupported ") + kProtocolHeader + " (expected " + kProtocolVersion + ")");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });
  s.set_post_routing_handler(
      [](const httplib::Request&, httplib::Response& res) { res.set_header(kProtocolHeader, kProtocolVersion); });
}

httplib::Headers protocol_headers() { return {{kProtocolHeader, kProtocolVersion}}; }

void set_timeouts(httplib::Client& c, std::chrono::milliseconds t) {
  const auto sec = static_cast<time_t>(t.count() / 1000);
  const auto usec = static_cast<time_t>((t.count() % 1000) * 1000);
  c.set_connection_timeout(sec, usec);
  c.set_read_timeout(sec, usec);
  c.set_write_timeout(sec, usec);
}

}  // namespace

// ---------------------------------------------------------------------------
// HttpService

HttpService::HttpService() : server_(std::make_unique<httplib::Server>()) {
  // No SO_REUSEPORT, so a second server on a busy port fails to bind.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) {
    port_ = 0;
    throw Error(ErrorCode::ProtocolError, "cannot bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void HttpService::stop() {
  if (thread_.joinable()) {
    server_->stop();
    thread_.join();
  }
}

std::string HttpService::address() const { return "http://" + host_ + ":" + std::to_string(port_); }

// ---------------------------------------------------------------------------
// Wire protocol

std::string_view to_string(AgentHealth h) noexcept {
  switch (h) {
    case AgentHealth::Healthy: return "Healthy";
    case AgentHealth::Degraded: return "Degraded";
    case AgentHealth::Evicted: return "Evicted";
  }
  return "?";
}

AgentServer::AgentServer(std::shared_ptr<Agent> agent) : agent_(std::move(agent)) {
  auto& s = server();
  require_protocol(s, {"/health"});
  s.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200,
                    json{{"status", "ready"}, {"protocol", kProtocolVersion}, {"manifest", to_json(agent_->manifest())}});
        }));
  for (const auto* path : {"/preview", "/execute"}) {
    const Mode mode = std::string(path) == "/preview" ? Mode::Preview : Mode::Execute;
    s.Post(path, guarded([this, mode](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const auto u = utterance_from_json(body.at("utterance"));
             const auto ctx = context_from_json(body.at("context"));
             send_json(res, 200, to_json(agent_->run(u, ctx, mode)));
           }));
  }
}

RemoteAgent::RemoteAgent(AgentManifest manifest, std::string address, std::chrono::milliseconds timeout)
    : manifest_(std::move(manifest)), address_(std::move(address)), timeout_(timeout) {
  manifest_.endpoint = address_;
}

std::shared_ptr<RemoteAgent> RemoteAgent::connect(const std::string& address, std::chrono::milliseconds timeout,
                                                  std::optional<AgentManifest> manifest) {
  auto fail = [&](const std::string& why) {
    return Error(ErrorCode::HealthProbeFailed, "health probe of " + address + " failed: " + why);
  };
  json health;
  try {
    httplib::Client c(address);
    set_timeouts(c, timeout);
    auto res = c.Get("/health", protocol_headers());
    if (!res) throw fail(httplib::to_string(res.error()));
    if (res->status != 200) throw fail("status " + std::to_string(res->status));
    health = json::parse(res->body);
  } catch (const json::exception& e) {
    throw fail(e.what());
  } catch (const std::invalid_argument& e) {
    throw fail(e.what());
  }
  if (health.value("protocol", "") != kProtocolVersion) throw fail("protocol version mismatch");
  if (health.value("status", "") != "ready") throw fail("agent not ready");
  if (!manifest) {
    try {
      manifest = manifest_from_json(health.at("manifest"));
    } catch (const std::exception& e) {
      throw fail(std::string("bad manifest: ") + e.what());
    }
  }
  return std::shared_ptr<RemoteAgent>(new RemoteAgent(std::move(*manifest), address, timeout));
}

AgentHealth RemoteAgent::health() const {
  const int f = failures_.load();
  if (f >= kEvictAfter) return AgentHealth::Evicted;
  return f > 0 ? AgentHealth::Degraded : AgentHealth::Healthy;
}

AgentResponse RemoteAgent::run(const Utterance& u, const TurnContext& ctx, Mode mode) {
  if (!available()) return make_decline(ctx, mode, manifest_.name + " is evicted");
  const json body{{"utterance", to_json(u)}, {"context", to_json(ctx)}};
  std::string problem;
  try {
    httplib::Client c(address_);
    set_timeouts(c, timeout_);
    auto res = c.Post(mode == Mode::Preview ? "/preview" : "/execute", protocol_headers(), body.dump(),
                      "application/json");
    if (!res) {
      problem = httplib::to_string(res.error());
    } else if (res->status != 200) {
      problem = "status " + std::to_string(res->status);
    } else {
      auto r = response_from_json(json::parse(res->body));
      failures_ = 0;
      return r;
    }
  } catch (const std::exception& e) {
    problem = e.what();
  }
  ++failures_;
  auto d = make_decline(ctx, mode, manifest_.name + " at " + address_ + ": " + problem);
  d.timed_out = true;
  return d;
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(Assistant& assistant) : assistant_(assistant) { routes(); }

std::size_t Gateway::session_count() const {
  std::shared_lock lock(sessions_mu_);
  return sessions_.size();
}

json Gateway::create_session(const std::string& user_id, Persona persona) {
  if (util::trim(user_id).empty()) throw Error(ErrorCode::ValidationError, "user_id is required");
  auto s = std::make_shared<Session>();
  s->session_id = util::random_id();
  s->user_id = user_id;
  s->persona = persona;
  s->context.session_id = s->session_id;
  s->created_at = s->last_active = util::utc_timestamp();
  {
    std::unique_lock lock(sessions_mu_);
    sessions_[s->session_id] = s;
  }
  return json{{"session_id", s->session_id},
              {"user_id", user_id},
              {"persona", std::string(to_string(persona))},
              {"assistant", assistant_.display_name()},
              {"created_at", s->created_at}};
}

std::shared_ptr<Session> Gateway::find_session(const std::string& id) const {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "unknown session " + id);
  return it->second;
}

json Gateway::render_attachment(const Attachment& a) {
  StoredAttachment stored;
  json j{{"kind", std::string(to_string(a.kind))}, {"caption", a.caption}};
  switch (a.kind) {
    case Attachment::Kind::Image:
      stored.mime = a.mime.empty() ? "application/octet-stream" : a.mime;
      stored.bytes = a.data;
      j["mime"] = stored.mime;
      break;
    case Attachment::Kind::Table: {
      stored.mime = "text/csv";
      std::ostringstream csv;
      auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) csv << (i ? "," : "") << cells[i];
        csv << "\n";
      };
      line(a.table.columns);
      for (const auto& r : a.table.rows) line(r);
      stored.bytes = csv.str();
      j["table"] = json{{"columns", a.table.columns}, {"rows", a.table.rows}};
      break;
    }
    case Attachment::Kind::Link:
      stored.mime = "text/csv";
      stored.file = a.data;
      j["target"] = a.data;
      break;
  }
  const auto id = util::random_id(8);
  {
    std::lock_guard lock(attachments_mu_);
    attachments_[id] = std::move(stored);
    attachment_order_.push_back(id);
    while (attachment_order_.size() > kAttachmentCapacity) {
      attachments_.erase(attachment_order_.front());
      attachment_order_.pop_front();
    }
  }
  j["id"] = id;
  j["url"] = "/attachments/" + id;
  return j;
}

std::pair<std::string, std::string> Gateway::attachment(const std::string& id) const {
  StoredAttachment a;
  {
    std::lock_guard lock(attachments_mu_);
    auto it = attachments_.find(id);
    if (it == attachments_.end()) throw Error(ErrorCode::UnknownRow, "unknown attachment " + id);
    a = it->second;
  }
  if (!a.file.empty()) {
    std::ifstream in(a.file, std::ios::binary);
    if (!in) throw Error(ErrorCode::UnknownRow, "attachment file is gone: " + a.file);
    std::ostringstream buf;
    buf << in.rdbuf();
    a.bytes = buf.str();
  }
  return {a.bytes, a.mime};
}

json Gateway::post_turn(const std::string& session_id, const std::string& text) {
  auto s = find_session(session_id);
  if (util::trim(text).empty()) throw Error(ErrorCode::EmptyUtterance, "utterance is empty");

  std::lock_guard lock(s->mu);
  const auto turn_id = s->turn_counter + 1;
  auto result = assistant_.turn(Utterance{text, s->user_id, s->persona, turn_id}, s->context);
  s->turn_counter = turn_id;
  s->context = std::move(result.context);
  s->last_active = util::utc_timestamp();

  json responses = json::array();
  for (const auto& r : result.responses) {
    const auto token = util::random_id();
    {
      std::lock_guard tl(tokens_mu_);
      tokens_[token] = Token{result.trace.decision_id, r.agent, false};
    }
    json j{{"agent", r.agent},
           {"text", r.response.text ? json(*r.response.text) : json(nullptr)},
           {"score", r.final_score},
           {"feedback_token", token}};
    if (r.response.attachment) j["attachment"] = render_attachment(*r.response.attachment);
    responses.push_back(std::move(j));
  }
  json turn{{"session_id", session_id},
            {"turn_id", turn_id},
            {"text", text},
            {"responses", responses},
            {"fallback", result.trace.fallback}};
  s->log.push_back(turn);
  return turn;
}

json Gateway::session_turns(const std::string& session_id) {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mu);
  return json{{"session_id", session_id},
              {"user_id", s->user_id},
              {"persona", std::string(to_string(s->persona))},
              {"turns", s->log}};
}

json Gateway::post_feedback(const std::string& token, int reward) {
  if (reward != 0 && reward != 1) throw Error(ErrorCode::ValidationError, "reward must be 0 or 1");
  Token t;
  {
    std::lock_guard lock(tokens_mu_);
    auto it = tokens_.find(token);
    if (it == tokens_.end()) throw Error(ErrorCode::UnknownToken, "unknown feedback token");
    if (it->second.used) throw Error(ErrorCode::DuplicateFeedback, "feedback already recorded for this response");
    it->second.used = true;
    t = it->second;
  }
  json ack{{"status", "acknowledged"}, {"learned", false}};
  if (!t.decision_id) return ack;
  try {
    ack["value"] = assistant_.orchestrator().learn(FeedbackSignal{*t.decision_id, t.agent, double(reward)});
    ack["learned"] = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnknownTurn) throw;
  }
  return ack;
}

json Gateway::register_remote_agent(const std::string& address, std::optional<AgentManifest> manifest) {
  auto agent = RemoteAgent::connect(address, remote_timeout, std::move(manifest));
  assistant_.orchestrator().register_agent(agent);
  {
    std::lock_guard lock(remote_mu_);
    remotes_.push_back(agent);
  }
  return json{{"name", agent->manifest().name},
              {"address", address},
              {"health", std::string(to_string(agent->health()))},
              {"consecutive_failures", agent->consecutive_failures()}};
}

json Gateway::list_agents() const {
  json out = json::array();
  std::lock_guard lock(remote_mu_);
  for (const auto& a : assistant_.orchestrator().agents()) {
    if (a->manifest().endpoint != "local") continue;
    out.push_back({{"name", a->manifest().name},
                   {"description", a->manifest().description},
                   {"endpoint", "local"},
                   {"health", "Healthy"},
                   {"consecutive_failures", 0}});
  }
  for (const auto& r : remotes_) {
    out.push_back({{"name", r->manifest().name},
                   {"description", r->manifest().description},
                   {"endpoint", r->address()},
                   {"health", std::string(to_string(r->health()))},
                   {"consecutive_failures", r->consecutive_failures()}});
  }
  return out;
}

json Gateway::list_alerts(const std::string& user_id) const {
  json out = json::array();
  for (const auto& t : assistant_.services().alerts->list(user_id)) {
    out.push_back({{"trigger_id", t.trigger_id},
                   {"owner", t.owner},
                   {"table", t.table},
                   {"query", to_canonical_text(t.query)},
                   {"channel", std::string(to_string(t.channel))},
                   {"target", t.target}});
  }
  return out;
}

json Gateway::delete_alert(const std::string& user_id, const std::string& trigger_id) {
  assistant_.services().alerts->remove(trigger_id, user_id);
  return json{{"deleted", trigger_id}};
}

json Gateway::set_alert_channel(const std::string& user_id, const std::string& channel, const std::string& target) {
  if (util::trim(user_id).empty()) throw Error(ErrorCode::ValidationError, "user_id is required");
  assistant_.services().alerts->set_channel(user_id, channel_from_string(channel), target);
  auto [c, t] = assistant_.services().alerts->channel_for(user_id);
  return json{{"user_id", user_id}, {"channel", std::string(to_string(c))}, {"target", t}};
}

void Gateway::routes() {
  auto& s = server();
  require_protocol(s, {"/health", "/attachments/"});

  s.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200,
                    json{{"status", "ready"}, {"protocol", kProtocolVersion}, {"assistant", assistant_.display_name()}});
        }));
  s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = parse_body(req);
           send_json(res, 201,
                     create_session(body.at("user_id").get<std::string>(),
                                    persona_from_string(body.value("persona", std::string("Employee")))));
         }));
  s.Post(R"(/sessions/([0-9a-f]+)/turns)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = parse_body(req);
           send_json(res, 200, post_turn(req.matches[1], body.value("text", std::string())));
         }));
  s.Get(R"(/sessions/([0-9a-f]+)/turns)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, session_turns(req.matches[1]));
        }));
  s.Post("/feedback", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = parse_body(req);
           send_json(res, 200, post_feedback(body.at("token").get<std::string>(), body.at("reward").get<int>()));
         }));
  s.Post("/agents", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = parse_body(req);
           std::optional<AgentManifest> m;
           if (body.contains("manifest")) m = manifest_from_json(body["manifest"]);
           send_json(res, 201, register_remote_agent(body.at("address").get<std::string>(), std::move(m)));
         }));
  s.Get("/agents", guarded([this](const httplib::Request&, httplib::Response& res) { send_json(res, 200, list_agents()); }));
  s.Get("/alerts", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, list_alerts(req.get_param_value("user")));
        }));
  s.Delete(R"(/alerts/(\w+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, delete_alert(req.get_param_value("user"), req.matches[1]));
           }));
  s.Put("/alerts/channel", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto body = parse_body(req);
          send_json(res, 200,
                    set_alert_channel(body.at("user_id").get<std::string>(), body.at("channel").get<std::string>(),
                                      body.value("target", std::string())));
        }));
  s.Get(R"(/attachments/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          auto [bytes, mime] = attachment(req.matches[1]);
          res.set_content(bytes, mime);
        }));
}

}  // namespace bpa
