#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpa/assistant.hpp"
#include "bpa/contracts.hpp"
#include "bpa/error.hpp"

namespace httplib {
class Server;
}

namespace bpa {

inline constexpr const char* kProtocolHeader = "X-Protocol-Version";
inline constexpr const char* kProtocolVersion = "1";

// HTTP status for an error code.
int http_status(ErrorCode code) noexcept;

/// Runs an httplib server on a background thread.
class HttpService {
 public:
  HttpService();
  virtual ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // port 0 picks a free port. Throws ProtocolError when the address cannot
  // be bound.
  int start(const std::string& host, int port);
  void stop();
  int port() const noexcept { return port_; }
  std::string address() const;

 protected:
  httplib::Server& server() { return *server_; }

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

// ---------------------------------------------------------------------------
// Remote-agent wire protocol
//
//   GET  /health   -> {"status":"ready","protocol":"1","manifest":{...}}
//   POST /preview  {"utterance":{...},"context":{...}} -> AgentResponse
//   POST /execute  same body

/// Serves one agent over the wire protocol.
class AgentServer : public HttpService {
 public:
  explicit AgentServer(std::shared_ptr<Agent> agent);
  ~AgentServer() override { stop(); }

 private:
  std::shared_ptr<Agent> agent_;
};

enum class AgentHealth { Healthy, Degraded, Evicted };
std::string_view to_string(AgentHealth h) noexcept;

/// Client side of the wire protocol. A failed or late call counts as a
/// decline; three consecutive failures evict the agent.
class RemoteAgent : public Agent {
 public:
  // Probes /health and adopts the manifest it reports unless one is given.
  // Throws HealthProbeFailed.
  static std::shared_ptr<RemoteAgent> connect(const std::string& address, std::chrono::milliseconds timeout,
                                              std::optional<AgentManifest> manifest = std::nullopt);

  const AgentManifest& manifest() const override { return manifest_; }
  AgentResponse run(const Utterance& u, const TurnContext& ctx, Mode mode) override;
  bool available() const override { return health() != AgentHealth::Evicted; }

  AgentHealth health() const;
  int consecutive_failures() const { return failures_.load(); }
  const std::string& address() const noexcept { return address_; }

  static constexpr int kEvictAfter = 3;

 private:
  RemoteAgent(AgentManifest manifest, std::string address, std::chrono::milliseconds timeout);

  AgentManifest manifest_;
  std::string address_;
  std::chrono::milliseconds timeout_;
  std::atomic<int> failures_{0};
};

// ---------------------------------------------------------------------------
// Gateway

struct Session {
  std::string session_id;
  std::string user_id;
  Persona persona = Persona::Employee;
  TurnContext context;
  std::int64_t turn_counter = 0;
  std::string created_at;
  std::string last_active;
  // Rendered turns, oldest first.
  std::vector<nlohmann::json> log;
  std::mutex mu;
};

/// Sessions, feedback and agent registration over one assistant. Every
/// public member is safe to call concurrently; turns on one session are
/// processed one at a time.
class Gateway : public HttpService {
 public:
  explicit Gateway(Assistant& assistant);
  ~Gateway() override { stop(); }

  nlohmann::json create_session(const std::string& user_id, Persona persona);
  // Throws UnknownSession and EmptyUtterance.
  nlohmann::json post_turn(const std::string& session_id, const std::string& text);
  nlohmann::json session_turns(const std::string& session_id);
  // Throws UnknownToken, DuplicateFeedback and ValidationError.
  nlohmann::json post_feedback(const std::string& token, int reward);
  // Throws HealthProbeFailed and DuplicateName.
  nlohmann::json register_remote_agent(const std::string& address, std::optional<AgentManifest> manifest = {});
  nlohmann::json list_agents() const;
  nlohmann::json list_alerts(const std::string& user_id) const;
  nlohmann::json delete_alert(const std::string& user_id, const std::string& trigger_id);
  nlohmann::json set_alert_channel(const std::string& user_id, const std::string& channel, const std::string& target);
  // Bytes and mime of an attachment issued by a turn. Throws UnknownRow.
  std::pair<std::string, std::string> attachment(const std::string& id) const;

  std::size_t session_count() const;
  std::chrono::milliseconds remote_timeout{2000};

  static constexpr std::size_t kAttachmentCapacity = 512;

 private:
  struct Token {
    std::optional<std::uint64_t> decision_id;
    std::string agent;
    bool used = false;
  };
  struct StoredAttachment {
    std::string mime;
    std::string bytes;
    std::string file;  // served from disk when set
  };

  std::shared_ptr<Session> find_session(const std::string& id) const;
  nlohmann::json render_attachment(const Attachment& a);
  void routes();

  Assistant& assistant_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex tokens_mu_;
  std::map<std::string, Token> tokens_;
  mutable std::mutex attachments_mu_;
  std::map<std::string, StoredAttachment> attachments_;
  std::deque<std::string> attachment_order_;
  mutable std::mutex remote_mu_;
  std::vector<std::shared_ptr<RemoteAgent>> remotes_;
};

}  // namespace bpa
