// bpa: serve the gateway, chat with it, replay transcripts, manage agents
// and alerts.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "bpa/error.hpp"
#include "bpa/gateway.hpp"
#include "bpa/transcript.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kMismatch = 1;
constexpr int kOperational = 2;

struct Endpoint {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string url() const { return "http://" + host + ":" + std::to_string(port); }
};

Endpoint parse_addr(std::string addr) {
  if (addr.rfind("http://", 0) == 0) addr = addr.substr(7);
  while (!addr.empty() && addr.back() == '/') addr.pop_back();
  Endpoint e;
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    if (!addr.empty()) e.host = addr;
    return e;
  }
  if (colon > 0) e.host = addr.substr(0, colon);
  try {
    e.port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw bpa::Error(bpa::ErrorCode::InvalidConfig, "bad address '" + addr + "' (expected host:port)");
  }
  return e;
}

bpa::AssistantOptions assistant_options(const std::string& fixtures, const std::string& config,
                                        const std::string& data_dir) {
  bpa::AssistantOptions o;
  if (!config.empty()) o.config = bpa::load_config(config);
  o.fixtures = fixtures;
  if (!data_dir.empty()) o.data_dir = data_dir;
  if (const char* j = std::getenv("BPA_JOURNAL_DIR"); j && *j) o.journal_dir = fs::path(j);
  return o;
}

// Blocks until SIGINT or SIGTERM. The signals must already be blocked.
void wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
}

void block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

struct Unreachable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gateway client with the protocol header on every request.
class Client {
 public:
  explicit Client(const Endpoint& e) : c_(e.url()) {
    c_.set_default_headers({{bpa::kProtocolHeader, bpa::kProtocolVersion}});
    c_.set_read_timeout(30, 0);
  }

  json call(const std::string& method, const std::string& path, const json& body = nullptr) {
    httplib::Result r = method == "GET"      ? c_.Get(path.c_str())
                        : method == "DELETE" ? c_.Delete(path.c_str())
                        : method == "PUT"    ? c_.Put(path.c_str(), body.dump(), "application/json")
                                             : c_.Post(path.c_str(), body.dump(), "application/json");
    if (!r) throw Unreachable("gateway unreachable: " + httplib::to_string(r.error()));
    json j = r->body.empty() ? json::object() : json::parse(r->body, nullptr, false);
    if (r->status >= 400) {
      const auto msg = j.is_object() ? j.value("message", r->body) : r->body;
      throw bpa::Error(bpa::ErrorCode::ProtocolError, std::to_string(r->status) + " " + msg);
    }
    return j;
  }

  std::string raw(const std::string& path) {
    auto r = c_.Get(path.c_str());
    if (!r || r->status != 200) throw bpa::Error(bpa::ErrorCode::ProtocolError, "cannot fetch " + path);
    return r->body;
  }

 private:
  httplib::Client c_;
};

int serve(const std::string& addr, const std::string& fixtures, const std::string& config,
          const std::string& data_dir) {
  const auto e = parse_addr(addr);
  block_signals();
  auto options = assistant_options(fixtures, config, data_dir);
  options.console = &std::cout;
  bpa::Assistant bot(options);
  bpa::Gateway gateway(bot);
  gateway.start(e.host, e.port);
  std::cout << bot.display_name() << " listening on " << gateway.address() << std::endl;
  wait_for_signal();
  std::cout << "shutting down" << std::endl;
  return kOk;
}

void print_turn(const json& turn, Client& client, const fs::path& out_dir) {
  for (const auto& r : turn.at("responses")) {
    std::cout << "[" << r.value("agent", "?") << "] " << (r["text"].is_string() ? r["text"].get<std::string>() : "")
              << "\n";
    if (!r.contains("attachment")) continue;
    const auto& a = r["attachment"];
    const auto kind = a.value("kind", "");
    if (kind == "table") {
      const auto& t = a.at("table");
      for (std::size_t i = 0; i < t.at("columns").size(); ++i)
        std::cout << (i ? " | " : "  ") << t["columns"][i].get<std::string>();
      std::cout << "\n";
      for (const auto& row : t.at("rows")) {
        for (std::size_t i = 0; i < row.size(); ++i) std::cout << (i ? " | " : "  ") << row[i].get<std::string>();
        std::cout << "\n";
      }
    } else if (kind == "image") {
      fs::create_directories(out_dir);
      const auto file = out_dir / ("bpa-" + a.at("id").get<std::string>() + ".ppm");
      std::ofstream(file, std::ios::binary) << client.raw(a.at("url"));
      std::cout << "  image written to " << file.string() << "\n";
    } else if (kind == "link") {
      std::cout << "  download: " << a.at("url").get<std::string>() << "\n";
    }
  }
  std::cout.flush();
}

int repl(const std::string& addr, const std::string& user, const std::string& persona, const std::string& out_dir) {
  const auto e = parse_addr(addr);
  Client client(e);
  std::string sid;
  json last;
  auto connect = [&] {
    sid = client.call("POST", "/sessions", {{"user_id", user}, {"persona", persona}}).at("session_id");
  };
  while (true) {
    try {
      connect();
      break;
    } catch (const Unreachable& err) {
      std::cerr << err.what() << "\nPress Enter to retry, Ctrl-D to quit." << std::endl;
      std::string ignored;
      if (!std::getline(std::cin, ignored)) return kOperational;
    }
  }
  std::cout << "Connected to " << e.url() << " as " << user << " (" << persona << "). /quit to leave." << std::endl;

  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (line.empty()) continue;
    if (line == "/quit" || line == "/exit") break;
    try {
      if (line.rfind("/feedback", 0) == 0) {
        const auto arg = line.substr(9).find('+') != std::string::npos ? 1 : 0;
        if (last.is_null() || last.at("responses").empty()) {
          std::cout << "no response to rate yet\n";
          continue;
        }
        auto ack = client.call("POST", "/feedback",
                               {{"token", last["responses"][0].at("feedback_token")}, {"reward", arg}});
        std::cout << "feedback " << (arg ? "+" : "-") << " " << ack.value("status", "acknowledged") << "\n";
        continue;
      }
      last = client.call("POST", "/sessions/" + sid + "/turns", {{"text", line}});
      print_turn(last, client, out_dir);
    } catch (const bpa::Error& err) {
      std::cout << "error: " << err.what() << "\n";
    } catch (const Unreachable& err) {
      std::cerr << err.what() << "\nConnection lost. Press Enter to reconnect." << std::endl;
      std::string ignored;
      if (!std::getline(std::cin, ignored)) return kOperational;
      try {
        connect();
        last = nullptr;
        std::cout << "reconnected with a new session" << std::endl;
      } catch (const std::exception& again) {
        std::cerr << again.what() << std::endl;
      }
    }
  }
  return kOk;
}

int replay(const std::string& transcript, const std::string& fixtures, const std::string& config,
           const std::string& data_dir) {
  const auto t = bpa::load_transcript(transcript);
  auto options = assistant_options(fixtures, config, data_dir);
  options.journal_dir.reset();
  const auto report = bpa::replay_fresh(t, options);
  std::cout << report.render();
  return report.passed() ? kOk : kMismatch;
}

int host_agent(const std::string& addr, const std::string& name, const std::string& assistant,
               const std::string& fixtures, const std::string& data_dir) {
  const auto e = parse_addr(addr);
  block_signals();
  auto options = assistant_options(fixtures, "", data_dir);
  options.config.assistant = assistant;
  options.run_daemon = false;
  bpa::Assistant host(options);
  std::shared_ptr<bpa::Agent> agent;
  for (auto& a : host.orchestrator().agents()) {
    if (a->manifest().name == name) agent = a;
  }
  if (!agent) throw bpa::Error(bpa::ErrorCode::InvalidConfig, "no built-in agent '" + name + "' in " + assistant);
  bpa::AgentServer server(agent);
  server.start(e.host, e.port);
  std::cout << name << " serving the agent protocol on " << server.address() << std::endl;
  wait_for_signal();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conversational business-process assistant"};
  app.require_subcommand(1);

  std::string addr = "127.0.0.1:8080";
  std::string fixtures = "fixtures";
  std::string config;
  std::string data_dir;
  std::string transcript;
  std::string user = "user";
  std::string persona = "Manager";
  std::string out_dir = ".";

  auto* serve_cmd = app.add_subcommand("serve", "Load fixtures and run the HTTP gateway");
  serve_cmd->add_option("--addr", addr, "Bind address host:port")->capture_default_str();
  serve_cmd->add_option("--fixtures", fixtures, "Fixture directory")->capture_default_str();
  serve_cmd->add_option("--config", config, "Orchestrator config file");
  serve_cmd->add_option("--data-dir", data_dir, "Exports, alert files and dead letters");

  auto* repl_cmd = app.add_subcommand("repl", "Chat with a running gateway");
  repl_cmd->add_option("--addr", addr, "Gateway address")->capture_default_str();
  repl_cmd->add_option("--user", user, "User id")->capture_default_str();
  repl_cmd->add_option("--persona", persona, "Employee, Manager, Director or Loan Officer")->capture_default_str();
  repl_cmd->add_option("--out-dir", out_dir, "Where image attachments are written")->capture_default_str();

  auto* replay_cmd = app.add_subcommand("replay", "Replay a golden transcript against a fresh assistant");
  replay_cmd->add_option("--transcript,transcript", transcript, "Transcript file")->required();
  replay_cmd->add_option("--fixtures", fixtures, "Fixture directory")->capture_default_str();
  replay_cmd->add_option("--config", config, "Orchestrator config file");
  replay_cmd->add_option("--data-dir", data_dir, "Where exported results are written");

  auto* agents_cmd = app.add_subcommand("agents", "List or register agents on a running gateway");
  agents_cmd->add_option("--addr", addr, "Gateway address")->capture_default_str();
  std::string agent_address;
  agents_cmd->add_subcommand("list", "List registered agents");
  auto* reg = agents_cmd->add_subcommand("register", "Register a remote agent");
  reg->add_option("address", agent_address, "Agent base URL")->required();
  agents_cmd->require_subcommand(1);

  auto* alerts_cmd = app.add_subcommand("alerts", "Manage a user's alerts on a running gateway");
  alerts_cmd->add_option("--addr", addr, "Gateway address")->capture_default_str();
  alerts_cmd->add_option("--user", user, "Alert owner")->required();
  std::string trigger_id, channel, target;
  alerts_cmd->add_subcommand("list", "List alerts");
  auto* del = alerts_cmd->add_subcommand("delete", "Delete an alert");
  del->add_option("trigger", trigger_id, "Trigger id, e.g. T1")->required();
  auto* chan = alerts_cmd->add_subcommand("channel", "Set the delivery channel");
  chan->add_option("channel", channel, "console, file or webhook")->required();
  chan->add_option("--target", target, "File path or webhook URL");
  alerts_cmd->require_subcommand(1);

  auto* host_cmd = app.add_subcommand("host-agent", "Serve a built-in agent over the remote-agent protocol");
  std::string agent_name = "chitchat", assistant = "travelbot";
  host_cmd->add_option("--addr", addr, "Bind address host:port")->capture_default_str();
  host_cmd->add_option("--name", agent_name, "Built-in agent name")->capture_default_str();
  host_cmd->add_option("--assistant", assistant, "travelbot or loanbot")->capture_default_str();
  host_cmd->add_option("--fixtures", fixtures, "Fixture directory")->capture_default_str();

  for (auto* parent : {agents_cmd, alerts_cmd}) {
    for (auto* child : parent->get_subcommands({})) child->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kOperational;
  }

  try {
    if (*serve_cmd) return serve(addr, fixtures, config, data_dir);
    if (*repl_cmd) return repl(addr, user, persona, out_dir);
    if (*replay_cmd) return replay(transcript, fixtures, config, data_dir);
    if (*host_cmd) return host_agent(addr, agent_name, assistant, fixtures, data_dir);
    Client client(parse_addr(addr));
    if (*agents_cmd) {
      if (*reg) {
        std::cout << client.call("POST", "/agents", {{"address", agent_address}}).dump(2) << "\n";
      } else {
        for (const auto& a : client.call("GET", "/agents")) {
          std::cout << a.at("name").get<std::string>() << "\t" << a.at("health").get<std::string>() << "\t"
                    << a.at("endpoint").get<std::string>() << "\n";
        }
      }
      return kOk;
    }
    if (*alerts_cmd) {
      if (*del) {
        client.call("DELETE", "/alerts/" + trigger_id + "?user=" + httplib::detail::encode_url(user));
        std::cout << "deleted " << trigger_id << "\n";
      } else if (*chan) {
        auto r = client.call("PUT", "/alerts/channel", {{"user_id", user}, {"channel", channel}, {"target", target}});
        std::cout << "alerts for " << user << " go to " << r.at("channel").get<std::string>() << " "
                  << r.at("target").get<std::string>() << "\n";
      } else {
        auto list = client.call("GET", "/alerts?user=" + httplib::detail::encode_url(user));
        if (list.empty()) std::cout << "no alerts\n";
        for (const auto& t : list) {
          std::cout << t.at("trigger_id").get<std::string>() << "\t" << t.at("query").get<std::string>() << " on "
                    << t.at("table").get<std::string>() << "\t" << t.at("channel").get<std::string>() << "\n";
        }
      }
      return kOk;
    }
  } catch (const bpa::Error& e) {
    std::cerr << "error: " << bpa::to_string(e.code()) << ": " << e.what() << "\n";
    return kOperational;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOperational;
  }
  return kOperational;
}
