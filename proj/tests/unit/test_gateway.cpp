#include <gtest/gtest.h>

#include <fstream>
#include <httplib.h>

#include "bpa/error.hpp"
#include "bpa/gateway.hpp"
#include "bpa/util.hpp"
#include "test_agents.hpp"

using namespace bpa;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

AssistantOptions options(const std::string& kind) {
  AssistantOptions o;
  o.config.assistant = kind;
  o.fixtures = BPA_FIXTURE_DIR;
  o.data_dir = fs::temp_directory_path() / ("bpa_gateway_" + util::random_id(4));
  o.run_daemon = false;
  return o;
}

struct Live {
  explicit Live(const std::string& kind, std::function<void(AssistantOptions&)> tweak = {})
      : bot([&] {
          auto o = options(kind);
          if (tweak) tweak(o);
          return o;
        }()),
        gateway(bot),
        client("127.0.0.1", gateway.start("127.0.0.1", 0)) {}

  httplib::Result post(const std::string& path, const json& body) {
    return client.Post(path.c_str(), {{kProtocolHeader, kProtocolVersion}}, body.dump(), "application/json");
  }
  httplib::Result get(const std::string& path) { return client.Get(path.c_str(), {{kProtocolHeader, kProtocolVersion}}); }

  std::string session(const std::string& user, const std::string& persona) {
    auto r = post("/sessions", {{"user_id", user}, {"persona", persona}});
    EXPECT_EQ(r->status, 201);
    return json::parse(r->body).at("session_id");
  }

  json turn(const std::string& sid, const std::string& text) {
    auto r = post("/sessions/" + sid + "/turns", {{"text", text}});
    EXPECT_EQ(r->status, 200) << r->body;
    return json::parse(r->body);
  }

  Assistant bot;
  Gateway gateway;
  httplib::Client client;
};

// Counts how many of its runs overlap.
class SlowAgent : public Agent {
 public:
  SlowAgent() {
    manifest_.name = "slow";
    for (auto p : all_personas()) manifest_.allowed_personas.insert(p);
  }
  const AgentManifest& manifest() const override { return manifest_; }
  AgentResponse run(const Utterance&, const TurnContext& ctx, Mode mode) override {
    const int now = ++inflight;
    int seen = max_inflight.load();
    while (now > seen && !max_inflight.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --inflight;
    return make_decline(ctx, mode);
  }
  std::atomic<int> inflight{0}, max_inflight{0};

 private:
  AgentManifest manifest_;
};

}  // namespace

TEST(Gateway, HealthAndProtocolHeader) {
  Live g("travelbot");
  auto health = g.client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body).at("status"), "ready");
  EXPECT_EQ(health->get_header_value(kProtocolHeader), "1");

  auto bare = g.client.Post("/sessions", json{{"user_id", "jdoe"}}.dump(), "application/json");
  EXPECT_EQ(bare->status, 400);
  EXPECT_EQ(json::parse(bare->body).at("error"), "ProtocolError");
  auto wrong = g.client.Get("/agents", {{kProtocolHeader, "2"}});
  EXPECT_EQ(wrong->status, 400);
}

TEST(Gateway, HelloOnFreshManagerSession) {
  Live g("travelbot");
  const auto sid = g.session("jdoe", "Manager");
  auto t = g.turn(sid, "Hello");
  ASSERT_EQ(t.at("responses").size(), 1u);
  EXPECT_EQ(t["responses"][0]["agent"], "chitchat");
  EXPECT_EQ(t["responses"][0]["text"], "Hi there");
  EXPECT_FALSE(t["responses"][0]["feedback_token"].get<std::string>().empty());
  EXPECT_EQ(t["turn_id"], 1);

  auto log = json::parse(g.get("/sessions/" + sid + "/turns")->body);
  ASSERT_EQ(log.at("turns").size(), 1u);
  EXPECT_EQ(log["turns"][0], t);
}

TEST(Gateway, Errors) {
  Live g("travelbot");
  const auto sid = g.session("jdoe", "Manager");
  auto empty = g.post("/sessions/" + sid + "/turns", {{"text", "  "}});
  EXPECT_EQ(empty->status, 400);
  EXPECT_EQ(json::parse(empty->body).at("error"), "EmptyUtterance");
  auto unknown = g.post("/sessions/abc123/turns", {{"text", "Hello"}});
  EXPECT_EQ(unknown->status, 404);
  EXPECT_EQ(json::parse(unknown->body).at("error"), "UnknownSession");
  EXPECT_EQ(g.client.Post("/sessions", {{kProtocolHeader, kProtocolVersion}}, "{not json", "application/json")->status,
            400);
  EXPECT_EQ(g.post("/sessions", {{"user_id", "x"}, {"persona", "Pilot"}})->status, 400);
  EXPECT_THROW(g.gateway.post_turn(sid, ""), Error);
}

TEST(Gateway, SessionsAreIsolated) {
  Live g("loanbot");
  const auto a = g.session("lofficer", "Loan Officer");
  const auto b = g.session("lofficer", "Loan Officer");
  EXPECT_EQ(g.turn(a, "Could you process an application requesting a loan of 3000$?")["responses"][0]["text"],
            "What is the credit score?");
  auto other = g.turn(b, "400");
  EXPECT_NE(other["responses"][0]["agent"], "loan_rules");
  EXPECT_EQ(g.turn(a, "400")["responses"][0]["text"], "What is the annual salary (in USD)");
}

TEST(Gateway, FeedbackTokensAreSingleUse) {
  Live g("travelbot", [](AssistantOptions& o) { o.config.selector.kind = SelectorKind::EpsilonGreedy; });
  const auto sid = g.session("jdoe", "Manager");
  const auto first = g.turn(sid, "Hello")["responses"][0];
  const auto token = first["feedback_token"].get<std::string>();
  // Values start at the selected preview's score.
  const double v0 = first["score"].get<double>();
  auto ack = g.post("/feedback", {{"token", token}, {"reward", 0}});
  ASSERT_EQ(ack->status, 200);
  auto body = json::parse(ack->body);
  EXPECT_TRUE(body.at("learned").get<bool>());
  EXPECT_DOUBLE_EQ(body.at("value").get<double>(), v0 + 0.1 * (0 - v0));
  EXPECT_EQ(g.bot.orchestrator().bandit().learned(), 1u);

  auto dup = g.post("/feedback", {{"token", token}, {"reward", 1}});
  EXPECT_EQ(dup->status, 409);
  EXPECT_EQ(json::parse(dup->body).at("error"), "DuplicateFeedback");
  EXPECT_EQ(g.bot.orchestrator().bandit().learned(), 1u);
  EXPECT_EQ(g.post("/feedback", {{"token", "nope"}, {"reward", 1}})->status, 404);
  EXPECT_EQ(g.post("/feedback", {{"token", token}, {"reward", 5}})->status, 400);
}

TEST(Gateway, FeedbackForNonBanditTurnIsDiscarded) {
  Live g("travelbot");
  const auto sid = g.session("jdoe", "Manager");
  const auto token = g.turn(sid, "Hello")["responses"][0]["feedback_token"].get<std::string>();
  auto body = json::parse(g.post("/feedback", {{"token", token}, {"reward", 0}})->body);
  EXPECT_EQ(body.at("status"), "acknowledged");
  EXPECT_FALSE(body.at("learned").get<bool>());
  EXPECT_EQ(g.bot.orchestrator().bandit().learned(), 0u);
}

TEST(Gateway, RemoteAgentRegistrationAndEviction) {
  Live g("travelbot");
  g.gateway.remote_timeout = std::chrono::milliseconds(500);
  auto echo = std::make_shared<testing_agents::FixedAgent>("echo", 0.05);
  auto server = std::make_unique<AgentServer>(echo);
  server->start("127.0.0.1", 0);

  auto r = g.post("/agents", {{"address", server->address()}});
  ASSERT_EQ(r->status, 201) << r->body;
  EXPECT_EQ(json::parse(r->body).at("name"), "echo");
  const auto fan_out = g.bot.orchestrator().agents().size();
  EXPECT_EQ(fan_out, 8u);
  EXPECT_EQ(g.post("/agents", {{"address", server->address()}})->status, 409);
  EXPECT_EQ(g.post("/agents", {{"address", "http://127.0.0.1:1"}})->status, 502);

  const auto sid = g.session("jdoe", "Manager");
  g.turn(sid, "Hello");
  EXPECT_GE(echo->executions.load(), 0);

  server.reset();
  for (int i = 0; i < RemoteAgent::kEvictAfter; ++i) g.turn(sid, "Hello");
  auto agents = json::parse(g.get("/agents")->body);
  ASSERT_EQ(agents.back().at("name"), "echo");
  EXPECT_EQ(agents.back().at("health"), "Evicted");
  EXPECT_EQ(g.bot.orchestrator().agents().size(), fan_out - 1);
}

TEST(Gateway, RemotePreviewIsScored) {
  Live g("travelbot");
  auto echo = std::make_shared<testing_agents::FixedAgent>("echo", 0.99);
  AgentServer server(echo);
  server.start("127.0.0.1", 0);
  g.gateway.register_remote_agent(server.address());
  auto t = g.turn(g.session("jdoe", "Manager"), "something nobody understands");
  EXPECT_EQ(t["responses"][0]["agent"], "echo");
  EXPECT_EQ(t["responses"][0]["text"], "echo: something nobody understands");
  EXPECT_EQ(echo->executions.load(), 1);
}

TEST(Gateway, OneSessionIsSerializedOthersRunInParallel) {
  auto slow = std::make_shared<SlowAgent>();
  Live g("travelbot");
  g.bot.orchestrator().register_agent(slow);
  const auto a = g.session("jdoe", "Manager");
  const auto b = g.session("jbrown", "Employee");

  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) threads.emplace_back([&] { g.gateway.post_turn(a, "Hello"); });
  for (auto& t : threads) t.join();
  EXPECT_EQ(slow->max_inflight.load(), 1);
  auto log = g.gateway.session_turns(a).at("turns");
  ASSERT_EQ(log.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(log[i].at("turn_id"), i + 1);

  threads.clear();
  for (int i = 0; i < 2; ++i) threads.emplace_back([&, i] { g.gateway.post_turn(i ? a : b, "Hello"); });
  for (auto& t : threads) t.join();
  EXPECT_EQ(slow->max_inflight.load(), 2);
}

TEST(Gateway, AttachmentsAreServedByReference) {
  Live g("loanbot");
  const auto sid = g.session("lofficer", "Loan Officer");
  auto list = g.turn(sid, "List all borrowers with yearly income more than 50000 but credit score less than 150");
  auto link = list["responses"][0]["attachment"];
  EXPECT_EQ(link.at("kind"), "link");
  auto csv = g.client.Get(link.at("url").get<std::string>().c_str());
  ASSERT_EQ(csv->status, 200);
  EXPECT_EQ(std::count(csv->body.begin(), csv->body.end(), '\n'), 83);

  auto plot = g.turn(sid, "Plot the bar chart per yearly income")["responses"][0];
  EXPECT_EQ(plot.at("agent"), "visualization");
  auto img = g.client.Get(plot.at("attachment").at("url").get<std::string>().c_str());
  ASSERT_EQ(img->status, 200);
  EXPECT_EQ(img->get_header_value("Content-Type"), "image/x-portable-pixmap");
  EXPECT_EQ(img->body.substr(0, 2), "P6");

  auto table = g.turn(sid, "Find the top 5 borrowers in terms of total amount of loans")["responses"][0];
  EXPECT_EQ(table.at("attachment").at("table").at("rows").size(), 5u);
  EXPECT_EQ(g.client.Get("/attachments/ffff")->status, 404);
}

TEST(Gateway, AlertManagement) {
  Live g("loanbot");
  const auto sid = g.session("lee", "Loan Officer");
  g.turn(sid, "Alert me when any loan with credit score less than 150 is added");
  auto alerts = json::parse(g.get("/alerts?user=lee")->body);
  ASSERT_EQ(alerts.size(), 1u);
  EXPECT_EQ(alerts[0].at("query"), "COUNT * WHERE credit_score < 150");
  EXPECT_EQ(alerts[0].at("channel"), "console");
  EXPECT_TRUE(json::parse(g.get("/alerts?user=someone")->body).empty());

  auto ch = g.client.Put("/alerts/channel", {{kProtocolHeader, kProtocolVersion}},
                         json{{"user_id", "lee"}, {"channel", "file"}}.dump(), "application/json");
  ASSERT_EQ(ch->status, 200) << ch->body;
  EXPECT_EQ(json::parse(g.get("/alerts?user=lee")->body)[0].at("channel"), "file");

  const auto id = alerts[0].at("trigger_id").get<std::string>();
  EXPECT_EQ(g.client.Delete(("/alerts/" + id + "?user=other").c_str(), {{kProtocolHeader, kProtocolVersion}})->status,
            404);
  EXPECT_EQ(g.client.Delete(("/alerts/" + id + "?user=lee").c_str(), {{kProtocolHeader, kProtocolVersion}})->status,
            200);
  EXPECT_TRUE(json::parse(g.get("/alerts?user=lee")->body).empty());
}

TEST(Gateway, ChannelChangeRoutesNotificationsToFile) {
  auto o = options("loanbot");
  o.run_daemon = true;
  Assistant bot(o);
  Gateway gw(bot);
  const auto sid = gw.create_session("lee", Persona::LoanOfficer).at("session_id").get<std::string>();
  gw.post_turn(sid, "Alert me when any loan with credit score less than 150 is added");
  auto ch = gw.set_alert_channel("lee", "file", "");
  const fs::path file = ch.at("target").get<std::string>();
  ASSERT_TRUE(bot.daemon().wait_idle(std::chrono::seconds(5)));

  const auto ingest = o.data_dir / "one.csv";
  {
    std::ofstream out(ingest);
    out << "borrower,loan_amount,credit_score,yearly_income,term_months\nZ. Test,1000,100,20000,12\n";
  }
  gw.post_turn(sid, "Ingest the document " + ingest.string());
  ASSERT_TRUE(bot.daemon().wait_idle(std::chrono::seconds(5)));
  bot.notifier().drain();
  std::ifstream in(file);
  std::string line;
  ASSERT_TRUE(std::getline(in, line)) << file;
  EXPECT_EQ(json::parse(line).at("trigger_id"), "T1");
  EXPECT_FALSE(std::getline(in, line));
}
