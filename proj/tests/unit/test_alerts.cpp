#include <gtest/gtest.h>

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bpa/alerts.hpp"
#include "bpa/error.hpp"
#include "bpa/util.hpp"

using namespace bpa;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("bpa_alerts_" + name + "_" + util::random_id(4));
  fs::create_directories(dir);
  return dir;
}

std::shared_ptr<Datastore> with_readings(std::shared_ptr<Datastore> store) {
  if (!store->has_table("readings")) {
    store->create_table("readings", Schema({{"sensor", ColumnType::Text}, {"value", ColumnType::Integer}}));
  }
  return store;
}

StructuredQuery high_count() {
  StructuredQuery q;
  q.filters.push_back({"value", CmpOp::Gt, std::int64_t{100}});
  return q;
}

void add(Datastore& store, std::int64_t value) { store.insert("readings", {std::string("s1"), value}); }

std::size_t line_count(const fs::path& file) {
  std::ifstream in(file);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

DeliveryOptions quick(const fs::path& dir) {
  DeliveryOptions o;
  o.backoff = std::chrono::milliseconds(5);
  o.webhook_timeout = std::chrono::milliseconds(500);
  o.dead_letter_file = dir / "dead.jsonl";
  return o;
}

}  // namespace

TEST(AlertRegistry, RegisterBindsAgainstTable) {
  auto store = with_readings(Datastore::in_memory());
  AlertRegistry reg(store, scratch("bind"));
  auto a = reg.register_trigger("alice", high_count(), "readings");
  auto b = reg.register_trigger("alice", high_count(), "readings");
  EXPECT_NE(a.trigger_id, b.trigger_id);
  EXPECT_EQ(reg.list("alice").size(), 2u);
  EXPECT_TRUE(reg.list("bob").empty());

  try {
    reg.register_trigger("alice", high_count(), "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BindError);
  }
  StructuredQuery bad = high_count();
  bad.filters[0].column = "missing";
  EXPECT_THROW(reg.register_trigger("alice", bad, "readings"), Error);
  EXPECT_THROW(reg.register_trigger("alice", high_count(), AlertRegistry::kTriggerTable), Error);
}

TEST(AlertRegistry, RemoveChecksOwner) {
  auto store = with_readings(Datastore::in_memory());
  AlertRegistry reg(store, scratch("remove"));
  auto a = reg.register_trigger("alice", high_count(), "readings");
  try {
    reg.remove(a.trigger_id, "bob");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownTrigger);
  }
  reg.remove(a.trigger_id, "alice");
  EXPECT_TRUE(reg.list().empty());
  EXPECT_THROW(reg.remove(a.trigger_id), Error);
}

TEST(AlertRegistry, ChannelPreferenceAppliesToNewAndExisting) {
  auto store = with_readings(Datastore::in_memory());
  auto dir = scratch("channel");
  AlertRegistry reg(store, dir);
  auto a = reg.register_trigger("alice", high_count(), "readings");
  EXPECT_EQ(a.channel, Channel::Console);
  reg.set_channel("alice", Channel::File);
  EXPECT_EQ(reg.get(a.trigger_id)->channel, Channel::File);
  EXPECT_EQ(reg.get(a.trigger_id)->target, (dir / "alice.alerts.jsonl").string());
  auto b = reg.register_trigger("alice", high_count(), "readings");
  EXPECT_EQ(b.channel, Channel::File);
  EXPECT_THROW(reg.set_channel("alice", Channel::Webhook, "ftp://x"), Error);
  EXPECT_EQ(channel_from_string("WebHook"), Channel::Webhook);
}

TEST(AlertDaemon, MatchingInsertFiresOnceWithCounts) {
  auto store = with_readings(Datastore::in_memory());
  auto dir = scratch("fire");
  std::ostringstream console;
  auto notifier = std::make_shared<Notifier>(quick(dir), &console);
  AlertRegistry reg(store, dir);
  add(*store, 150);
  auto t = reg.register_trigger("alice", high_count(), "readings");
  AlertDaemon daemon(store, notifier);
  daemon.pump();
  EXPECT_TRUE(daemon.emitted().empty());

  add(*store, 50);
  daemon.pump();
  EXPECT_TRUE(daemon.emitted().empty());

  add(*store, 300);
  const auto seq = store->last_seq();
  daemon.pump();
  notifier->drain();
  auto out = daemon.emitted();
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].trigger_id, t.trigger_id);
  EXPECT_EQ(out[0].old_result, "1");
  EXPECT_EQ(out[0].new_result, "2");
  EXPECT_EQ(out[0].fired_at_seq, seq);
  EXPECT_EQ(out[0].message, "Alert " + t.trigger_id + ": COUNT * WHERE value > 100 on readings changed from 1 to 2 (seq " +
                                std::to_string(seq) + ")");
  EXPECT_NE(console.str().find(out[0].message), std::string::npos);
  EXPECT_EQ(reg.get(t.trigger_id)->notified_seq, seq);
}

TEST(AlertDaemon, RapidInsertsEachNotifyInOrder) {
  auto store = with_readings(Datastore::in_memory());
  auto dir = scratch("rapid");
  auto notifier = std::make_shared<Notifier>(quick(dir));
  AlertRegistry reg(store, dir);
  reg.set_channel("alice", Channel::File);
  auto t = reg.register_trigger("alice", high_count(), "readings");
  AlertDaemon daemon(store, notifier);
  daemon.start();
  for (int i = 0; i < 100; ++i) add(*store, 200 + i);
  ASSERT_TRUE(daemon.wait_idle(std::chrono::seconds(10)));
  daemon.stop();
  notifier->drain();

  auto out = daemon.emitted();
  ASSERT_EQ(out.size(), 100u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].new_result, std::to_string(i + 1));
    if (i) EXPECT_GT(out[i].fired_at_seq, out[i - 1].fired_at_seq);
  }
  EXPECT_EQ(line_count(dir / "alice.alerts.jsonl"), 100u);
  EXPECT_EQ(notifier->delivered(), 100u);
}

TEST(AlertDaemon, EvaluatesAgainstStateAtEachEvent) {
  auto store = with_readings(Datastore::in_memory());
  auto dir = scratch("replica");
  AlertRegistry reg(store, dir);
  reg.register_trigger("alice", high_count(), "readings");
  add(*store, 150);
  add(*store, 160);
  auto row = store->snapshot("readings").rows().begin()->first;
  store->mutate("readings", DeleteOp{row});
  // Processed after the fact, each event still sees its own state.
  AlertDaemon daemon(store, nullptr);
  daemon.pump();
  auto out = daemon.emitted();
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].new_result, "1");
  EXPECT_EQ(out[1].new_result, "2");
  EXPECT_EQ(out[2].new_result, "1");
}

TEST(AlertDaemon, FailingTriggerIsDisabledWithAdminNotice) {
  auto store = with_readings(Datastore::in_memory());
  auto dir = scratch("admin");
  AlertRegistry reg(store, dir);
  StructuredQuery avg;
  avg.aggregation = AggKind::Avg;
  avg.target = "value";
  add(*store, 10);
  auto t = reg.register_trigger("alice", avg, "readings");
  AlertDaemon daemon(store, nullptr);
  daemon.pump();
  store->mutate("readings", DeleteOp{store->snapshot("readings").rows().begin()->first});
  daemon.pump();
  auto out = daemon.emitted();
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].kind, Notification::Kind::Admin);
  EXPECT_FALSE(reg.get(t.trigger_id)->active);
  add(*store, 20);
  daemon.pump();
  EXPECT_EQ(daemon.emitted().size(), 1u);
}

TEST(AlertDaemon, RemovedTriggerStopsFiring) {
  auto store = with_readings(Datastore::in_memory());
  AlertRegistry reg(store, scratch("removed"));
  auto t = reg.register_trigger("alice", high_count(), "readings");
  AlertDaemon daemon(store, nullptr);
  add(*store, 500);
  daemon.pump();
  reg.remove(t.trigger_id);
  add(*store, 500);
  daemon.pump();
  EXPECT_EQ(daemon.emitted().size(), 1u);
}

TEST(AlertDaemon, RestartDoesNotRepeatNotifications) {
  auto dir = scratch("restart");
  std::vector<Notification> first;
  std::string trigger;
  {
    auto store = with_readings(Datastore::open(dir / "journal"));
    AlertRegistry reg(store, dir);
    trigger = reg.register_trigger("alice", high_count(), "readings").trigger_id;
    AlertDaemon daemon(store, nullptr);
    for (int i = 0; i < 5; ++i) add(*store, 101 + i);
    daemon.pump();
    first = daemon.emitted();
    // Events the daemon never saw before going down.
    add(*store, 999);
    add(*store, 1);
  }
  ASSERT_EQ(first.size(), 5u);
  auto store = with_readings(Datastore::open(dir / "journal"));
  AlertDaemon daemon(store, nullptr);
  daemon.pump();
  auto second = daemon.emitted();
  ASSERT_EQ(second.size(), 1u);
  EXPECT_EQ(second[0].trigger_id, trigger);
  EXPECT_EQ(second[0].old_result, "5");
  EXPECT_EQ(second[0].new_result, "6");
  for (const auto& n : first) EXPECT_NE(n.dedupe_key(), second[0].dedupe_key());

  AlertDaemon again(store, nullptr);
  again.pump();
  EXPECT_TRUE(again.emitted().empty());
}

TEST(Notifier, WebhookReceivesOneBodyPerNotification) {
  httplib::Server server;
  std::mutex mu;
  std::vector<std::string> keys;
  server.Post("/hook", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu);
    keys.push_back(req.get_header_value("X-Dedupe-Key"));
    EXPECT_EQ(nlohmann::json::parse(req.body).at("owner"), "alice");
    res.status = 204;
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread serving([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto store = with_readings(Datastore::in_memory());
  auto dir = scratch("webhook");
  auto notifier = std::make_shared<Notifier>(quick(dir));
  AlertRegistry reg(store, dir);
  reg.set_channel("alice", Channel::Webhook, "http://127.0.0.1:" + std::to_string(port) + "/hook");
  reg.register_trigger("alice", high_count(), "readings");
  AlertDaemon daemon(store, notifier);
  for (int i = 0; i < 5; ++i) add(*store, 1000);
  daemon.pump();
  notifier->drain();
  server.stop();
  serving.join();

  ASSERT_EQ(keys.size(), 5u);
  auto out = daemon.emitted();
  for (std::size_t i = 0; i < keys.size(); ++i) EXPECT_EQ(keys[i], out[i].dedupe_key());
  EXPECT_EQ(notifier->dead_lettered(), 0u);
}

TEST(Notifier, FailingWebhookIsRetriedThenDeadLettered) {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/hook", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread serving([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto dir = scratch("dead");
  Notifier notifier(quick(dir));
  Notification n;
  n.trigger_id = "T1";
  n.owner = "alice";
  n.fired_at_seq = 9;
  n.channel = Channel::Webhook;
  n.target = "http://127.0.0.1:" + std::to_string(port) + "/hook";
  notifier.enqueue(n);
  notifier.drain();
  server.stop();
  serving.join();

  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(notifier.dead_lettered(), 1u);
  EXPECT_EQ(notifier.delivered(), 0u);
  std::ifstream in(dir / "dead.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  auto rec = nlohmann::json::parse(line);
  EXPECT_EQ(rec.at("dedupe_key"), "T1:9");
  EXPECT_NE(rec.at("error").get<std::string>().find("503"), std::string::npos);
}
