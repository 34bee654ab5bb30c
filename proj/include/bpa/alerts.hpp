#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "bpa/datastore.hpp"
#include "bpa/query.hpp"

namespace bpa {

enum class Channel { Console, File, Webhook };
std::string_view to_string(Channel c) noexcept;
Channel channel_from_string(std::string_view s);

struct AlertTrigger {
  std::string trigger_id;
  std::string owner;
  StructuredQuery query;
  std::string table;
  std::uint64_t last_hash = 0;
  Channel channel = Channel::Console;
  std::string target;  // file path or URL
  bool active = true;
  std::uint64_t notified_seq = 0;
};

struct Notification {
  enum class Kind { Change, Admin };

  Kind kind = Kind::Change;
  std::string trigger_id;
  std::string owner;
  std::uint64_t fired_at_seq = 0;
  std::string message;
  std::string old_result;
  std::string new_result;
  Channel channel = Channel::Console;
  std::string target;

  std::string dedupe_key() const { return trigger_id + ":" + std::to_string(fired_at_seq); }
};
nlohmann::json to_json(const Notification& n);

/// Triggers and per-user channel preferences, stored as rows of two datastore
/// tables so they persist in the journal and reach the daemon through the
/// change feed.
class AlertRegistry {
 public:
  static constexpr const char* kTriggerTable = "alert_triggers";
  static constexpr const char* kChannelTable = "alert_channels";

  // `file_dir` holds the default per-user file for the File channel.
  AlertRegistry(std::shared_ptr<Datastore> store, std::filesystem::path file_dir);

  /// Binds the query against `table` (BindError, including for an unknown
  /// table) and records the trigger with the owner's channel preference.
  AlertTrigger register_trigger(const std::string& owner, const StructuredQuery& query, const std::string& table);

  std::vector<AlertTrigger> list(const std::string& owner = {}) const;
  std::optional<AlertTrigger> get(const std::string& trigger_id) const;
  // Throws UnknownTrigger when the id does not exist or belongs to someone else.
  void remove(const std::string& trigger_id, const std::string& owner = {});

  // Updates the preference and every trigger the owner already has. An empty
  // target picks the default for the channel.
  void set_channel(const std::string& owner, Channel channel, std::string target = {});
  std::pair<Channel, std::string> channel_for(const std::string& owner) const;

  std::uint64_t state_hash() const;
  const std::shared_ptr<Datastore>& store() const noexcept { return store_; }

  static AlertTrigger from_row(const std::vector<Value>& row);
  static bool is_internal(const std::string& table);

 private:
  std::optional<RowId> row_of(const std::string& trigger_id) const;

  std::shared_ptr<Datastore> store_;
  std::filesystem::path file_dir_;
  mutable std::mutex mu_;
};

struct DeliveryOptions {
  int attempts = 3;
  std::chrono::milliseconds backoff{100};  // doubled after each failed attempt
  std::chrono::milliseconds webhook_timeout{2000};
  std::filesystem::path dead_letter_file = "dead_letter.jsonl";
  std::size_t workers = 2;
};

/// Delivers notifications on a small worker pool. Notifications for one
/// trigger go to the same worker, so each trigger's order is kept.
class Notifier {
 public:
  explicit Notifier(DeliveryOptions options = {}, std::ostream* console = nullptr);
  ~Notifier();
  Notifier(const Notifier&) = delete;
  Notifier& operator=(const Notifier&) = delete;

  void enqueue(Notification n);
  // Blocks until every queued notification has been delivered or parked.
  void drain();

  // Delivers synchronously. Throws DeliveryFailure once attempts run out.
  void deliver(const Notification& n);

  std::uint64_t delivered() const noexcept { return delivered_; }
  std::uint64_t dead_lettered() const noexcept { return dead_lettered_; }

 private:
  struct Worker {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Notification> queue;
    bool busy = false;
    std::thread thread;
  };

  void work(Worker& w);
  void park(const Notification& n, const std::string& error);
  void append_line(const std::filesystem::path& file, const std::string& line);

  DeliveryOptions options_;
  std::ostream* console_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> delivered_{0};
  std::atomic<std::uint64_t> dead_lettered_{0};
  std::mutex file_mu_;
};

/// Watches the change feed and fires a notification whenever a trigger's
/// query result changes. Keeps its own replica of every table, built from
/// event after-images, so each event is evaluated against the state as of
/// that event.
///
/// Triggers are picked up from their own insert events and take the result
/// at that point as the baseline. On restart the feed is replayed from the
/// beginning; notifications at or below a trigger's persisted notified_seq
/// are not sent again.
class AlertDaemon {
 public:
  AlertDaemon(std::shared_ptr<Datastore> store, std::shared_ptr<Notifier> notifier);
  ~AlertDaemon();
  AlertDaemon(const AlertDaemon&) = delete;
  AlertDaemon& operator=(const AlertDaemon&) = delete;

  void start();
  void stop();
  // Processes everything currently in the feed on the calling thread.
  void pump();
  // True once every event up to the store's current last_seq is processed.
  bool wait_idle(std::chrono::milliseconds timeout);

  std::vector<Notification> emitted() const;
  std::uint64_t position() const;

 private:
  struct Watch {
    AlertTrigger trigger;
    std::uint64_t hash = 0;
    std::string summary;
    std::uint64_t already_notified = 0;
  };

  void process(const ChangeEvent& e);
  void on_trigger_event(const ChangeEvent& e);
  void evaluate(const std::string& table, std::uint64_t seq);
  void emit(Watch& w, Notification n);
  Table& replica(const std::string& table);

  std::shared_ptr<Datastore> store_;
  std::shared_ptr<Notifier> notifier_;
  Subscription sub_;
  std::map<std::string, Table> replicas_;
  std::map<std::string, Watch> watches_;
  std::map<RowId, std::string> trigger_rows_;
  std::map<std::string, std::uint64_t> startup_notified_;

  mutable std::mutex mu_;
  std::condition_variable progress_cv_;
  std::vector<Notification> emitted_;
  std::atomic<bool> running_{false};
  std::thread thread_;
};

}  // namespace bpa
