#include "bpa/alerts.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include <httplib.h>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa {

using nlohmann::json;

std::string_view to_string(Channel c) noexcept {
  switch (c) {
    case Channel::Console: return "console";
    case Channel::File: return "file";
    case Channel::Webhook: return "webhook";
  }
  return "?";
}

Channel channel_from_string(std::string_view s) {
  const auto l = util::to_lower(s);
  if (l == "console") return Channel::Console;
  if (l == "file") return Channel::File;
  if (l == "webhook") return Channel::Webhook;
  throw Error(ErrorCode::ValidationError, "unknown channel '" + std::string(s) + "'");
}

json to_json(const Notification& n) {
  return {{"kind", n.kind == Notification::Kind::Change ? "change" : "admin"},
          {"trigger_id", n.trigger_id},
          {"owner", n.owner},
          {"fired_at_seq", n.fired_at_seq},
          {"message", n.message},
          {"old_result", n.old_result},
          {"new_result", n.new_result},
          {"channel", to_string(n.channel)},
          {"dedupe_key", n.dedupe_key()}};
}

namespace {

enum TriggerCol { kId, kOwner, kQuery, kTable, kChannel, kTarget, kActive, kLastHash, kNotified };

Schema trigger_schema() {
  return Schema({{"trigger_id", ColumnType::Text},
                 {"owner", ColumnType::Text},
                 {"query", ColumnType::Text},
                 {"table_name", ColumnType::Text},
                 {"channel", ColumnType::Text},
                 {"target", ColumnType::Text},
                 {"active", ColumnType::Integer},
                 {"last_hash", ColumnType::Text},
                 {"notified_seq", ColumnType::Integer}});
}

Schema channel_schema() {
  return Schema({{"owner", ColumnType::Text}, {"channel", ColumnType::Text}, {"target", ColumnType::Text}});
}

std::string text_of(const Value& v) { return is_null(v) ? std::string() : display(v); }

// Counts read better without the trailing ".0".
std::string describe(const QueryResult& r) {
  if (r.shape == QueryResult::Shape::Scalar && r.scalar && *r.scalar == std::floor(*r.scalar) &&
      std::abs(*r.scalar) < 1e15) {
    return std::to_string(static_cast<std::int64_t>(*r.scalar));
  }
  return summarize(r);
}

}  // namespace

// ---------------------------------------------------------------------------
// Registry

AlertRegistry::AlertRegistry(std::shared_ptr<Datastore> store, std::filesystem::path file_dir)
    : store_(std::move(store)), file_dir_(std::move(file_dir)) {
  if (!store_->has_table(kTriggerTable)) store_->create_table(kTriggerTable, trigger_schema());
  if (!store_->has_table(kChannelTable)) store_->create_table(kChannelTable, channel_schema());
}

bool AlertRegistry::is_internal(const std::string& table) { return table == kTriggerTable || table == kChannelTable; }

AlertTrigger AlertRegistry::from_row(const std::vector<Value>& row) {
  AlertTrigger t;
  t.trigger_id = text_of(row[kId]);
  t.owner = text_of(row[kOwner]);
  t.query = from_persisted_text(text_of(row[kQuery]));
  t.table = text_of(row[kTable]);
  t.channel = channel_from_string(text_of(row[kChannel]));
  t.target = text_of(row[kTarget]);
  t.active = std::get<std::int64_t>(row[kActive]) != 0;
  t.last_hash = std::stoull(text_of(row[kLastHash]), nullptr, 16);
  t.notified_seq = static_cast<std::uint64_t>(std::get<std::int64_t>(row[kNotified]));
  return t;
}

AlertTrigger AlertRegistry::register_trigger(const std::string& owner, const StructuredQuery& query,
                                             const std::string& table) {
  if (is_internal(table) || !store_->has_table(table)) {
    throw Error(ErrorCode::BindError, "no table '" + table + "' to watch");
  }
  bind(query, store_->schema(table));
  const auto result = store_->query(query, table);

  std::lock_guard lock(mu_);
  std::int64_t next = 1;
  const auto snap = store_->snapshot(kTriggerTable);
  for (const auto& [id, row] : snap.rows()) {
    next = std::max<std::int64_t>(next, std::stoll(text_of(row[kId]).substr(1)) + 1);
  }
  AlertTrigger t;
  t.trigger_id = "T" + std::to_string(next);
  t.owner = owner;
  t.query = query;
  t.table = table;
  t.last_hash = result_hash(result);
  std::tie(t.channel, t.target) = channel_for(owner);
  store_->insert(kTriggerTable, {t.trigger_id, t.owner, to_persisted_text(query), t.table, std::string(to_string(t.channel)),
                                 t.target, std::int64_t{1}, util::hex64(t.last_hash), std::int64_t{0}});
  return t;
}

std::vector<AlertTrigger> AlertRegistry::list(const std::string& owner) const {
  std::vector<AlertTrigger> out;
  const auto snap = store_->snapshot(kTriggerTable);
  for (const auto& [id, row] : snap.rows()) {
    auto t = from_row(row);
    if (t.active && (owner.empty() || t.owner == owner)) out.push_back(std::move(t));
  }
  return out;
}

std::optional<RowId> AlertRegistry::row_of(const std::string& trigger_id) const {
  const auto snap = store_->snapshot(kTriggerTable);
  for (const auto& [id, row] : snap.rows()) {
    if (text_of(row[kId]) == trigger_id) return id;
  }
  return std::nullopt;
}

std::optional<AlertTrigger> AlertRegistry::get(const std::string& trigger_id) const {
  auto row = row_of(trigger_id);
  if (!row) return std::nullopt;
  return from_row(store_->snapshot(kTriggerTable).at(*row));
}

void AlertRegistry::remove(const std::string& trigger_id, const std::string& owner) {
  std::lock_guard lock(mu_);
  auto t = get(trigger_id);
  if (!t || !t->active || (!owner.empty() && t->owner != owner)) {
    throw Error(ErrorCode::UnknownTrigger, "no alert " + trigger_id);
  }
  // Rows are kept so a replaying daemon still sees the trigger's notified_seq.
  store_->mutate(kTriggerTable, UpdateOp{*row_of(trigger_id), {{"active", std::int64_t{0}}}});
}

std::pair<Channel, std::string> AlertRegistry::channel_for(const std::string& owner) const {
  const auto snap = store_->snapshot(kChannelTable);
  for (const auto& [id, row] : snap.rows()) {
    if (text_of(row[0]) == owner) return {channel_from_string(text_of(row[1])), text_of(row[2])};
  }
  return {Channel::Console, ""};
}

void AlertRegistry::set_channel(const std::string& owner, Channel channel, std::string target) {
  if (channel == Channel::File && target.empty()) target = (file_dir_ / (owner + ".alerts.jsonl")).string();
  if (channel == Channel::Webhook && !target.starts_with("http://")) {
    throw Error(ErrorCode::ValidationError, "webhook channel needs an http:// URL");
  }
  std::lock_guard lock(mu_);
  std::optional<RowId> pref;
  const auto prefs = store_->snapshot(kChannelTable);
  for (const auto& [id, row] : prefs.rows()) {
    if (text_of(row[0]) == owner) pref = id;
  }
  const std::string name(to_string(channel));
  if (pref) {
    store_->mutate(kChannelTable, UpdateOp{*pref, {{"channel", name}, {"target", target}}});
  } else {
    store_->insert(kChannelTable, {owner, name, target});
  }
  const auto triggers = store_->snapshot(kTriggerTable);
  for (const auto& [id, row] : triggers.rows()) {
    if (text_of(row[kOwner]) == owner && std::get<std::int64_t>(row[kActive]) != 0) {
      store_->mutate(kTriggerTable, UpdateOp{id, {{"channel", name}, {"target", target}}});
    }
  }
}

std::uint64_t AlertRegistry::state_hash() const {
  return store_->table_hash(kTriggerTable) * 31 + store_->table_hash(kChannelTable);
}

// ---------------------------------------------------------------------------
// Delivery

Notifier::Notifier(DeliveryOptions options, std::ostream* console)
    : options_(std::move(options)), console_(console ? console : &std::cout) {
  for (std::size_t i = 0; i < std::max<std::size_t>(1, options_.workers); ++i) {
    workers_.push_back(std::make_unique<Worker>());
    Worker& w = *workers_.back();
    w.thread = std::thread([this, &w] { work(w); });
  }
}

Notifier::~Notifier() {
  stopping_ = true;
  for (auto& w : workers_) {
    {
      std::lock_guard lock(w->mu);
    }
    w->cv.notify_all();
  }
  for (auto& w : workers_) w->thread.join();
}

void Notifier::enqueue(Notification n) {
  Worker& w = *workers_[util::fnv1a64(n.trigger_id) % workers_.size()];
  {
    std::lock_guard lock(w.mu);
    w.queue.push_back(std::move(n));
  }
  w.cv.notify_all();
}

void Notifier::drain() {
  for (auto& w : workers_) {
    std::unique_lock lock(w->mu);
    w->cv.wait(lock, [&] { return w->queue.empty() && !w->busy; });
  }
}

void Notifier::work(Worker& w) {
  for (;;) {
    std::unique_lock lock(w.mu);
    w.cv.wait(lock, [&] { return stopping_ || !w.queue.empty(); });
    if (w.queue.empty()) return;
    Notification n = std::move(w.queue.front());
    w.queue.pop_front();
    w.busy = true;
    lock.unlock();
    try {
      deliver(n);
    } catch (const std::exception& e) {
      park(n, e.what());
    }
    lock.lock();
    w.busy = false;
    w.cv.notify_all();
  }
}

void Notifier::append_line(const std::filesystem::path& file, const std::string& line) {
  std::lock_guard lock(file_mu_);
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::app);
  out << line << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::DeliveryFailure, "cannot append to " + file.string());
}

void Notifier::park(const Notification& n, const std::string& error) {
  json record = to_json(n);
  record["error"] = error;
  record["target"] = n.target;
  append_line(options_.dead_letter_file, record.dump());
  ++dead_lettered_;
}

void Notifier::deliver(const Notification& n) {
  switch (n.channel) {
    case Channel::Console: {
      std::lock_guard lock(file_mu_);
      *console_ << "[alert " << n.owner << "] " << n.message << std::endl;
      break;
    }
    case Channel::File: append_line(n.target, to_json(n).dump()); break;
    case Channel::Webhook: {
      const auto slash = n.target.find('/', std::string_view("http://").size());
      const std::string base = n.target.substr(0, slash);
      const std::string path = slash == std::string::npos ? "/" : n.target.substr(slash);
      const auto timeout = options_.webhook_timeout;
      auto backoff = options_.backoff;
      std::string last_error;
      for (int attempt = 1; attempt <= options_.attempts; ++attempt) {
        httplib::Client client(base);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        auto res = client.Post(path, {{"X-Dedupe-Key", n.dedupe_key()}}, to_json(n).dump(), "application/json");
        if (res && res->status >= 200 && res->status < 300) {
          ++delivered_;
          return;
        }
        last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
        if (attempt < options_.attempts) {
          std::this_thread::sleep_for(backoff);
          backoff *= 2;
        }
      }
      throw Error(ErrorCode::DeliveryFailure, "webhook " + n.target + " failed after " +
                                                  std::to_string(options_.attempts) + " attempts: " + last_error);
    }
  }
  ++delivered_;
}

// ---------------------------------------------------------------------------
// Daemon

AlertDaemon::AlertDaemon(std::shared_ptr<Datastore> store, std::shared_ptr<Notifier> notifier)
    : store_(std::move(store)), notifier_(std::move(notifier)), sub_(store_->subscribe(1)) {
  if (store_->has_table(AlertRegistry::kTriggerTable)) {
    const auto snap = store_->snapshot(AlertRegistry::kTriggerTable);
    for (const auto& [id, row] : snap.rows()) {
      auto t = AlertRegistry::from_row(row);
      startup_notified_[t.trigger_id] = t.notified_seq;
    }
  }
}

AlertDaemon::~AlertDaemon() { stop(); }

void AlertDaemon::start() {
  if (running_.exchange(true)) return;
  thread_ = std::thread([this] {
    while (running_) {
      auto e = sub_.next(std::chrono::milliseconds(50));
      if (!e) continue;
      std::lock_guard lock(mu_);
      process(*e);
      progress_cv_.notify_all();
    }
  });
}

void AlertDaemon::stop() {
  if (!running_.exchange(false)) return;
  thread_.join();
}

void AlertDaemon::pump() {
  std::lock_guard lock(mu_);
  for (const auto& e : sub_.poll()) process(e);
  progress_cv_.notify_all();
}

bool AlertDaemon::wait_idle(std::chrono::milliseconds timeout) {
  const auto until = std::chrono::steady_clock::now() + timeout;
  std::unique_lock lock(mu_);
  // The daemon's own bookkeeping writes move last_seq too, so re-check.
  while (sub_.position() <= store_->last_seq()) {
    if (progress_cv_.wait_until(lock, until) == std::cv_status::timeout) {
      return sub_.position() > store_->last_seq();
    }
  }
  return true;
}

std::vector<Notification> AlertDaemon::emitted() const {
  std::lock_guard lock(mu_);
  return emitted_;
}

std::uint64_t AlertDaemon::position() const {
  std::lock_guard lock(mu_);
  return sub_.position();
}

Table& AlertDaemon::replica(const std::string& table) {
  auto it = replicas_.find(table);
  if (it == replicas_.end()) it = replicas_.emplace(table, Table(table, store_->schema(table))).first;
  return it->second;
}

void AlertDaemon::process(const ChangeEvent& e) {
  Table& t = replica(e.table);
  switch (e.kind) {
    case ChangeKind::Insert: t.insert(e.row_id, *e.row); break;
    case ChangeKind::Update: t.update(e.row_id, *e.row); break;
    case ChangeKind::Delete: t.erase(e.row_id); break;
  }
  if (e.table == AlertRegistry::kTriggerTable) {
    on_trigger_event(e);
  } else if (!AlertRegistry::is_internal(e.table)) {
    evaluate(e.table, e.seq);
  }
}

void AlertDaemon::on_trigger_event(const ChangeEvent& e) {
  if (e.kind == ChangeKind::Delete) {
    if (auto it = trigger_rows_.find(e.row_id); it != trigger_rows_.end()) watches_.erase(it->second);
    return;
  }
  auto trigger = AlertRegistry::from_row(*e.row);
  trigger_rows_[e.row_id] = trigger.trigger_id;
  auto it = watches_.find(trigger.trigger_id);
  if (!trigger.active) {
    if (it != watches_.end()) watches_.erase(it);
    return;
  }
  if (it != watches_.end()) {
    it->second.trigger.channel = trigger.channel;
    it->second.trigger.target = trigger.target;
    return;
  }
  Watch w;
  w.already_notified = startup_notified_.count(trigger.trigger_id) ? startup_notified_[trigger.trigger_id] : 0;
  try {
    auto r = execute_query(trigger.query, replica(trigger.table));
    w.hash = result_hash(r);
    w.summary = describe(r);
  } catch (const Error& err) {
    w.trigger = trigger;
    Notification n{Notification::Kind::Admin, trigger.trigger_id, trigger.owner, e.seq,
                   "Alert " + trigger.trigger_id + " disabled: " + err.what(), "", "", trigger.channel, trigger.target};
    emit(w, std::move(n));
    return;
  }
  w.trigger = std::move(trigger);
  watches_.emplace(w.trigger.trigger_id, std::move(w));
}

void AlertDaemon::evaluate(const std::string& table, std::uint64_t seq) {
  std::vector<std::string> failed;
  for (auto& [id, w] : watches_) {
    if (w.trigger.table != table) continue;
    try {
      auto r = execute_query(w.trigger.query, replica(table));
      const auto h = result_hash(r);
      if (h == w.hash) continue;
      auto now = describe(r);
      Notification n{Notification::Kind::Change,
                     id,
                     w.trigger.owner,
                     seq,
                     "Alert " + id + ": " + to_canonical_text(w.trigger.query) + " on " + table + " changed from " +
                         w.summary + " to " + now + " (seq " + std::to_string(seq) + ")",
                     w.summary,
                     now,
                     w.trigger.channel,
                     w.trigger.target};
      w.hash = h;
      w.summary = std::move(now);
      emit(w, std::move(n));
    } catch (const Error& err) {
      Notification n{Notification::Kind::Admin, id, w.trigger.owner, seq,
                     "Alert " + id + " disabled: " + err.what(), w.summary, "", w.trigger.channel, w.trigger.target};
      emit(w, std::move(n));
      failed.push_back(id);
    }
  }
  for (const auto& id : failed) watches_.erase(id);
}

void AlertDaemon::emit(Watch& w, Notification n) {
  if (n.fired_at_seq <= w.already_notified) return;
  std::map<std::string, Value> changes = {{"notified_seq", static_cast<std::int64_t>(n.fired_at_seq)},
                                          {"last_hash", util::hex64(w.hash)}};
  if (n.kind == Notification::Kind::Admin) changes["active"] = std::int64_t{0};
  for (const auto& [row, id] : trigger_rows_) {
    if (id == n.trigger_id) {
      store_->mutate(AlertRegistry::kTriggerTable, UpdateOp{row, std::move(changes)});
      break;
    }
  }
  w.already_notified = n.fired_at_seq;
  emitted_.push_back(n);
  if (notifier_) notifier_->enqueue(std::move(n));
}

}  // namespace bpa
