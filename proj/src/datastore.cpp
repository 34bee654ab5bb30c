#include "bpa/datastore.hpp"

#include <unistd.h>

#include <array>
#include <boost/crc.hpp>
#include <boost/tokenizer.hpp>
#include <cstdio>
#include <fstream>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa {

std::string_view to_string(ChangeKind k) noexcept {
  switch (k) {
    case ChangeKind::Insert: return "insert";
    case ChangeKind::Update: return "update";
    case ChangeKind::Delete: return "delete";
  }
  return "insert";
}

namespace {

std::uint32_t crc32(std::string_view data) {
  boost::crc_32_type crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

nlohmann::json values_to_json(const std::vector<Value>& values) {
  auto out = nlohmann::json::array();
  for (const auto& v : values) out.push_back(value_to_json(v));
  return out;
}

std::vector<Value> values_from_json(const nlohmann::json& j) {
  std::vector<Value> out;
  for (const auto& v : j) out.push_back(value_from_json(v));
  return out;
}

}  // namespace

struct Datastore::Journal {
  std::filesystem::path path;
  std::FILE* file = nullptr;

  ~Journal() {
    if (file) std::fclose(file);
  }

  void append(const nlohmann::json& record, bool sync) {
    auto payload = record.dump();
    std::string frame;
    frame.reserve(payload.size() + 8);
    put_u32(frame, static_cast<std::uint32_t>(payload.size()));
    put_u32(frame, crc32(payload));
    frame += payload;
    if (std::fwrite(frame.data(), 1, frame.size(), file) != frame.size() || std::fflush(file) != 0) {
      throw Error(ErrorCode::JournalCorrupt, "journal write failed: " + path.string());
    }
    if (sync) flush();
  }

  void flush() { ::fsync(::fileno(file)); }
};

std::shared_ptr<Datastore> Datastore::in_memory() { return std::shared_ptr<Datastore>(new Datastore()); }

std::shared_ptr<Datastore> Datastore::open(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto store = std::shared_ptr<Datastore>(new Datastore());
  store->journal_ = std::make_unique<Journal>();
  store->journal_->path = dir / "journal.log";
  store->replay();
  store->journal_->file = std::fopen(store->journal_->path.c_str(), "ab");
  if (!store->journal_->file) {
    throw Error(ErrorCode::JournalCorrupt, "cannot open journal " + store->journal_->path.string());
  }
  return store;
}

Datastore::~Datastore() = default;

void Datastore::replay() {
  const auto& path = journal_->path;
  if (!std::filesystem::exists(path)) return;
  std::string data;
  {
    std::ifstream in(path, std::ios::binary);
    data.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::size_t pos = 0;
  std::size_t good_end = 0;
  while (pos + 8 <= data.size()) {
    std::uint32_t len = get_u32(data.data() + pos);
    std::uint32_t crc = get_u32(data.data() + pos + 4);
    if (pos + 8 + len > data.size()) break;  // torn tail
    std::string_view payload(data.data() + pos + 8, len);
    if (crc32(payload) != crc) {
      if (pos + 8 + len == data.size()) break;  // torn tail
      throw Error(ErrorCode::JournalCorrupt,
                  "checksum mismatch at offset " + std::to_string(pos) + " in " + path.string());
    }
    auto rec = nlohmann::json::parse(payload);
    const auto op = rec.at("op").get<std::string>();
    const auto table = rec.at("table").get<std::string>();
    if (op == "create") {
      tables_.emplace(table, Table(table, schema_from_json(rec.at("schema"))));
    } else {
      ChangeEvent ev;
      ev.seq = rec.at("seq").get<std::uint64_t>();
      ev.table = table;
      ev.row_id = rec.at("row_id").get<RowId>();
      if (ev.seq != events_.size() + 1) {
        throw Error(ErrorCode::JournalCorrupt, "sequence gap at seq " + std::to_string(ev.seq));
      }
      auto& t = table_ref(table);
      if (op == "insert") {
        ev.kind = ChangeKind::Insert;
        ev.row = values_from_json(rec.at("values"));
        t.insert(ev.row_id, *ev.row);
      } else if (op == "update") {
        ev.kind = ChangeKind::Update;
        ev.row = values_from_json(rec.at("values"));
        t.update(ev.row_id, *ev.row);
      } else if (op == "delete") {
        ev.kind = ChangeKind::Delete;
        t.erase(ev.row_id);
      } else {
        throw Error(ErrorCode::JournalCorrupt, "unknown journal op '" + op + "'");
      }
      events_.push_back(std::move(ev));
    }
    pos += 8 + len;
    good_end = pos;
  }
  if (good_end != data.size()) std::filesystem::resize_file(path, good_end);
}

void Datastore::append_record(const nlohmann::json& record) {
  if (journal_) journal_->append(record, !bulk_);
}

Table& Datastore::table_ref(const std::string& name) {
  auto it = tables_.find(name);
  if (it == tables_.end()) throw Error(ErrorCode::UnknownTable, "unknown table '" + name + "'");
  return it->second;
}

const Table& Datastore::table_ref(const std::string& name) const {
  auto it = tables_.find(name);
  if (it == tables_.end()) throw Error(ErrorCode::UnknownTable, "unknown table '" + name + "'");
  return it->second;
}

void Datastore::create_table(const std::string& name, Schema schema) {
  std::lock_guard write(write_mu_);
  {
    std::shared_lock lock(mu_);
    if (tables_.count(name)) throw Error(ErrorCode::DuplicateTable, "table '" + name + "' exists");
  }
  append_record({{"op", "create"}, {"table", name}, {"schema", schema_to_json(schema)}});
  std::unique_lock lock(mu_);
  tables_.emplace(name, Table(name, std::move(schema)));
}

bool Datastore::has_table(const std::string& name) const {
  std::shared_lock lock(mu_);
  return tables_.count(name) != 0;
}

std::vector<std::string> Datastore::table_names() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, t] : tables_) out.push_back(name);
  return out;
}

Schema Datastore::schema(const std::string& name) const {
  std::shared_lock lock(mu_);
  return table_ref(name).schema();
}

Table Datastore::snapshot(const std::string& name) const {
  std::shared_lock lock(mu_);
  return table_ref(name);
}

QueryResult Datastore::query(const StructuredQuery& q, const std::string& table) const {
  std::shared_lock lock(mu_);
  auto it = tables_.find(table);
  if (it == tables_.end()) throw Error(ErrorCode::BindError, "unknown table '" + table + "'");
  return execute_query(q, it->second);
}

ChangeEvent Datastore::mutate(const std::string& table, const Mutation& op) {
  std::lock_guard write(write_mu_);
  return apply(table, op);
}

ChangeEvent Datastore::apply(const std::string& table, const Mutation& op) {
  ChangeEvent ev;
  ev.table = table;
  nlohmann::json record;
  {
    std::shared_lock lock(mu_);
    const Table& t = table_ref(table);
    std::lock_guard feed(feed_mu_);
    ev.seq = events_.size() + 1;
    if (const auto* ins = std::get_if<InsertOp>(&op)) {
      ev.kind = ChangeKind::Insert;
      ev.row_id = t.next_row_id();
      ev.row = t.validate(ins->values);
    } else if (const auto* upd = std::get_if<UpdateOp>(&op)) {
      ev.kind = ChangeKind::Update;
      ev.row_id = upd->row_id;
      auto values = t.at(upd->row_id);
      for (const auto& [col, v] : upd->changes) {
        auto idx = t.schema().index_of(col);
        if (!idx) throw Error(ErrorCode::SchemaViolation, table + ": unknown column '" + col + "'");
        values[*idx] = v;
      }
      ev.row = t.validate(std::move(values));
    } else {
      const auto& del = std::get<DeleteOp>(op);
      ev.kind = ChangeKind::Delete;
      ev.row_id = del.row_id;
      t.at(del.row_id);
    }
  }
  record = {{"op", std::string(to_string(ev.kind))}, {"table", table}, {"seq", ev.seq}, {"row_id", ev.row_id}};
  if (ev.row) record["values"] = values_to_json(*ev.row);
  append_record(record);
  {
    std::unique_lock lock(mu_);
    Table& t = table_ref(table);
    switch (ev.kind) {
      case ChangeKind::Insert: t.insert(ev.row_id, *ev.row); break;
      case ChangeKind::Update: t.update(ev.row_id, *ev.row); break;
      case ChangeKind::Delete: t.erase(ev.row_id); break;
    }
  }
  {
    std::lock_guard feed(feed_mu_);
    events_.push_back(ev);
  }
  feed_cv_.notify_all();
  return ev;
}

std::optional<ChangeEvent> Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(store_->feed_mu_);
  if (!store_->feed_cv_.wait_for(lock, timeout, [&] { return store_->events_.size() >= next_seq_; })) {
    return std::nullopt;
  }
  return store_->events_[next_seq_++ - 1];
}

std::vector<ChangeEvent> Subscription::poll() {
  std::lock_guard lock(store_->feed_mu_);
  std::vector<ChangeEvent> out;
  while (store_->events_.size() >= next_seq_) out.push_back(store_->events_[next_seq_++ - 1]);
  return out;
}

Subscription Datastore::subscribe(std::uint64_t from_seq) const {
  if (from_seq == 0) from_seq = 1;
  if (from_seq > last_seq() + 1) {
    throw Error(ErrorCode::ValidationError, "subscription start " + std::to_string(from_seq) +
                                                " is beyond the feed head " + std::to_string(last_seq()));
  }
  return Subscription(shared_from_this(), from_seq);
}

std::uint64_t Datastore::last_seq() const {
  std::lock_guard feed(feed_mu_);
  return events_.size();
}

std::vector<ChangeEvent> Datastore::events_from(std::uint64_t from_seq, std::size_t max) const {
  std::lock_guard feed(feed_mu_);
  std::vector<ChangeEvent> out;
  for (auto s = std::max<std::uint64_t>(from_seq, 1); s <= events_.size() && out.size() < max; ++s) {
    out.push_back(events_[s - 1]);
  }
  return out;
}

bool Datastore::wait_for_seq(std::uint64_t seq, std::chrono::milliseconds timeout) const {
  std::unique_lock feed(feed_mu_);
  return feed_cv_.wait_for(feed, timeout, [&] { return events_.size() >= seq; });
}

std::uint64_t Datastore::state_hash() const {
  std::shared_lock lock(mu_);
  std::string acc;
  for (const auto& [name, t] : tables_) acc += name + ":" + util::hex64(t.content_hash()) + ";";
  acc += "seq:" + std::to_string(last_seq());
  return util::fnv1a64(acc);
}

std::uint64_t Datastore::table_hash(const std::string& name) const {
  std::shared_lock lock(mu_);
  return table_ref(name).content_hash();
}

bool Datastore::load_csv(const std::string& table, const std::filesystem::path& file) {
  if (has_table(table)) return false;
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::FixtureError, "missing fixture file: " + file.string());
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  auto cells = [](const std::string& line) {
    Tokenizer tok(line, boost::escaped_list_separator<char>('\\', ',', '"'));
    return std::vector<std::string>(tok.begin(), tok.end());
  };
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::FixtureError, file.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<Column> cols;
  for (const auto& h : cells(line)) {
    auto parts = util::split(h, ':');
    if (parts.size() != 2) {
      throw Error(ErrorCode::FixtureError, file.string() + ": header cell '" + h + "' is not name:type");
    }
    cols.push_back({util::trim(parts[0]), column_type_from_string(util::trim(parts[1]))});
  }
  Schema schema(std::move(cols));
  std::vector<std::vector<Value>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (util::trim(line).empty()) continue;
    auto raw = cells(line);
    if (raw.size() != schema.size()) {
      throw Error(ErrorCode::FixtureError, file.string() + ":" + std::to_string(lineno) + ": expected " +
                                               std::to_string(schema.size()) + " cells, got " +
                                               std::to_string(raw.size()));
    }
    std::vector<Value> values;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      try {
        values.push_back(parse_cell(raw[i], schema.at(i).type));
      } catch (const Error& e) {
        throw Error(ErrorCode::FixtureError, file.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    rows.push_back(std::move(values));
  }
  create_table(table, schema);
  std::lock_guard write(write_mu_);
  // Bulk load: one fsync at the end instead of one per row.
  bulk_ = true;
  try {
    for (auto& values : rows) apply(table, InsertOp{std::move(values)});
  } catch (...) {
    bulk_ = false;
    throw;
  }
  bulk_ = false;
  if (journal_) journal_->flush();
  return true;
}

}  // namespace bpa
