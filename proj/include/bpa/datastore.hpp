#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "bpa/query.hpp"
#include "bpa/table.hpp"

namespace bpa {

// ---------------------------------------------------------------------------
// Query evaluation

struct QueryResult {
  enum class Shape { Scalar, Rows, Grouped };

  Shape shape = Shape::Scalar;
  std::optional<double> scalar;
  std::vector<std::string> columns;  // Rows only
  std::vector<Row> rows;
  std::vector<std::pair<Value, double>> groups;

  bool operator==(const QueryResult&) const = default;
};

nlohmann::json result_to_json(const QueryResult& r);
QueryResult result_from_json(const nlohmann::json& j);

// Hash of the canonical serialization; stable across processes.
std::uint64_t result_hash(const QueryResult& r);

// Short human-readable rendering ("4", "82 rows", "3 groups: a=1, ...").
std::string summarize(const QueryResult& r);

/// Evaluates a bound query. Filters are conjunctive; grouping happens before
/// aggregation; HAVING filters groups; TOP sorts groups by the ranking
/// aggregate descending with ties by key ascending.
///
/// Throws BindError for an unbindable query and EmptyAggregation for
/// AVG/MIN/MAX over zero rows.
QueryResult execute_query(const StructuredQuery& q, const Table& table);

// ---------------------------------------------------------------------------
// Mutations and the change feed

enum class ChangeKind { Insert, Update, Delete };
std::string_view to_string(ChangeKind k) noexcept;

struct ChangeEvent {
  std::uint64_t seq = 0;
  std::string table;
  ChangeKind kind = ChangeKind::Insert;
  RowId row_id = 0;
  // After-image for Insert/Update so consumers can maintain replicas.
  std::optional<std::vector<Value>> row;

  bool operator==(const ChangeEvent&) const = default;
};

struct InsertOp {
  std::vector<Value> values;
};
struct UpdateOp {
  RowId row_id = 0;
  std::map<std::string, Value> changes;
};
struct DeleteOp {
  RowId row_id = 0;
};
using Mutation = std::variant<InsertOp, UpdateOp, DeleteOp>;

class Datastore;

/// Cursor over the change feed. Delivers every event with seq >= the start
/// position exactly once, in order.
class Subscription {
 public:
  Subscription(std::shared_ptr<const Datastore> store, std::uint64_t next_seq)
      : store_(std::move(store)), next_seq_(next_seq) {}

  // Blocks until the next event is available or `timeout` elapses.
  std::optional<ChangeEvent> next(std::chrono::milliseconds timeout);
  // Non-blocking drain of everything currently available.
  std::vector<ChangeEvent> poll();
  std::uint64_t position() const noexcept { return next_seq_; }

 private:
  std::shared_ptr<const Datastore> store_;
  std::uint64_t next_seq_;
};

/// Tabular store: in-memory tables rebuilt from an append-only journal on
/// open. Each journal record is `[u32 length][u32 crc32][json payload]`; a
/// torn tail record is dropped on recovery.
///
/// One writer at a time (mutations serialize on the journal); readers run
/// concurrently against a shared lock.
class Datastore : public std::enable_shared_from_this<Datastore> {
 public:
  // No journal: state lives only in memory.
  static std::shared_ptr<Datastore> in_memory();
  // Journal at `dir`/journal.log; replayed if present.
  static std::shared_ptr<Datastore> open(const std::filesystem::path& dir);

  ~Datastore();
  Datastore(const Datastore&) = delete;
  Datastore& operator=(const Datastore&) = delete;

  void create_table(const std::string& name, Schema schema);
  bool has_table(const std::string& name) const;
  std::vector<std::string> table_names() const;
  Schema schema(const std::string& name) const;
  Table snapshot(const std::string& name) const;

  QueryResult query(const StructuredQuery& q, const std::string& table) const;

  ChangeEvent mutate(const std::string& table, const Mutation& op);
  ChangeEvent insert(const std::string& table, std::vector<Value> values) {
    return mutate(table, InsertOp{std::move(values)});
  }

  Subscription subscribe(std::uint64_t from_seq) const;
  std::uint64_t last_seq() const;
  std::vector<ChangeEvent> events_from(std::uint64_t from_seq, std::size_t max) const;

  // Hash over every table's content plus the seq counter.
  std::uint64_t state_hash() const;
  std::uint64_t table_hash(const std::string& name) const;

  // Loads `<dir>/<table>.csv`. The header row carries `name:type` columns.
  // Skipped (returns false) when the table already exists, so a recovered
  // journal is not double-loaded.
  bool load_csv(const std::string& table, const std::filesystem::path& file);

  // Blocks until last_seq() >= seq or the timeout elapses.
  bool wait_for_seq(std::uint64_t seq, std::chrono::milliseconds timeout) const;

 private:
  friend class Subscription;
  Datastore() = default;

  struct Journal;

  void replay();
  void append_record(const nlohmann::json& record);
  Table& table_ref(const std::string& name);
  const Table& table_ref(const std::string& name) const;
  ChangeEvent apply(const std::string& table, const Mutation& op);

  mutable std::shared_mutex mu_;
  std::map<std::string, Table> tables_;
  std::vector<ChangeEvent> events_;  // events_[i].seq == i + 1
  std::unique_ptr<Journal> journal_;
  std::mutex write_mu_;
  bool bulk_ = false;  // guarded by write_mu_
  mutable std::mutex feed_mu_;
  mutable std::condition_variable feed_cv_;
};

}  // namespace bpa
