#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace bpa {

enum class ColumnType { Integer, Real, Text, Date };

std::string_view to_string(ColumnType t) noexcept;
ColumnType column_type_from_string(std::string_view s);

/// A cell. Dates are ISO `YYYY-MM-DD` strings, so ordinary string ordering
/// is chronological.
using Value = std::variant<std::monostate, std::int64_t, double, std::string>;

bool is_null(const Value& v) noexcept;
std::optional<double> as_number(const Value& v) noexcept;
std::string display(const Value& v);

/// Three-way comparison. Integers and reals compare numerically; text and
/// dates lexicographically; null sorts first. Mixed text/number is an error.
int compare_values(const Value& a, const Value& b);

nlohmann::json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);

/// Coerces raw fixture text or a literal into the column's type.
Value coerce(const Value& v, ColumnType type);
Value parse_cell(std::string_view text, ColumnType type);
bool conforms(const Value& v, ColumnType type) noexcept;

struct Column {
  std::string name;
  ColumnType type;

  bool operator==(const Column&) const = default;
};

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<Column> columns);

  const std::vector<Column>& columns() const noexcept { return columns_; }
  std::size_t size() const noexcept { return columns_.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t require(std::string_view name) const;  // throws BindError
  const Column& at(std::size_t i) const { return columns_.at(i); }

  bool operator==(const Schema&) const = default;

 private:
  std::vector<Column> columns_;
};

nlohmann::json schema_to_json(const Schema& s);
Schema schema_from_json(const nlohmann::json& j);

using RowId = std::uint64_t;

struct Row {
  RowId row_id = 0;
  std::vector<Value> values;

  bool operator==(const Row&) const = default;
};

/// In-memory table. Rows are keyed by row_id, which is assigned by the owner
/// (the datastore) and never reused.
class Table {
 public:
  Table() = default;
  Table(std::string name, Schema schema);

  const std::string& name() const noexcept { return name_; }
  const Schema& schema() const noexcept { return schema_; }
  const std::map<RowId, std::vector<Value>>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  RowId next_row_id() const noexcept { return next_row_id_; }

  // Validates against the schema (SchemaViolation) and coerces integer
  // literals into real columns.
  std::vector<Value> validate(std::vector<Value> values) const;

  void insert(RowId id, std::vector<Value> values);
  void update(RowId id, std::vector<Value> values);
  void erase(RowId id);
  const std::vector<Value>& at(RowId id) const;  // throws UnknownRow
  bool contains(RowId id) const noexcept { return rows_.count(id) != 0; }

  std::uint64_t content_hash() const;

 private:
  std::string name_;
  Schema schema_;
  std::map<RowId, std::vector<Value>> rows_;
  RowId next_row_id_ = 1;
};

}  // namespace bpa
