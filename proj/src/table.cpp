#include "bpa/table.hpp"

#include <charconv>
#include <cmath>
#include <regex>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa {

std::string_view to_string(ColumnType t) noexcept {
  switch (t) {
    case ColumnType::Integer: return "integer";
    case ColumnType::Real: return "real";
    case ColumnType::Text: return "text";
    case ColumnType::Date: return "date";
  }
  return "text";
}

ColumnType column_type_from_string(std::string_view s) {
  auto l = util::to_lower(s);
  if (l == "integer" || l == "int") return ColumnType::Integer;
  if (l == "real" || l == "double" || l == "float") return ColumnType::Real;
  if (l == "text" || l == "string") return ColumnType::Text;
  if (l == "date") return ColumnType::Date;
  throw Error(ErrorCode::SchemaViolation, "unknown column type '" + std::string(s) + "'");
}

bool is_null(const Value& v) noexcept { return std::holds_alternative<std::monostate>(v); }

std::optional<double> as_number(const Value& v) noexcept {
  if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (auto* d = std::get_if<double>(&v)) return *d;
  return std::nullopt;
}

std::string display(const Value& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) return "";
        else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
        else if constexpr (std::is_same_v<T, double>) return util::format_real(x);
        else return x;
      },
      v);
}

int compare_values(const Value& a, const Value& b) {
  if (is_null(a) || is_null(b)) return static_cast<int>(!is_null(a)) - static_cast<int>(!is_null(b));
  auto ia = std::get_if<std::int64_t>(&a);
  auto ib = std::get_if<std::int64_t>(&b);
  if (ia && ib) return (*ia > *ib) - (*ia < *ib);
  auto na = as_number(a);
  auto nb = as_number(b);
  if (na && nb) return (*na > *nb) - (*na < *nb);
  auto sa = std::get_if<std::string>(&a);
  auto sb = std::get_if<std::string>(&b);
  if (sa && sb) {
    int c = sa->compare(*sb);
    return (c > 0) - (c < 0);
  }
  throw Error(ErrorCode::BindError, "cannot compare text with a number");
}

nlohmann::json value_to_json(const Value& v) {
  return std::visit(
      [](const auto& x) -> nlohmann::json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) return nullptr;
        else return x;
      },
      v);
}

Value value_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::monostate{};
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw Error(ErrorCode::Serialization, "unsupported cell value " + j.dump());
}

namespace {

bool is_iso_date(std::string_view s) {
  static const std::regex kDate(R"(\d{4}-\d{2}-\d{2})");
  return std::regex_match(s.begin(), s.end(), kDate);
}

}  // namespace

bool conforms(const Value& v, ColumnType type) noexcept {
  if (is_null(v)) return true;
  switch (type) {
    case ColumnType::Integer: return std::holds_alternative<std::int64_t>(v);
    case ColumnType::Real: return std::holds_alternative<double>(v);
    case ColumnType::Text: return std::holds_alternative<std::string>(v);
    case ColumnType::Date: {
      auto* s = std::get_if<std::string>(&v);
      return s && is_iso_date(*s);
    }
  }
  return false;
}

Value coerce(const Value& v, ColumnType type) {
  if (is_null(v)) return v;
  if (type == ColumnType::Real) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  }
  if (type == ColumnType::Integer) {
    if (auto* d = std::get_if<double>(&v); d && std::floor(*d) == *d && std::abs(*d) < 9.0e15) {
      return static_cast<std::int64_t>(*d);
    }
  }
  if (auto* s = std::get_if<std::string>(&v); s && type != ColumnType::Text && type != ColumnType::Date) {
    return parse_cell(*s, type);
  }
  return v;
}

Value parse_cell(std::string_view text, ColumnType type) {
  auto t = util::trim(text);
  if (t.empty()) return std::monostate{};
  switch (type) {
    case ColumnType::Integer: {
      std::int64_t out = 0;
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
      if (ec != std::errc{} || p != t.data() + t.size()) {
        throw Error(ErrorCode::SchemaViolation, "not an integer: '" + t + "'");
      }
      return out;
    }
    case ColumnType::Real: {
      double out = 0;
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
      if (ec != std::errc{} || p != t.data() + t.size()) {
        throw Error(ErrorCode::SchemaViolation, "not a number: '" + t + "'");
      }
      return out;
    }
    case ColumnType::Date:
      if (!is_iso_date(t)) throw Error(ErrorCode::SchemaViolation, "not a YYYY-MM-DD date: '" + t + "'");
      return t;
    case ColumnType::Text:
      return std::string(text);
  }
  return t;
}

Schema::Schema(std::vector<Column> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) throw Error(ErrorCode::SchemaViolation, "schema needs at least one column");
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (columns_[i].name == columns_[j].name) {
        throw Error(ErrorCode::SchemaViolation, "duplicate column '" + columns_[i].name + "'");
      }
    }
  }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Schema::require(std::string_view name) const {
  if (auto i = index_of(name)) return *i;
  throw Error(ErrorCode::BindError, "unknown column '" + std::string(name) + "'");
}

nlohmann::json schema_to_json(const Schema& s) {
  auto out = nlohmann::json::array();
  for (const auto& c : s.columns()) out.push_back({{"name", c.name}, {"type", to_string(c.type)}});
  return out;
}

Schema schema_from_json(const nlohmann::json& j) {
  std::vector<Column> cols;
  for (const auto& c : j) {
    cols.push_back({c.at("name").get<std::string>(),
                    column_type_from_string(c.at("type").get<std::string>())});
  }
  return Schema(std::move(cols));
}

Table::Table(std::string name, Schema schema) : name_(std::move(name)), schema_(std::move(schema)) {}

std::vector<Value> Table::validate(std::vector<Value> values) const {
  if (values.size() != schema_.size()) {
    throw Error(ErrorCode::SchemaViolation,
                name_ + ": expected " + std::to_string(schema_.size()) + " values, got " +
                    std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& col = schema_.at(i);
    try {
      values[i] = coerce(values[i], col.type);
    } catch (const Error&) {
      throw Error(ErrorCode::SchemaViolation,
                  name_ + "." + col.name + ": value does not conform to " + std::string(to_string(col.type)));
    }
    if (!conforms(values[i], col.type)) {
      throw Error(ErrorCode::SchemaViolation,
                  name_ + "." + col.name + ": value does not conform to " + std::string(to_string(col.type)));
    }
  }
  return values;
}

void Table::insert(RowId id, std::vector<Value> values) {
  rows_[id] = std::move(values);
  next_row_id_ = std::max(next_row_id_, id + 1);
}

void Table::update(RowId id, std::vector<Value> values) {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw Error(ErrorCode::UnknownRow, name_ + ": no row " + std::to_string(id));
  it->second = std::move(values);
}

void Table::erase(RowId id) {
  if (rows_.erase(id) == 0) throw Error(ErrorCode::UnknownRow, name_ + ": no row " + std::to_string(id));
}

const std::vector<Value>& Table::at(RowId id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw Error(ErrorCode::UnknownRow, name_ + ": no row " + std::to_string(id));
  return it->second;
}

std::uint64_t Table::content_hash() const {
  nlohmann::json j;
  j["name"] = name_;
  j["schema"] = schema_to_json(schema_);
  auto rows = nlohmann::json::array();
  for (const auto& [id, vals] : rows_) {
    auto r = nlohmann::json::array({id});
    for (const auto& v : vals) r.push_back(value_to_json(v));
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return util::fnv1a64(j.dump());
}

}  // namespace bpa
