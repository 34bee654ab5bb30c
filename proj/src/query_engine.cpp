#include <algorithm>
#include <map>

#include "bpa/datastore.hpp"
#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa {

nlohmann::json result_to_json(const QueryResult& r) {
  nlohmann::json j;
  switch (r.shape) {
    case QueryResult::Shape::Scalar:
      j["shape"] = "scalar";
      j["scalar"] = r.scalar ? nlohmann::json(*r.scalar) : nlohmann::json(nullptr);
      break;
    case QueryResult::Shape::Rows: {
      j["shape"] = "rows";
      j["columns"] = r.columns;
      auto rows = nlohmann::json::array();
      for (const auto& row : r.rows) {
        auto vals = nlohmann::json::array();
        for (const auto& v : row.values) vals.push_back(value_to_json(v));
        rows.push_back({{"row_id", row.row_id}, {"values", std::move(vals)}});
      }
      j["rows"] = std::move(rows);
      break;
    }
    case QueryResult::Shape::Grouped: {
      j["shape"] = "grouped";
      auto groups = nlohmann::json::array();
      for (const auto& [k, v] : r.groups) groups.push_back({value_to_json(k), v});
      j["groups"] = std::move(groups);
      break;
    }
  }
  return j;
}

QueryResult result_from_json(const nlohmann::json& j) {
  QueryResult r;
  auto shape = j.at("shape").get<std::string>();
  if (shape == "scalar") {
    r.shape = QueryResult::Shape::Scalar;
    if (!j.at("scalar").is_null()) r.scalar = j.at("scalar").get<double>();
  } else if (shape == "rows") {
    r.shape = QueryResult::Shape::Rows;
    r.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) {
      Row out;
      out.row_id = row.at("row_id").get<RowId>();
      for (const auto& v : row.at("values")) out.values.push_back(value_from_json(v));
      r.rows.push_back(std::move(out));
    }
  } else if (shape == "grouped") {
    r.shape = QueryResult::Shape::Grouped;
    for (const auto& g : j.at("groups")) r.groups.emplace_back(value_from_json(g.at(0)), g.at(1).get<double>());
  } else {
    throw Error(ErrorCode::Serialization, "unknown result shape '" + shape + "'");
  }
  return r;
}

std::uint64_t result_hash(const QueryResult& r) { return util::fnv1a64(result_to_json(r).dump()); }

std::string summarize(const QueryResult& r) {
  switch (r.shape) {
    case QueryResult::Shape::Scalar:
      return r.scalar ? util::format_real(*r.scalar) : std::string("none");
    case QueryResult::Shape::Rows:
      return std::to_string(r.rows.size()) + " rows";
    case QueryResult::Shape::Grouped: {
      std::string out = std::to_string(r.groups.size()) + " groups";
      for (std::size_t i = 0; i < r.groups.size() && i < 5; ++i) {
        out += (i == 0 ? ": " : ", ") + display(r.groups[i].first) + "=" + util::format_real(r.groups[i].second);
      }
      return out;
    }
  }
  return "";
}

namespace {

using RowRef = const std::vector<Value>*;

struct ValueLess {
  bool operator()(const Value& a, const Value& b) const { return compare_values(a, b) < 0; }
};

double aggregate(AggKind kind, const std::vector<RowRef>& rows, std::optional<std::size_t> col,
                 const Schema& schema) {
  if (kind == AggKind::Count) return static_cast<double>(rows.size());
  const std::size_t c = col.value();
  const bool integral = schema.at(c).type == ColumnType::Integer;
  std::int64_t isum = 0;
  double dsum = 0;
  std::size_t n = 0;
  std::optional<Value> best;
  for (RowRef r : rows) {
    const Value& v = (*r)[c];
    if (is_null(v)) continue;
    ++n;
    if (kind == AggKind::Sum || kind == AggKind::Avg) {
      if (integral) isum += std::get<std::int64_t>(v);
      else dsum += std::get<double>(v);
    } else if (!best || (kind == AggKind::Min ? compare_values(v, *best) < 0 : compare_values(v, *best) > 0)) {
      best = v;
    }
  }
  const double total = integral ? static_cast<double>(isum) : dsum;
  switch (kind) {
    case AggKind::Sum:
      return total;
    case AggKind::Avg:
      if (n == 0) throw Error(ErrorCode::EmptyAggregation, "average over zero rows");
      return total / static_cast<double>(n);
    case AggKind::Min:
    case AggKind::Max: {
      if (!best) throw Error(ErrorCode::EmptyAggregation, std::string(to_string(kind)) + " over zero rows");
      auto num = as_number(*best);
      if (!num) throw Error(ErrorCode::BindError, "MIN/MAX needs a numeric column");
      return *num;
    }
    default:
      throw Error(ErrorCode::InvalidQuery, "not a scalar aggregation");
  }
}

}  // namespace

QueryResult execute_query(const StructuredQuery& q, const Table& table) {
  const Schema& schema = table.schema();
  bind(q, schema);

  struct BoundFilter {
    std::size_t col;
    CmpOp op;
    Value literal;
  };
  std::vector<BoundFilter> filters;
  for (const auto& f : q.filters) {
    filters.push_back({schema.require(f.column), f.op, f.literal});
  }

  std::vector<std::pair<RowId, RowRef>> matched;
  for (const auto& [id, values] : table.rows()) {
    bool keep = std::all_of(filters.begin(), filters.end(), [&](const BoundFilter& f) {
      const Value& cell = values[f.col];
      return !is_null(cell) && evaluate(f.op, compare_values(cell, f.literal));
    });
    if (keep) matched.emplace_back(id, &values);
  }

  QueryResult result;
  std::optional<std::size_t> target;
  if (q.target != "*") target = schema.require(q.target);

  if (q.aggregation == AggKind::List) {
    result.shape = QueryResult::Shape::Rows;
    for (const auto& c : schema.columns()) result.columns.push_back(c.name);
    for (const auto& [id, ref] : matched) result.rows.push_back(Row{id, *ref});
    return result;
  }

  if (!q.group_by) {
    std::vector<RowRef> refs;
    refs.reserve(matched.size());
    for (const auto& m : matched) refs.push_back(m.second);
    result.shape = QueryResult::Shape::Scalar;
    result.scalar = aggregate(q.aggregation, refs, target, schema);
    return result;
  }

  const std::size_t key_col = schema.require(*q.group_by);
  std::map<Value, std::vector<RowRef>, ValueLess> groups;
  for (const auto& m : matched) groups[(*m.second)[key_col]].push_back(m.second);

  const AggKind ranking = q.aggregation == AggKind::TopK ? q.by : q.aggregation;
  result.shape = QueryResult::Shape::Grouped;
  for (const auto& [key, refs] : groups) {
    if (q.having) {
      double h = aggregate(q.having->aggregation, refs, target, schema);
      if (!evaluate(q.having->op, compare_values(Value(h), q.having->literal))) continue;
    }
    result.groups.emplace_back(key, aggregate(ranking, refs, target, schema));
  }
  if (q.aggregation == AggKind::TopK) {
    std::stable_sort(result.groups.begin(), result.groups.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return compare_values(a.first, b.first) < 0;
    });
    if (result.groups.size() > q.k) result.groups.resize(q.k);
  }
  return result;
}

}  // namespace bpa
