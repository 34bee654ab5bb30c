#pragma once

// Random tables and queries for property tests.

#include <random>
#include <string>
#include <vector>

#include "bpa/datastore.hpp"

namespace gen {

inline bpa::Schema mixed_schema() {
  using bpa::ColumnType;
  return bpa::Schema({{"id", ColumnType::Integer},
                      {"name", ColumnType::Text},
                      {"amount", ColumnType::Integer},
                      {"score", ColumnType::Real},
                      {"day", ColumnType::Date}});
}

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> kNames = {"Ada", "Bo", "Cy", "Di", "Ed", "Flo", "Gus"};
  return kNames;
}

inline std::string random_date(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> m(1, 12), d(1, 28);
  char buf[16];
  std::snprintf(buf, sizeof buf, "2019-%02d-%02d", m(rng), d(rng));
  return buf;
}

inline bpa::Table random_table(std::mt19937_64& rng, std::size_t max_rows = 200) {
  bpa::Table t("t", mixed_schema());
  std::uniform_int_distribution<std::size_t> nrows(0, max_rows);
  std::uniform_int_distribution<std::int64_t> amount(-50, 1000);
  std::uniform_real_distribution<double> score(0.0, 100.0);
  std::uniform_int_distribution<std::size_t> name(0, names().size() - 1);
  std::bernoulli_distribution null_cell(0.05);
  const auto n = nrows(rng);
  bpa::RowId id = 1;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<bpa::Value> v{static_cast<std::int64_t>(i), names()[name(rng)], amount(rng), score(rng),
                              random_date(rng)};
    if (null_cell(rng)) v[3] = std::monostate{};
    // Row ids are sparse to mimic deletes.
    id += 1 + rng() % 3;
    t.insert(id, std::move(v));
  }
  return t;
}

inline bpa::Value literal_for(const std::string& column, std::mt19937_64& rng) {
  if (column == "name") return names()[rng() % names().size()];
  if (column == "day") return random_date(rng);
  if (column == "score") return std::uniform_real_distribution<double>(0, 100)(rng);
  if (column == "amount") return static_cast<std::int64_t>(rng() % 1050) - 50;
  return static_cast<std::int64_t>(rng() % 200);
}

inline bpa::StructuredQuery random_query(std::mt19937_64& rng) {
  using bpa::AggKind;
  bpa::StructuredQuery q;
  static const std::vector<std::string> all_cols = {"id", "name", "amount", "score", "day"};
  static const std::vector<std::string> numeric = {"id", "amount", "score"};
  static const std::vector<std::string> keys = {"name", "day", "amount"};
  static const AggKind scalar[] = {AggKind::Count, AggKind::Sum, AggKind::Avg, AggKind::Min, AggKind::Max};
  static const bpa::CmpOp ops[] = {bpa::CmpOp::Gt, bpa::CmpOp::Lt, bpa::CmpOp::Ge,
                                   bpa::CmpOp::Le, bpa::CmpOp::Eq, bpa::CmpOp::Ne};
  switch (rng() % 4) {
    case 0: q.aggregation = AggKind::List; break;
    case 1: q.aggregation = scalar[rng() % 5]; break;
    case 2:
      q.aggregation = scalar[rng() % 5];
      q.group_by = keys[rng() % keys.size()];
      break;
    default:
      q.aggregation = AggKind::TopK;
      q.k = 1 + rng() % 5;
      q.by = scalar[rng() % 5];
      q.group_by = keys[rng() % keys.size()];
      break;
  }
  AggKind applied = q.aggregation == AggKind::TopK ? q.by : q.aggregation;
  q.target = (applied == AggKind::Count || applied == AggKind::List) ? "*" : numeric[rng() % numeric.size()];
  const auto nfilters = rng() % 4;
  for (std::size_t i = 0; i < nfilters; ++i) {
    const auto& col = all_cols[rng() % all_cols.size()];
    q.filters.push_back({col, ops[rng() % 6], literal_for(col, rng)});
  }
  if (q.group_by && rng() % 3 == 0) {
    bpa::Having h;
    h.aggregation = q.target == "*" ? AggKind::Count : scalar[rng() % 5];
    h.op = ops[rng() % 4];
    h.literal = h.aggregation == AggKind::Count ? bpa::Value(static_cast<std::int64_t>(rng() % 10))
                                                : bpa::Value(std::uniform_real_distribution<double>(0, 500)(rng));
    q.having = h;
  }
  return q;
}

}  // namespace gen
