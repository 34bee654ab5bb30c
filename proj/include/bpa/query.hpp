#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bpa/table.hpp"

namespace bpa {

enum class AggKind { Count, Sum, Avg, Min, Max, List, TopK };
enum class CmpOp { Gt, Lt, Ge, Le, Eq, Ne };

std::string_view to_string(AggKind k) noexcept;
std::string_view to_string(CmpOp op) noexcept;
bool evaluate(CmpOp op, int three_way) noexcept;

struct Filter {
  std::string column;
  CmpOp op = CmpOp::Eq;
  Value literal;

  bool operator==(const Filter&) const = default;
};

struct Having {
  AggKind aggregation = AggKind::Count;  // Count/Sum/Avg/Min/Max, applied to target
  CmpOp op = CmpOp::Gt;
  Value literal;

  bool operator==(const Having&) const = default;
};

/// Output of natural-language translation, executable against a Table.
///
/// `target` is "*" for Count and List. For TopK, `k` groups are ranked by
/// `by` applied to `target` and `group_by` is mandatory.
struct StructuredQuery {
  AggKind aggregation = AggKind::Count;
  std::size_t k = 0;
  AggKind by = AggKind::Count;
  std::string target = "*";
  std::vector<Filter> filters;
  std::optional<std::string> group_by;
  std::optional<Having> having;

  bool operator==(const StructuredQuery&) const = default;
};

/// Structural checks that do not need a schema (TopK needs group_by, etc.).
/// Throws InvalidQuery.
void validate(const StructuredQuery& q);

/// Checks every referenced column against `schema` and literal types
/// against column types. Throws BindError.
void bind(const StructuredQuery& q, const Schema& schema);

// Canonical text, e.g. "SUM loan_amount WHERE credit_score > 500" or
// "TOP 3 AVG loan_amount GROUP BY borrower HAVING AVG > 10000".
std::string to_canonical_text(const StructuredQuery& q);
StructuredQuery from_canonical_text(std::string_view text);

// Persisted form carries a version tag: "v1:<canonical text>".
std::string to_persisted_text(const StructuredQuery& q);
StructuredQuery from_persisted_text(std::string_view text);

}  // namespace bpa
