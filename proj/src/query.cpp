#include "bpa/query.hpp"

#include <cctype>
#include <charconv>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa {

std::string_view to_string(AggKind k) noexcept {
  switch (k) {
    case AggKind::Count: return "COUNT";
    case AggKind::Sum: return "SUM";
    case AggKind::Avg: return "AVG";
    case AggKind::Min: return "MIN";
    case AggKind::Max: return "MAX";
    case AggKind::List: return "LIST";
    case AggKind::TopK: return "TOP";
  }
  return "COUNT";
}

std::string_view to_string(CmpOp op) noexcept {
  switch (op) {
    case CmpOp::Gt: return ">";
    case CmpOp::Lt: return "<";
    case CmpOp::Ge: return ">=";
    case CmpOp::Le: return "<=";
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
  }
  return "=";
}

bool evaluate(CmpOp op, int c) noexcept {
  switch (op) {
    case CmpOp::Gt: return c > 0;
    case CmpOp::Lt: return c < 0;
    case CmpOp::Ge: return c >= 0;
    case CmpOp::Le: return c <= 0;
    case CmpOp::Eq: return c == 0;
    case CmpOp::Ne: return c != 0;
  }
  return false;
}

namespace {

bool is_scalar_agg(AggKind k) {
  return k == AggKind::Count || k == AggKind::Sum || k == AggKind::Avg || k == AggKind::Min ||
         k == AggKind::Max;
}

void check_literal(const Value& lit, const Column& col, const std::string& where) {
  if (is_null(lit)) throw Error(ErrorCode::BindError, where + ": null literal");
  bool numeric_col = col.type == ColumnType::Integer || col.type == ColumnType::Real;
  bool numeric_lit = as_number(lit).has_value();
  if (numeric_col != numeric_lit) {
    throw Error(ErrorCode::BindError, where + ": literal " + display(lit) + " does not match " +
                                          std::string(to_string(col.type)) + " column '" + col.name + "'");
  }
}

}  // namespace

void validate(const StructuredQuery& q) {
  if (q.aggregation == AggKind::TopK) {
    if (q.k == 0) throw Error(ErrorCode::InvalidQuery, "TOP requires k >= 1");
    if (!q.group_by) throw Error(ErrorCode::InvalidQuery, "TOP requires GROUP BY");
    if (!is_scalar_agg(q.by)) throw Error(ErrorCode::InvalidQuery, "TOP ranks by COUNT/SUM/AVG/MIN/MAX");
  }
  if (q.aggregation == AggKind::List && q.group_by) {
    throw Error(ErrorCode::InvalidQuery, "LIST does not take GROUP BY");
  }
  AggKind applied = q.aggregation == AggKind::TopK ? q.by : q.aggregation;
  bool star = q.target == "*";
  if ((applied == AggKind::Count || applied == AggKind::List) != star) {
    throw Error(ErrorCode::InvalidQuery,
                std::string(to_string(applied)) + (star ? " needs a target column" : " takes target '*'"));
  }
  if (q.having) {
    if (!q.group_by) throw Error(ErrorCode::InvalidQuery, "HAVING requires GROUP BY");
    if (!is_scalar_agg(q.having->aggregation)) throw Error(ErrorCode::InvalidQuery, "bad HAVING aggregation");
    if (!as_number(q.having->literal)) throw Error(ErrorCode::InvalidQuery, "HAVING literal must be numeric");
  }
}

void bind(const StructuredQuery& q, const Schema& schema) {
  try {
    validate(q);
  } catch (const Error& e) {
    throw Error(ErrorCode::BindError, e.what());
  }
  auto numeric = [&](const std::string& name) {
    const auto& c = schema.at(schema.require(name));
    if (c.type != ColumnType::Integer && c.type != ColumnType::Real) {
      throw Error(ErrorCode::BindError, "column '" + name + "' is not numeric");
    }
  };
  AggKind applied = q.aggregation == AggKind::TopK ? q.by : q.aggregation;
  if (q.target != "*") {
    schema.require(q.target);
    if (applied == AggKind::Sum || applied == AggKind::Avg) numeric(q.target);
  }
  for (const auto& f : q.filters) {
    check_literal(f.literal, schema.at(schema.require(f.column)), "filter on " + f.column);
  }
  if (q.group_by) schema.require(*q.group_by);
  if (q.having && q.having->aggregation != AggKind::Count) {
    if (q.target == "*") throw Error(ErrorCode::BindError, "HAVING aggregate needs a target column");
  }
}

namespace {

std::string literal_text(const Value& v) {
  if (auto* s = std::get_if<std::string>(&v)) {
    std::string out = "'";
    for (char c : *s) {
      if (c == '\'' || c == '\\') out.push_back('\\');
      out.push_back(c);
    }
    out.push_back('\'');
    return out;
  }
  if (std::holds_alternative<std::monostate>(v)) return "NULL";
  return display(v);
}

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  bool done() {
    skip();
    return pos_ >= s_.size();
  }

  std::string word() {
    skip();
    auto start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("unexpected end of query");
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string peek() {
    auto save = pos_;
    auto w = done() ? std::string() : word();
    pos_ = save;
    return w;
  }

  void expect(std::string_view w) {
    auto got = word();
    if (got != w) fail("expected '" + std::string(w) + "', got '" + got + "'");
  }

  Value literal() {
    skip();
    if (pos_ < s_.size() && s_[pos_] == '\'') {
      ++pos_;
      std::string out;
      while (pos_ < s_.size() && s_[pos_] != '\'') {
        if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
        out.push_back(s_[pos_++]);
      }
      if (pos_ >= s_.size()) fail("unterminated string literal");
      ++pos_;
      return out;
    }
    auto w = word();
    if (w == "NULL") return std::monostate{};
    bool real = w.find_first_of(".eE") != std::string::npos;
    if (!real) {
      std::int64_t i = 0;
      auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), i);
      if (ec == std::errc{} && p == w.data() + w.size()) return i;
    } else {
      double d = 0;
      auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), d);
      if (ec == std::errc{} && p == w.data() + w.size()) return d;
    }
    fail("bad literal '" + w + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::InvalidQuery, "canonical query: " + msg + " in '" + std::string(s_) + "'");
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

AggKind agg_from_word(const Lexer& lx, const std::string& w) {
  for (auto k : {AggKind::Count, AggKind::Sum, AggKind::Avg, AggKind::Min, AggKind::Max, AggKind::List}) {
    if (w == to_string(k)) return k;
  }
  lx.fail("unknown aggregation '" + w + "'");
}

CmpOp op_from_word(const Lexer& lx, const std::string& w) {
  for (auto op : {CmpOp::Gt, CmpOp::Lt, CmpOp::Ge, CmpOp::Le, CmpOp::Eq, CmpOp::Ne}) {
    if (w == to_string(op)) return op;
  }
  lx.fail("unknown operator '" + w + "'");
}

}  // namespace

std::string to_canonical_text(const StructuredQuery& q) {
  std::string out;
  if (q.aggregation == AggKind::TopK) {
    out = "TOP " + std::to_string(q.k) + " " + std::string(to_string(q.by));
  } else {
    out = std::string(to_string(q.aggregation));
  }
  out += " " + q.target;
  for (std::size_t i = 0; i < q.filters.size(); ++i) {
    const auto& f = q.filters[i];
    out += (i == 0 ? " WHERE " : " AND ");
    out += f.column + " " + std::string(to_string(f.op)) + " " + literal_text(f.literal);
  }
  if (q.group_by) out += " GROUP BY " + *q.group_by;
  if (q.having) {
    out += " HAVING " + std::string(to_string(q.having->aggregation)) + " " +
           std::string(to_string(q.having->op)) + " " + literal_text(q.having->literal);
  }
  return out;
}

StructuredQuery from_canonical_text(std::string_view text) {
  Lexer lx(text);
  StructuredQuery q;
  auto head = lx.word();
  if (head == "TOP") {
    q.aggregation = AggKind::TopK;
    auto k = lx.word();
    auto [p, ec] = std::from_chars(k.data(), k.data() + k.size(), q.k);
    if (ec != std::errc{} || p != k.data() + k.size()) lx.fail("bad k '" + k + "'");
    q.by = agg_from_word(lx, lx.word());
  } else {
    q.aggregation = agg_from_word(lx, head);
  }
  q.target = lx.word();
  if (lx.peek() == "WHERE") {
    lx.word();
    for (;;) {
      Filter f;
      f.column = lx.word();
      f.op = op_from_word(lx, lx.word());
      f.literal = lx.literal();
      q.filters.push_back(std::move(f));
      if (lx.peek() != "AND") break;
      lx.word();
    }
  }
  if (lx.peek() == "GROUP") {
    lx.word();
    lx.expect("BY");
    q.group_by = lx.word();
  }
  if (lx.peek() == "HAVING") {
    lx.word();
    Having h;
    h.aggregation = agg_from_word(lx, lx.word());
    h.op = op_from_word(lx, lx.word());
    h.literal = lx.literal();
    q.having = std::move(h);
  }
  if (!lx.done()) lx.fail("trailing input '" + lx.peek() + "'");
  validate(q);
  return q;
}

std::string to_persisted_text(const StructuredQuery& q) { return "v1:" + to_canonical_text(q); }

StructuredQuery from_persisted_text(std::string_view text) {
  if (text.substr(0, 3) != "v1:") {
    throw Error(ErrorCode::InvalidQuery, "unsupported persisted query version in '" + std::string(text) + "'");
  }
  return from_canonical_text(text.substr(3));
}

}  // namespace bpa
