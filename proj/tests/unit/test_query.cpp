#include <gtest/gtest.h>

#include <random>

#include "bpa/error.hpp"
#include "bpa/query.hpp"
#include "generators.hpp"

using namespace bpa;

namespace {

StructuredQuery sum_loans() {
  StructuredQuery q;
  q.aggregation = AggKind::Sum;
  q.target = "loan_amount";
  q.filters = {{"credit_score", CmpOp::Gt, std::int64_t{500}}};
  return q;
}

StructuredQuery top3() {
  StructuredQuery q;
  q.aggregation = AggKind::TopK;
  q.k = 3;
  q.by = AggKind::Avg;
  q.target = "loan_amount";
  q.group_by = "borrower";
  q.having = Having{AggKind::Avg, CmpOp::Gt, std::int64_t{10000}};
  return q;
}

}  // namespace

TEST(CanonicalText, SumWithFilter) {
  EXPECT_EQ(to_canonical_text(sum_loans()), "SUM loan_amount WHERE credit_score > 500");
}

TEST(CanonicalText, TopKRoundTrips) {
  auto q = top3();
  EXPECT_EQ(to_canonical_text(q), "TOP 3 AVG loan_amount GROUP BY borrower HAVING AVG > 10000");
  EXPECT_EQ(from_canonical_text(to_canonical_text(q)), q);
}

TEST(CanonicalText, CountWithoutFilters) {
  StructuredQuery q;
  EXPECT_EQ(to_canonical_text(q), "COUNT *");
  EXPECT_EQ(from_canonical_text("COUNT *"), q);
}

TEST(CanonicalText, TextLiteralsAreQuotedAndEscaped) {
  StructuredQuery q;
  q.aggregation = AggKind::List;
  q.filters = {{"applicant", CmpOp::Eq, std::string("O'Brien \\ Co")}};
  auto text = to_canonical_text(q);
  EXPECT_EQ(text, R"(LIST * WHERE applicant = 'O\'Brien \\ Co')");
  EXPECT_EQ(from_canonical_text(text), q);
}

TEST(CanonicalText, RealLiteralKeepsItsType) {
  StructuredQuery q;
  q.filters = {{"score", CmpOp::Ge, 500.0}};
  auto back = from_canonical_text(to_canonical_text(q));
  EXPECT_TRUE(std::holds_alternative<double>(back.filters[0].literal));
  EXPECT_EQ(back, q);
}

TEST(CanonicalText, PersistedFormIsVersioned) {
  auto text = to_persisted_text(sum_loans());
  EXPECT_EQ(text.substr(0, 3), "v1:");
  EXPECT_EQ(from_persisted_text(text), sum_loans());
  try {
    from_persisted_text("v2:COUNT *");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidQuery);
  }
}

TEST(CanonicalText, RejectsMalformedInput) {
  for (const char* bad : {"", "SUMM x", "TOP x AVG y GROUP BY z", "COUNT * WHERE a >", "COUNT * junk",
                          "TOP 3 AVG amount", "LIST * WHERE a = 'open"}) {
    EXPECT_THROW(from_canonical_text(bad), Error) << bad;
  }
}

TEST(CanonicalText, RoundTripProperty) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    auto q = gen::random_query(rng);
    ASSERT_NO_THROW(validate(q)) << to_canonical_text(q);
    EXPECT_EQ(from_canonical_text(to_canonical_text(q)), q) << to_canonical_text(q);
  }
}

TEST(QueryValidation, StructuralInvariants) {
  StructuredQuery topk;
  topk.aggregation = AggKind::TopK;
  topk.k = 2;
  EXPECT_THROW(validate(topk), Error);  // TopK without group_by
  topk.group_by = "borrower";
  EXPECT_NO_THROW(validate(topk));

  StructuredQuery sum;
  sum.aggregation = AggKind::Sum;
  EXPECT_THROW(validate(sum), Error);  // SUM needs a column
}

TEST(QueryBinding, ChecksColumnsAndLiteralTypes) {
  Schema s({{"loan_amount", ColumnType::Integer}, {"borrower", ColumnType::Text}});
  auto q = sum_loans();
  try {
    bind(q, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BindError);
  }
  StructuredQuery text_vs_number;
  text_vs_number.filters = {{"borrower", CmpOp::Gt, std::int64_t{3}}};
  EXPECT_THROW(bind(text_vs_number, s), Error);
  StructuredQuery sum_text;
  sum_text.aggregation = AggKind::Sum;
  sum_text.target = "borrower";
  EXPECT_THROW(bind(sum_text, s), Error);
}
