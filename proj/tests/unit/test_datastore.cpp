#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "bpa/datastore.hpp"
#include "bpa/error.hpp"
#include "generators.hpp"
#include "query_oracle.hpp"

using namespace bpa;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("bpa_ds_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Schema small_schema() { return Schema({{"name", ColumnType::Text}, {"amount", ColumnType::Integer}}); }

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::InvalidUtterance;
}

}  // namespace

TEST(QueryEngine, CountOverEmptyTableIsZero) {
  Table t("t", small_schema());
  StructuredQuery q;
  auto r = execute_query(q, t);
  ASSERT_EQ(r.shape, QueryResult::Shape::Scalar);
  EXPECT_EQ(*r.scalar, 0.0);
}

TEST(QueryEngine, AverageOverNoRowsIsAnError) {
  Table t("t", small_schema());
  StructuredQuery q;
  q.aggregation = AggKind::Avg;
  q.target = "amount";
  EXPECT_EQ(code_of([&] { execute_query(q, t); }), ErrorCode::EmptyAggregation);
  q.aggregation = AggKind::Sum;
  EXPECT_EQ(*execute_query(q, t).scalar, 0.0);
}

TEST(QueryEngine, TopKOrdersDescendingWithKeyTieBreak) {
  Table t("t", small_schema());
  RowId id = 1;
  for (auto [n, a] : std::vector<std::pair<std::string, std::int64_t>>{
           {"b", 10}, {"a", 10}, {"c", 30}, {"d", 1}, {"c", 10}}) {
    t.insert(id++, {n, a});
  }
  StructuredQuery q;
  q.aggregation = AggKind::TopK;
  q.k = 3;
  q.by = AggKind::Sum;
  q.target = "amount";
  q.group_by = "name";
  auto r = execute_query(q, t);
  ASSERT_EQ(r.groups.size(), 3u);
  EXPECT_EQ(std::get<std::string>(r.groups[0].first), "c");
  EXPECT_EQ(r.groups[0].second, 40.0);
  EXPECT_EQ(std::get<std::string>(r.groups[1].first), "a");
  EXPECT_EQ(std::get<std::string>(r.groups[2].first), "b");
}

TEST(QueryEngine, MatchesFullScanOracleOnRandomInputs) {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    auto table = gen::random_table(rng);
    auto q = gen::random_query(rng);
    auto want = oracle::evaluate(q, table);
    try {
      auto got = execute_query(q, table);
      EXPECT_EQ(oracle::compare(want, got), "") << to_canonical_text(q);
      ++checked;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::EmptyAggregation) << to_canonical_text(q);
      EXPECT_EQ(want.kind, oracle::Answer::Error) << to_canonical_text(q);
    }
  }
  EXPECT_GT(checked, 250);
}

TEST(Datastore, LoanFixtureMatchesOracle) {
  auto store = Datastore::in_memory();
  ASSERT_TRUE(store->load_csv("loans", fs::path(BPA_FIXTURE_DIR) / "loans.csv"));
  EXPECT_FALSE(store->load_csv("loans", fs::path(BPA_FIXTURE_DIR) / "loans.csv"));
  auto table = store->snapshot("loans");

  StructuredQuery sum;
  sum.aggregation = AggKind::Sum;
  sum.target = "loan_amount";
  sum.filters = {{"credit_score", CmpOp::Gt, std::int64_t{500}}};
  auto got = store->query(sum, "loans");
  EXPECT_EQ(oracle::compare(oracle::evaluate(sum, table), got), "");

  StructuredQuery top;
  top.aggregation = AggKind::TopK;
  top.k = 3;
  top.by = AggKind::Avg;
  top.target = "loan_amount";
  top.group_by = "borrower";
  top.having = Having{AggKind::Avg, CmpOp::Gt, std::int64_t{10000}};
  EXPECT_EQ(oracle::compare(oracle::evaluate(top, table), store->query(top, "loans")), "");
}

TEST(Datastore, MutationsEmitGapFreeEvents) {
  auto store = Datastore::in_memory();
  store->create_table("t", small_schema());
  auto e1 = store->insert("t", {std::string("a"), std::int64_t{1}});
  EXPECT_EQ(e1.seq, 1u);
  EXPECT_EQ(e1.kind, ChangeKind::Insert);
  EXPECT_EQ(store->snapshot("t").size(), 1u);
  auto e2 = store->mutate("t", UpdateOp{e1.row_id, {{"amount", std::int64_t{5}}}});
  EXPECT_EQ(e2.seq, 2u);
  EXPECT_EQ(std::get<std::int64_t>(store->snapshot("t").at(e1.row_id)[1]), 5);
  auto e3 = store->mutate("t", DeleteOp{e1.row_id});
  EXPECT_EQ(e3.seq, 3u);
  EXPECT_FALSE(e3.row.has_value());
  // Row ids are never reused.
  auto e4 = store->insert("t", {std::string("b"), std::int64_t{2}});
  EXPECT_NE(e4.row_id, e1.row_id);
}

TEST(Datastore, MutationErrors) {
  auto store = Datastore::in_memory();
  store->create_table("t", small_schema());
  EXPECT_EQ(code_of([&] { store->mutate("t", UpdateOp{42, {{"amount", std::int64_t{1}}}}); }),
            ErrorCode::UnknownRow);
  EXPECT_EQ(code_of([&] { store->insert("nope", {}); }), ErrorCode::UnknownTable);
  EXPECT_EQ(code_of([&] { store->insert("t", {std::int64_t{1}, std::int64_t{1}}); }),
            ErrorCode::SchemaViolation);
  EXPECT_EQ(code_of([&] { store->insert("t", {std::string("x")}); }), ErrorCode::SchemaViolation);
  EXPECT_EQ(code_of([&] { store->create_table("t", small_schema()); }), ErrorCode::DuplicateTable);
  EXPECT_EQ(store->last_seq(), 0u);
}

TEST(Datastore, ConcurrentInsertsGetDistinctConsecutiveSeqs) {
  auto store = Datastore::in_memory();
  store->create_table("t", small_schema());
  std::vector<std::thread> threads;
  std::vector<std::uint64_t> seqs(8);
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] { seqs[i] = store->insert("t", {std::string("x"), std::int64_t{i}}).seq; });
  }
  for (auto& t : threads) t.join();
  std::sort(seqs.begin(), seqs.end());
  for (std::size_t i = 0; i < seqs.size(); ++i) EXPECT_EQ(seqs[i], i + 1);
}

TEST(Datastore, SubscriptionReplayTailAndFanOut) {
  auto store = Datastore::in_memory();
  store->create_table("t", small_schema());
  for (int i = 0; i < 3; ++i) store->insert("t", {std::string("x"), std::int64_t{i}});

  auto replay = store->subscribe(1);
  auto got = replay.poll();
  ASSERT_EQ(got.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(got[i].seq, i + 1);

  auto tail_a = store->subscribe(store->last_seq() + 1);
  auto tail_b = store->subscribe(store->last_seq() + 1);
  EXPECT_FALSE(tail_a.next(std::chrono::milliseconds(10)));
  std::thread writer([&] { store->insert("t", {std::string("y"), std::int64_t{9}}); });
  auto a = tail_a.next(std::chrono::seconds(5));
  auto b = tail_b.next(std::chrono::seconds(5));
  writer.join();
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->seq, 4u);
  EXPECT_EQ(*a, *b);
  EXPECT_EQ(code_of([&] { store->subscribe(store->last_seq() + 2); }), ErrorCode::ValidationError);
}

TEST(Datastore, RecoversFromJournalAfterRestart) {
  auto dir = temp_dir("restart");
  std::uint64_t hash = 0;
  {
    auto store = Datastore::open(dir);
    store->create_table("t", small_schema());
    for (int i = 0; i < 20; ++i) store->insert("t", {std::string("r") + std::to_string(i), std::int64_t{i}});
    store->mutate("t", UpdateOp{3, {{"amount", std::int64_t{300}}}});
    store->mutate("t", DeleteOp{4});
    hash = store->state_hash();
  }
  auto store = Datastore::open(dir);
  EXPECT_EQ(store->last_seq(), 22u);
  EXPECT_EQ(store->state_hash(), hash);
  auto next = store->insert("t", {std::string("new"), std::int64_t{1}});
  EXPECT_EQ(next.seq, 23u);
  EXPECT_EQ(next.row_id, 21u);
  auto events = store->subscribe(1).poll();
  EXPECT_EQ(events.size(), 23u);
}

TEST(Datastore, TornTailRecordIsDropped) {
  auto dir = temp_dir("torn");
  {
    auto store = Datastore::open(dir);
    store->create_table("t", small_schema());
    store->insert("t", {std::string("a"), std::int64_t{1}});
    store->insert("t", {std::string("b"), std::int64_t{2}});
  }
  auto journal = dir / "journal.log";
  fs::resize_file(journal, fs::file_size(journal) - 5);
  auto store = Datastore::open(dir);
  EXPECT_EQ(store->last_seq(), 1u);
  EXPECT_EQ(store->snapshot("t").size(), 1u);
  EXPECT_EQ(store->insert("t", {std::string("c"), std::int64_t{3}}).seq, 2u);
}

TEST(Datastore, CorruptMiddleRecordIsReported) {
  auto dir = temp_dir("corrupt");
  {
    auto store = Datastore::open(dir);
    store->create_table("t", small_schema());
    store->insert("t", {std::string("a"), std::int64_t{1}});
    store->insert("t", {std::string("b"), std::int64_t{2}});
  }
  auto journal = dir / "journal.log";
  {
    std::fstream f(journal, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(12);
    f.put('#');
  }
  EXPECT_EQ(code_of([&] { Datastore::open(dir); }), ErrorCode::JournalCorrupt);
}

TEST(Datastore, MissingOrBadFixtureNamesTheFile) {
  auto store = Datastore::in_memory();
  try {
    store->load_csv("x", "/nonexistent/x.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FixtureError);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/x.csv"), std::string::npos);
  }
  auto dir = temp_dir("badcsv");
  std::ofstream(dir / "bad.csv") << "a:integer,b:text\n1,x\nnot-a-number,y\n";
  try {
    store->load_csv("bad", dir / "bad.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos) << e.what();
  }
}
