#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "bpa/assistant.hpp"
#include "bpa/error.hpp"
#include "bpa/util.hpp"

using namespace bpa;
namespace fs = std::filesystem;

namespace {

struct Loan {
  std::string borrower;
  double amount, credit, income;
};

// Independent scan of the shipped CSV.
std::vector<Loan> loan_rows() {
  std::ifstream in(fs::path(BPA_FIXTURE_DIR) / "loans.csv");
  std::string line;
  std::getline(in, line);
  std::vector<Loan> out;
  while (std::getline(in, line)) {
    auto c = util::split(line, ',');
    out.push_back({c[1], std::stod(c[2]), std::stod(c[3]), std::stod(c[4])});
  }
  return out;
}

AssistantOptions options(const std::string& kind) {
  AssistantOptions o;
  o.config.assistant = kind;
  o.fixtures = BPA_FIXTURE_DIR;
  o.data_dir = fs::temp_directory_path() / ("bpa_agents_" + util::random_id(4));
  o.run_daemon = false;
  return o;
}

struct Harness {
  explicit Harness(const std::string& kind) : bot(options(kind)) {}

  std::shared_ptr<Agent> agent(const std::string& name) {
    for (auto& a : bot.orchestrator().agents()) {
      if (a->manifest().name == name) return a;
    }
    throw std::runtime_error("no agent " + name);
  }

  AgentResponse run(const std::string& name, const std::string& text, Mode mode = Mode::Execute,
                    Persona persona = Persona::Manager, const std::string& user = "jdoe") {
    Utterance u{text, user, persona, ++turn};
    ctx.turn = turn;
    auto r = agent(name)->run(u, ctx, mode);
    if (mode == Mode::Execute && !r.declined) ctx = r.updated_context;
    return r;
  }

  // Full orchestrated turn; returns (agent, text).
  std::pair<std::string, std::string> say(const std::string& text, Persona persona = Persona::Manager,
                                          const std::string& user = "jdoe") {
    Utterance u{text, user, persona, ++turn};
    auto r = bot.turn(u, ctx);
    ctx = r.context;
    last = r;
    if (r.responses.empty()) return {"", ""};
    return {r.responses.front().agent, r.responses.front().response.text.value_or("")};
  }

  Assistant bot;
  TurnContext ctx{"s1", 0, {}};
  std::int64_t turn = 0;
  TurnResult last;
};

std::size_t distinct_colors(const std::string& ppm, std::set<std::uint32_t>* out = nullptr) {
  std::size_t pos = 0;
  for (int fields = 0; fields < 4; ++fields) {
    pos = ppm.find_first_of(" \n", pos) + 1;
  }
  std::set<std::uint32_t> colors;
  for (std::size_t i = pos; i + 2 < ppm.size(); i += 3) {
    colors.insert((static_cast<unsigned char>(ppm[i]) << 16) | (static_cast<unsigned char>(ppm[i + 1]) << 8) |
                  static_cast<unsigned char>(ppm[i + 2]));
  }
  if (out) *out = colors;
  return colors.size();
}

}  // namespace

TEST(Chitchat, DialogTree) {
  Harness h("travelbot");
  auto r = h.run("chitchat", "Hello");
  EXPECT_EQ(r.text, "Hi there");
  EXPECT_DOUBLE_EQ(r.confidence, 0.5);
  EXPECT_NE(h.run("chitchat", "who are you").text->find("Travelbot"), std::string::npos);
  EXPECT_NE(h.run("chitchat", "how can you help me").text->find("I can help you with"), std::string::npos);
  EXPECT_FALSE(h.run("chitchat", "tell me a joke").declined);
  EXPECT_EQ(h.run("chitchat", "goodbye").text, "Goodbye! Have a great day.");
  EXPECT_TRUE(h.run("chitchat", "sum of loans").declined);
  auto p1 = h.run("chitchat", "Hello", Mode::Preview);
  auto p2 = h.run("chitchat", "Hello", Mode::Preview);
  EXPECT_EQ(p1.text, p2.text);
  EXPECT_EQ(p1.intent, p2.intent);
  EXPECT_EQ(p1.confidence, p2.confidence);
}

TEST(PublicationQuery, CountsAcceptedPapers) {
  Harness h("travelbot");
  auto r = h.run("publication_query", "Retrieve the number of accepted papers authored by John Smith");
  EXPECT_EQ(r.text, "The number of accepted papers by John Smith is 7");
  EXPECT_DOUBLE_EQ(r.confidence, 1.0);
  EXPECT_EQ(h.run("publication_query", "How many papers did Alice Zero publish").text,
            "The number of accepted papers by Alice Zero is 0");
  auto missing = h.run("publication_query", "Retrieve the number of accepted papers authored by Bob Nobody");
  EXPECT_FALSE(missing.declined);
  EXPECT_EQ(missing.text, "I could not find an employee named Bob Nobody in the directory.");
  EXPECT_LT(missing.confidence, 0.2);
}

TEST(DataQuery, LoanSumMatchesOracle) {
  Harness h("loanbot");
  double sum = 0;
  for (const auto& l : loan_rows()) sum += l.credit > 500 ? l.amount : 0;
  auto r = h.run("data_query", "What is the total loan amount for borrowers with credit score more than 500?");
  EXPECT_EQ(r.text, "The sum value is " + util::format_real(sum));
  ASSERT_TRUE(h.ctx.find("plottable"));
  EXPECT_EQ(h.ctx.find("plottable")->ttl_turns, 3);
}

TEST(DataQuery, TopThreeAveragesMatchOracle) {
  Harness h("loanbot");
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& l : loan_rows()) {
    acc[l.borrower].first += l.amount;
    acc[l.borrower].second += 1;
  }
  std::vector<std::pair<double, std::string>> avgs;
  for (const auto& [b, sc] : acc) {
    if (sc.first / sc.second > 10000) avgs.push_back({sc.first / sc.second, b});
  }
  std::sort(avgs.begin(), avgs.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::string want = "These are the value: ";
  for (int i = 0; i < 3; ++i) {
    want += (i ? ", " : "") + std::to_string(i + 1) + "). average of " + avgs[i].second + " is " +
            agents::plain_number(avgs[i].first) + "$";
  }
  EXPECT_EQ(h.run("data_query", "Who are the top 3 borrowers with average amount more than 10000").text, want);
  EXPECT_EQ(want,
            "These are the value: 1). average of J. Smith is 584917$, 2). average of V. Doe is 575692$, 3). average of "
            "Y. Doe is 557615$");
}

TEST(DataQuery, LargeListIsExportedAndLinked) {
  Harness h("loanbot");
  std::size_t n = 0;
  for (const auto& l : loan_rows()) n += l.income > 50000 && l.credit < 150;
  auto r = h.run("data_query", "List all borrowers with yearly income more than 50000 but credit score less than 150");
  ASSERT_TRUE(r.attachment);
  EXPECT_EQ(r.attachment->kind, Attachment::Kind::Link);
  EXPECT_EQ(r.text, "Total records found are " + std::to_string(n) + ". Here is the link: " + r.attachment->data);
  EXPECT_EQ(n, 82u);
  std::ifstream csv(r.attachment->data);
  std::size_t lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, n + 1);

  auto preview = h.run("data_query", "List all borrowers with yearly income more than 60000 but credit score less than 150",
                       Mode::Preview);
  EXPECT_FALSE(fs::exists(preview.attachment->data));
}

TEST(DataQuery, TopWithoutHavingIsATable) {
  Harness h("loanbot");
  auto r = h.run("data_query", "Find the top 5 borrowers in terms of total amount of loans");
  EXPECT_EQ(r.text, "The result for your query is:");
  ASSERT_TRUE(r.attachment);
  EXPECT_EQ(r.attachment->kind, Attachment::Kind::Table);
  EXPECT_EQ(r.attachment->table.rows.size(), 5u);
  EXPECT_EQ(r.attachment->table.columns, (std::vector<std::string>{"borrower", "sum loan_amount"}));
  EXPECT_TRUE(h.run("data_query", "Hello").declined);
}

TEST(DataQuery, TravelRequests) {
  Harness h("travelbot");
  EXPECT_EQ(h.run("data_query", "How many pending travel requests are in my queue?").text, "The count value is 2");
  EXPECT_EQ(h.run("data_query", "How many applications have been submitted by employee Jack Brown?").text,
            "The count value is 1");
}

TEST(TaskExecution, ManagerApprovesAndPreviewIsPure) {
  Harness h("travelbot");
  const auto before = h.bot.world_hash();
  auto preview = h.run("task_execution", "Approve John Smith's request", Mode::Preview);
  EXPECT_EQ(preview.text, "Would approve John Smith's application");
  EXPECT_EQ(h.bot.world_hash(), before);
  EXPECT_EQ(h.bot.services().ledger->size(), 0u);

  auto r = h.run("task_execution", "Approve John Smith's request");
  EXPECT_EQ(r.text, "John Smith's application has been approved");
  EXPECT_EQ(h.bot.services().engine->get(1).state, AppState::DirectorReview);
  EXPECT_EQ(h.bot.services().ledger->size(), 1u);

  auto again = h.run("task_execution", "Approve John Smith's request");
  EXPECT_EQ(again.text, "As a Manager you cannot approve John Smith's application while it is in DirectorReview.");
}

TEST(TaskExecution, PersonaRules) {
  Harness h("travelbot");
  EXPECT_TRUE(h.run("task_execution", "Approve John Smith's request", Mode::Execute, Persona::Employee).declined);
  EXPECT_TRUE(h.run("task_execution", "Approve John Smith's request", Mode::Execute, Persona::LoanOfficer).declined);
  EXPECT_TRUE(h.run("task_execution", "Submit an application to AAAI 2020 for me.", Mode::Execute, Persona::Manager)
                  .declined);
  EXPECT_EQ(h.run("task_execution", "Reject Jack's application to ICML 2019.").text,
            "Jack Brown's application has been rejected");
  EXPECT_EQ(h.bot.services().engine->get(2).state, AppState::Rejected);
}

TEST(TaskExecution, SubmitAutoFillsRequestedAmount) {
  Harness h("travelbot");
  const double want = agents::stub_fare("BOS", "JFK", "2020-02-07", "2020-02-12") + 5 * agents::kHotelNightly + 725.0;
  auto r = h.run("task_execution", "Submit an application to AAAI 2020 for me.", Mode::Execute, Persona::Employee,
                 "jsmith");
  EXPECT_EQ(r.text, "Your application to AAAI 2020 has been submitted with a requested amount of " +
                        agents::plain_number(std::round(want)) +
                        "$ to present \"Orchestrating Skills for Process Automation\"");
  auto apps = h.bot.services().engine->list();
  ASSERT_EQ(apps.size(), 5u);
  EXPECT_EQ(apps.back().applicant, "John Smith");
  EXPECT_DOUBLE_EQ(apps.back().requested_amount, want);
  EXPECT_EQ(apps.back().state, AppState::ManagerReview);
}

TEST(TravelEstimation, StubPricingIsDeterministic) {
  Harness h("travelbot");
  const std::string q = "What is the cheapest flight from BOS to SFO leaving on 2019/12/01 and returning on 2019/12/07?";
  auto a = h.run("travel_estimation", q);
  auto b = h.run("travel_estimation", q);
  const double fare = agents::stub_fare("BOS", "SFO", "2019/12/01", "2019/12/07");
  EXPECT_EQ(a.text, "The cheapest round trip from BOS to SFO leaving on 2019/12/01 and returning on 2019/12/07 costs " +
                        agents::plain_number(fare) + "$");
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(fare, 180.0 + static_cast<double>(util::fnv1a64("BOS-SFO") % 320) + 54.0);
  EXPECT_EQ(h.run("travel_estimation", "What is the cheapest flight from BOS to SFO leaving on 2019/12/01?").text,
            "When would you like to return? Please give the date as yyyy/mm/dd.");
  EXPECT_THROW(agents::days_between("2019/13/01", "2019/12/01"), Error);
}

TEST(Visualization, NoDataAndCharts) {
  Harness h("loanbot");
  EXPECT_EQ(h.run("visualization", "Plot the bar chart per yearly income").text, "There is no data to be plotted.");
  h.run("data_query", "What is the average amount per term");
  auto bar = h.run("visualization", "Plot a bar chart");
  ASSERT_TRUE(bar.attachment);
  EXPECT_EQ(bar.attachment->kind, Attachment::Kind::Image);
  EXPECT_EQ(bar.attachment->data.substr(0, 3), "P6\n");
  auto terms = std::set<std::string>();
  for (const auto& l : loan_rows()) (void)l;
  std::set<std::uint32_t> colors;
  distinct_colors(bar.attachment->data, &colors);
  const auto plottable = h.ctx.find("plottable")->value;
  const auto groups = plottable.at("result").at("groups").size();
  std::size_t bars = 0;
  for (auto c : agents::chart_palette()) bars += colors.count(c);
  EXPECT_EQ(bars, std::min<std::size_t>(groups, agents::chart_palette().size()));
  EXPECT_TRUE(colors.count(agents::kChartBackground));

  auto ring = h.run("visualization", "Draw a doughnut chart");
  EXPECT_NE(ring.attachment->data, bar.attachment->data);
  EXPECT_GT(distinct_colors(ring.attachment->data), 2u);
}

TEST(Visualization, RowsBinnedByNamedColumn) {
  Harness h("loanbot");
  h.run("data_query", "List all borrowers with yearly income more than 50000 but credit score less than 150");
  auto d = agents::chart_data(h.ctx.find("plottable")->value, "yearly_income");
  double total = 0;
  for (double v : d.values) total += v;
  EXPECT_EQ(total, 82);
  EXPECT_LE(d.values.size(), 8u);
  EXPECT_THROW(agents::chart_data(h.ctx.find("plottable")->value, "shoe_size"), Error);
  auto r = h.run("visualization", "Plot the bar chart per yearly income");
  ASSERT_TRUE(r.attachment);
  EXPECT_EQ(r.attachment->caption, "records per yearly_income");
}

TEST(LoanRules, FourSlotDialogEndsHighRisk) {
  Harness h("loanbot");
  auto r = h.run("loan_rules", "Could you process an application requesting a loan of 3000$?");
  EXPECT_EQ(r.text, "What is the credit score?");
  EXPECT_EQ(r.dialog_depth, 1);
  const auto* d = h.ctx.find(std::string(agents::kLoanDialogKey));
  ASSERT_TRUE(d);
  EXPECT_FALSE(d->ttl_turns);
  EXPECT_EQ(d->value.at("pending").size(), 3u);

  EXPECT_EQ(h.run("loan_rules", "Hello").text, "What is the credit score?");
  EXPECT_DOUBLE_EQ(h.run("loan_rules", "Hello", Mode::Preview).confidence, 0.9);
  EXPECT_EQ(h.run("loan_rules", "400").text, "What is the annual salary (in USD)");
  EXPECT_EQ(h.ctx.find(std::string(agents::kLoanDialogKey))->value.at("pending").size(), 2u);
  EXPECT_EQ(h.run("loan_rules", "5000").text, "In how many months will the loan be paid back?");
  EXPECT_EQ(h.run("loan_rules", "12").text, "High risk loan. This loan request should not be approved");
  EXPECT_FALSE(h.ctx.find(std::string(agents::kLoanDialogKey)));
  EXPECT_TRUE(h.run("loan_rules", "12").declined);
}

TEST(LoanRules, LowRiskAndCancel) {
  Harness h("loanbot");
  h.run("loan_rules", "Please assess a loan");
  for (auto v : {"12000", "700", "$90,000"}) h.run("loan_rules", v);
  EXPECT_EQ(h.run("loan_rules", "24").text, "Low risk loan. This loan request can be approved");
  h.run("loan_rules", "Could you process an application requesting a loan of 3000$?");
  EXPECT_EQ(h.run("loan_rules", "cancel").text, "Okay, I have cancelled the loan assessment.");
  EXPECT_FALSE(h.ctx.find(std::string(agents::kLoanDialogKey)));
}

TEST(Alerting, CreateListDelete) {
  Harness h("loanbot");
  const auto utterance = "Alert me when any loan with credit score less than 150 is added";
  auto preview = h.run("alerting", utterance, Mode::Preview, Persona::LoanOfficer, "lee");
  EXPECT_EQ(preview.text, "Would create an alert for COUNT * WHERE credit_score < 150 on loans");
  EXPECT_TRUE(h.bot.services().alerts->list().empty());

  std::size_t low = 0;
  for (const auto& l : loan_rows()) low += l.credit < 150;
  auto r = h.run("alerting", utterance, Mode::Execute, Persona::LoanOfficer, "lee");
  EXPECT_EQ(r.text, "Alert T1 created. I will notify you when COUNT * WHERE credit_score < 150 on loans changes "
                    "(currently " + std::to_string(low) + ").");
  auto triggers = h.bot.services().alerts->list("lee");
  ASSERT_EQ(triggers.size(), 1u);
  EXPECT_EQ(to_canonical_text(triggers[0].query), "COUNT * WHERE credit_score < 150");

  EXPECT_EQ(h.run("alerting", "list my alerts", Mode::Execute, Persona::LoanOfficer, "lee").text,
            "Your alerts: 1). T1: COUNT * WHERE credit_score < 150 on loans via console");
  EXPECT_EQ(h.run("alerting", "list my alerts", Mode::Execute, Persona::LoanOfficer, "someone").text,
            "You have no alerts.");
  EXPECT_EQ(h.run("alerting", "Send my alerts to file", Mode::Execute, Persona::LoanOfficer, "lee").text,
            "Your alerts will be sent via file");
  EXPECT_EQ(h.bot.services().alerts->get("T1")->channel, Channel::File);
  EXPECT_EQ(h.run("alerting", "delete alert T1", Mode::Execute, Persona::LoanOfficer, "other").text,
            "I could not find alert T1.");
  EXPECT_EQ(h.run("alerting", "delete alert T1", Mode::Execute, Persona::LoanOfficer, "lee").text, "Alert T1 deleted");
  EXPECT_TRUE(h.bot.services().alerts->list().empty());
  EXPECT_EQ(h.run("alerting", "Alert me when the weather is nice").text,
            "I could not understand the alert condition. Could you rephrase it?");
}

TEST(DocumentIngest, LoadsDelimitedLoans) {
  Harness h("loanbot");
  auto file = h.bot.options().data_dir / "batch.psv";
  {
    std::ofstream out(file);
    out << "borrower|loan amount|credit_score|yearly_income|term_months\n"
        << "Q. Test|5000|620|48000|24\n"
        << "R. Test|7000|480|52000|36\n";
  }
  const auto before = h.bot.services().store->snapshot("loans").size();
  auto preview = h.run("document_ingest", "Ingest the document " + file.string(), Mode::Preview);
  EXPECT_EQ(preview.text, "Would ingest 2 loan applications from " + file.string());
  EXPECT_EQ(h.bot.services().store->snapshot("loans").size(), before);
  auto r = h.run("document_ingest", "Ingest the document " + file.string());
  EXPECT_EQ(r.text, "Ingested 2 loan applications from " + file.string());
  EXPECT_EQ(h.bot.services().store->snapshot("loans").size(), before + 2);
  EXPECT_EQ(h.run("document_ingest", "Ingest the document /nonexistent/x.csv").text.value().rfind(
                "I could not read that document", 0),
            0u);
}

TEST(Routing, TravelbotReferenceConversation) {
  Harness h("travelbot");
  EXPECT_EQ(h.say("Hello"), std::make_pair(std::string("chitchat"), std::string("Hi there")));
  EXPECT_EQ(h.say("Retrieve the number of accepted papers authored by John Smith"),
            std::make_pair(std::string("publication_query"),
                           std::string("The number of accepted papers by John Smith is 7")));
  EXPECT_EQ(h.say("Approve John Smith's request"),
            std::make_pair(std::string("task_execution"), std::string("John Smith's application has been approved")));
  EXPECT_EQ(h.say("What is the cheapest flight from BOS to SFO leaving on 2019/12/01 and returning on 2019/12/07?")
                .first,
            "travel_estimation");
  EXPECT_EQ(h.say("Alert me when any request with requested amount more than 3000 is added").first, "alerting");
}

TEST(Routing, LoanbotReferenceConversation) {
  Harness h("loanbot");
  const auto officer = Persona::LoanOfficer;
  EXPECT_EQ(h.say("What is the total loan amount for borrowers with credit score more than 500?", officer).first,
            "data_query");
  EXPECT_EQ(h.say("Who are the top 3 borrowers with average amount more than 10000", officer).first, "data_query");
  EXPECT_EQ(h.say("List all borrowers with yearly income more than 50000 but credit score less than 150", officer)
                .first,
            "data_query");
  EXPECT_EQ(h.say("Plot the bar chart per yearly income", officer).first, "visualization");
  ASSERT_TRUE(h.last.responses.front().response.attachment);
  EXPECT_EQ(h.say("Find the top 5 borrowers in terms of total amount of loans", officer).first, "data_query");
  EXPECT_EQ(h.say("Could you process an application requesting a loan of 3000$?", officer),
            std::make_pair(std::string("loan_rules"), std::string("What is the credit score?")));
  EXPECT_EQ(h.say("Hello", officer), std::make_pair(std::string("loan_rules"), std::string("What is the credit score?")));
  EXPECT_EQ(h.say("400", officer).second, "What is the annual salary (in USD)");
  EXPECT_EQ(h.say("5000", officer).second, "In how many months will the loan be paid back?");
  EXPECT_EQ(h.say("12", officer), std::make_pair(std::string("loan_rules"),
                                                 std::string("High risk loan. This loan request should not be approved")));
  EXPECT_EQ(h.say("Alert me when any loan with credit score less than 150 is added", officer).first, "alerting");
  EXPECT_EQ(h.say("Hello", officer).first, "chitchat");
}

TEST(Assistant, MissingFixtureIsNamed) {
  auto o = options("loanbot");
  o.fixtures = fs::temp_directory_path() / "bpa_no_fixtures";
  try {
    Assistant bot(o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FixtureError);
    EXPECT_NE(std::string(e.what()).find("employees.csv"), std::string::npos);
  }
  o.config.assistant = "cookbot";
  EXPECT_THROW(Assistant{o}, Error);
}
