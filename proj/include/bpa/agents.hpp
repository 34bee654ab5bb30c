#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "bpa/alerts.hpp"
#include "bpa/contracts.hpp"
#include "bpa/datastore.hpp"
#include "bpa/nlq.hpp"
#include "bpa/process.hpp"

namespace bpa::agents {

/// Backing services the built-in agents act upon. Members an agent does not
/// use may be null.
struct Services {
  std::shared_ptr<Datastore> store;
  std::shared_ptr<ProcessEngine> engine;
  std::shared_ptr<AlertRegistry> alerts;
  std::shared_ptr<SideEffectLedger> ledger;
  // Large List results are exported here as CSV files.
  std::filesystem::path results_dir = "results";
};

// Vocabularies for the two fixture tables.
nlq::Lexicon loans_lexicon(const Schema& schema);
nlq::Lexicon travel_lexicon(const Schema& schema);

// List results with more rows than this are exported and linked.
inline constexpr std::size_t kListInlineLimit = 10;

// Formats a number the way the reply templates show it: integral values
// without a fraction ("584917"), others with up to two decimals.
std::string plain_number(double v);

/// Greetings, identity and small talk from a static dialog tree. No acts.
std::shared_ptr<AgentPipeline> make_chitchat_agent(const std::string& assistant_name, const std::string& capabilities,
                                                   std::shared_ptr<SideEffectLedger> ledger = nullptr);

/// Employee directory lookup, then an accepted-paper count.
std::shared_ptr<AgentPipeline> make_publication_query_agent(const Services& s);

/// NLQ over one table. Writes the result under the plottable context key.
std::shared_ptr<AgentPipeline> make_data_query_agent(const Services& s, nlq::Lexicon lexicon);

/// Submit / approve / reject / send back / resubmit through the process engine.
std::shared_ptr<AgentPipeline> make_task_execution_agent(const Services& s);

/// Flight estimates from the deterministic stub pricing model.
std::shared_ptr<AgentPipeline> make_travel_estimation_agent(const Services& s);

/// Bar or doughnut chart of the plottable context entry.
std::shared_ptr<AgentPipeline> make_visualization_agent(const Services& s);

/// Alert creation, listing, deletion and channel preference. The condition is
/// parsed with whichever lexicon covers it best.
std::shared_ptr<AgentPipeline> make_alerting_agent(const Services& s, std::vector<nlq::Lexicon> lexicons);

/// Slot-filling loan assessment dialog.
std::shared_ptr<AgentPipeline> make_loan_rules_agent(const Services& s);

/// Ingests delimited loan files into the loans table.
std::shared_ptr<AgentPipeline> make_document_ingest_agent(const Services& s);

// Context key of the loan dialog and the order its slots are asked in.
inline constexpr std::string_view kLoanDialogKey = "loan_rules.dialog";
const std::vector<std::string>& loan_slots();
const std::string& loan_question(const std::string& slot);

// ---------------------------------------------------------------------------
// Stub pricing

// Round-trip economy fare in whole dollars for IATA codes and yyyy/mm/dd or
// yyyy-mm-dd dates. Pure: the same route and dates always price the same.
double stub_fare(std::string_view origin, std::string_view destination, std::string_view depart,
                 std::string_view ret);
// Whole days between two dates (either separator). Throws ValidationError.
int days_between(std::string_view from, std::string_view to);
inline constexpr double kHotelNightly = 180.0;

// ---------------------------------------------------------------------------
// Charts

enum class ChartKind { Bar, Doughnut };

struct ChartData {
  std::vector<std::string> labels;
  std::vector<double> values;
  std::string caption;
};

// Binary PPM (P6). Bars and doughnut segments cycle through chart_palette().
std::string render_chart(const ChartData& data, ChartKind kind, int width = 640, int height = 400);
const std::vector<std::uint32_t>& chart_palette();
inline constexpr std::uint32_t kChartBackground = 0xFFFFFF;
inline constexpr std::uint32_t kChartAxis = 0x333333;

// Chart data from a plottable entry. `column` picks the column to plot by
// for row results (empty: the first numeric column). Throws ValidationError
// when nothing numeric can be plotted.
ChartData chart_data(const nlohmann::json& plottable, const std::string& column);

}  // namespace bpa::agents
