#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bpa/contracts.hpp"
#include "bpa/datastore.hpp"

namespace bpa {

enum class AppState { Draft, ManagerReview, DirectorReview, Approved, Rejected, SentBack };
std::string_view to_string(AppState s) noexcept;
AppState app_state_from_string(std::string_view s);
const std::vector<AppState>& all_app_states();
bool is_terminal(AppState s) noexcept;

enum class ProcessAction { Approve, Reject, SendBack, Resubmit };
std::string_view to_string(ProcessAction a) noexcept;
const std::vector<ProcessAction>& all_process_actions();

struct Transition {
  AppState from;
  ProcessAction action;
  Persona actor;
  AppState to;
};

// ManagerReview and DirectorReview accept Approve/Reject/SendBack from the
// reviewing persona; SentBack returns to ManagerReview on the employee's
// Resubmit.
const std::vector<Transition>& transition_table();

struct HistoryEntry {
  Persona actor;
  std::string action;
  std::string at;

  bool operator==(const HistoryEntry&) const = default;
};

struct ProcessInstance {
  std::int64_t app_id = 0;
  std::string applicant;
  std::string conference;
  std::string start_date;  // yyyy-mm-dd
  std::string end_date;
  double requested_amount = 0;
  AppState state = AppState::Draft;
  std::vector<HistoryEntry> history;
  std::string comment;

  bool operator==(const ProcessInstance&) const = default;
};

struct Submission {
  std::string applicant;
  std::string conference;
  std::string start_date;
  std::string end_date;
  double requested_amount = 0;
};

/// Travel-preapproval applications stored as rows of a datastore table, so
/// queries and alerts see every transition as an ordinary change event.
class ProcessEngine {
 public:
  static Schema table_schema();

  // Creates the table when the store does not have it yet.
  explicit ProcessEngine(std::shared_ptr<Datastore> store, std::string table = "travel_requests");

  // Throws ValidationError for a non-positive amount or reversed dates.
  ProcessInstance submit(const Submission& s);

  /// Applies one row of the transition table. Checks run in order: unknown
  /// application, terminal state, no row for (state, action) ->
  /// IllegalTransition, wrong persona -> UnauthorizedActor. A rejected call
  /// leaves the row untouched.
  ProcessInstance transition(std::int64_t app_id, Persona actor, ProcessAction action, std::string comment = {});

  ProcessInstance get(std::int64_t app_id) const;
  std::vector<ProcessInstance> list() const;
  // Most recent application by `applicant` (case-insensitive), optionally for
  // one conference, preferring non-terminal ones.
  std::optional<ProcessInstance> find(std::string_view applicant, std::string_view conference = {}) const;

  std::uint64_t state_hash() const { return store_->table_hash(table_); }
  const std::string& table() const noexcept { return table_; }

 private:
  std::optional<std::pair<RowId, ProcessInstance>> locate(std::int64_t app_id) const;
  std::mutex& stripe(std::int64_t app_id) { return stripes_[static_cast<std::size_t>(app_id) % stripes_.size()]; }

  std::shared_ptr<Datastore> store_;
  std::string table_;
  std::mutex submit_mu_;
  std::array<std::mutex, 16> stripes_;
};

struct LoanAssessmentInput {
  double amount = 0;
  std::int64_t credit_score = 0;
  double yearly_salary = 0;
  std::int64_t term_months = 1;
};

enum class Risk { LowRisk, HighRisk };

struct Assessment {
  Risk risk = Risk::LowRisk;
  std::string explanation;
};

// HighRisk iff credit_score < 500 or the monthly payment exceeds 35% of the
// monthly salary. Throws ValidationError for a non-positive term or negative score.
Assessment assess_loan(const LoanAssessmentInput& in);

}  // namespace bpa
