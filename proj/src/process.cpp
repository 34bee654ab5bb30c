#include "bpa/process.hpp"

#include <algorithm>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa {

std::string_view to_string(AppState s) noexcept {
  switch (s) {
    case AppState::Draft: return "Draft";
    case AppState::ManagerReview: return "ManagerReview";
    case AppState::DirectorReview: return "DirectorReview";
    case AppState::Approved: return "Approved";
    case AppState::Rejected: return "Rejected";
    case AppState::SentBack: return "SentBack";
  }
  return "?";
}

const std::vector<AppState>& all_app_states() {
  static const std::vector<AppState> all = {AppState::Draft,    AppState::ManagerReview, AppState::DirectorReview,
                                            AppState::Approved, AppState::Rejected,      AppState::SentBack};
  return all;
}

AppState app_state_from_string(std::string_view s) {
  for (AppState a : all_app_states()) {
    if (to_string(a) == s) return a;
  }
  throw Error(ErrorCode::ValidationError, "unknown application state '" + std::string(s) + "'");
}

bool is_terminal(AppState s) noexcept { return s == AppState::Approved || s == AppState::Rejected; }

std::string_view to_string(ProcessAction a) noexcept {
  switch (a) {
    case ProcessAction::Approve: return "approve";
    case ProcessAction::Reject: return "reject";
    case ProcessAction::SendBack: return "send_back";
    case ProcessAction::Resubmit: return "resubmit";
  }
  return "?";
}

const std::vector<ProcessAction>& all_process_actions() {
  static const std::vector<ProcessAction> all = {ProcessAction::Approve, ProcessAction::Reject,
                                                 ProcessAction::SendBack, ProcessAction::Resubmit};
  return all;
}

const std::vector<Transition>& transition_table() {
  using A = ProcessAction;
  using S = AppState;
  static const std::vector<Transition> table = {
      {S::ManagerReview, A::Approve, Persona::Manager, S::DirectorReview},
      {S::ManagerReview, A::Reject, Persona::Manager, S::Rejected},
      {S::ManagerReview, A::SendBack, Persona::Manager, S::SentBack},
      {S::DirectorReview, A::Approve, Persona::Director, S::Approved},
      {S::DirectorReview, A::Reject, Persona::Director, S::Rejected},
      {S::DirectorReview, A::SendBack, Persona::Director, S::SentBack},
      {S::SentBack, A::Resubmit, Persona::Employee, S::ManagerReview},
  };
  return table;
}

namespace {

enum Col { kAppId, kApplicant, kConference, kStart, kEnd, kAmount, kState, kHistory, kComment };

std::string history_text(const std::vector<HistoryEntry>& h) {
  std::string out;
  for (const auto& e : h) {
    if (!out.empty()) out += ';';
    out += std::string(to_string(e.actor)) + ":" + e.action + "@" + e.at;
  }
  return out;
}

std::vector<HistoryEntry> parse_history(const std::string& text) {
  std::vector<HistoryEntry> out;
  for (const auto& item : util::split(text, ';')) {
    if (item.empty()) continue;
    auto colon = item.find(':');
    auto at = item.find('@', colon == std::string::npos ? 0 : colon);
    if (colon == std::string::npos || at == std::string::npos) {
      throw Error(ErrorCode::ValidationError, "malformed history entry '" + item + "'");
    }
    out.push_back({persona_from_string(item.substr(0, colon)), item.substr(colon + 1, at - colon - 1), item.substr(at + 1)});
  }
  return out;
}

std::string text_of(const Value& v) { return is_null(v) ? std::string() : display(v); }

ProcessInstance from_row(const std::vector<Value>& r) {
  ProcessInstance p;
  p.app_id = std::get<std::int64_t>(r[kAppId]);
  p.applicant = text_of(r[kApplicant]);
  p.conference = text_of(r[kConference]);
  p.start_date = text_of(r[kStart]);
  p.end_date = text_of(r[kEnd]);
  p.requested_amount = as_number(r[kAmount]).value_or(0);
  p.state = app_state_from_string(text_of(r[kState]));
  p.history = parse_history(text_of(r[kHistory]));
  p.comment = text_of(r[kComment]);
  return p;
}

}  // namespace

Schema ProcessEngine::table_schema() {
  return Schema({{"app_id", ColumnType::Integer},
                 {"applicant", ColumnType::Text},
                 {"conference", ColumnType::Text},
                 {"start_date", ColumnType::Date},
                 {"end_date", ColumnType::Date},
                 {"requested_amount", ColumnType::Real},
                 {"state", ColumnType::Text},
                 {"history", ColumnType::Text},
                 {"comment", ColumnType::Text}});
}

ProcessEngine::ProcessEngine(std::shared_ptr<Datastore> store, std::string table)
    : store_(std::move(store)), table_(std::move(table)) {
  if (!store_->has_table(table_)) store_->create_table(table_, table_schema());
  if (store_->schema(table_) != table_schema()) {
    throw Error(ErrorCode::SchemaViolation, "table '" + table_ + "' does not have the application schema");
  }
}

ProcessInstance ProcessEngine::submit(const Submission& s) {
  if (!(s.requested_amount > 0)) throw Error(ErrorCode::ValidationError, "requested amount must be positive");
  if (util::trim(s.applicant).empty()) throw Error(ErrorCode::ValidationError, "applicant is required");
  if (!s.start_date.empty() && !s.end_date.empty() && s.end_date < s.start_date) {
    throw Error(ErrorCode::ValidationError, "travel ends before it starts");
  }
  std::lock_guard lock(submit_mu_);
  std::int64_t next = 1;
  const auto snap = store_->snapshot(table_);
  for (const auto& [id, row] : snap.rows()) next = std::max(next, std::get<std::int64_t>(row[kAppId]) + 1);

  ProcessInstance p;
  p.app_id = next;
  p.applicant = s.applicant;
  p.conference = s.conference;
  p.start_date = s.start_date;
  p.end_date = s.end_date;
  p.requested_amount = s.requested_amount;
  p.state = AppState::ManagerReview;
  p.history.push_back({Persona::Employee, "submit", util::utc_timestamp()});
  auto opt = [](const std::string& v) { return v.empty() ? Value{} : Value{v}; };
  store_->insert(table_, {p.app_id, p.applicant, p.conference, opt(p.start_date), opt(p.end_date), p.requested_amount,
                          std::string(to_string(p.state)), history_text(p.history), Value{}});
  return p;
}

std::optional<std::pair<RowId, ProcessInstance>> ProcessEngine::locate(std::int64_t app_id) const {
  const auto snap = store_->snapshot(table_);
  for (const auto& [id, row] : snap.rows()) {
    if (std::get<std::int64_t>(row[kAppId]) == app_id) return std::make_pair(id, from_row(row));
  }
  return std::nullopt;
}

ProcessInstance ProcessEngine::transition(std::int64_t app_id, Persona actor, ProcessAction action,
                                          std::string comment) {
  std::lock_guard lock(stripe(app_id));
  auto found = locate(app_id);
  if (!found) throw Error(ErrorCode::UnknownApplication, "no application " + std::to_string(app_id));
  auto& [row_id, p] = *found;
  if (is_terminal(p.state)) {
    throw Error(ErrorCode::TerminalState, "application " + std::to_string(app_id) + " is already " +
                                              std::string(to_string(p.state)));
  }
  const auto& table = transition_table();
  auto matches_state = [&](const Transition& t) { return t.from == p.state && t.action == action; };
  auto it = std::find_if(table.begin(), table.end(), matches_state);
  if (it == table.end()) {
    throw Error(ErrorCode::IllegalTransition, "cannot " + std::string(to_string(action)) + " an application in " +
                                                  std::string(to_string(p.state)));
  }
  auto allowed = std::find_if(it, table.end(), [&](const Transition& t) { return matches_state(t) && t.actor == actor; });
  if (allowed == table.end()) {
    throw Error(ErrorCode::UnauthorizedActor, std::string(to_string(actor)) + " cannot " +
                                                  std::string(to_string(action)) + " in " +
                                                  std::string(to_string(p.state)));
  }
  p.state = allowed->to;
  p.history.push_back({actor, std::string(to_string(action)), util::utc_timestamp()});
  std::map<std::string, Value> changes = {{"state", std::string(to_string(p.state))},
                                          {"history", history_text(p.history)}};
  if (!comment.empty()) {
    p.comment = comment;
    changes["comment"] = comment;
  }
  store_->mutate(table_, UpdateOp{row_id, std::move(changes)});
  return p;
}

ProcessInstance ProcessEngine::get(std::int64_t app_id) const {
  auto found = locate(app_id);
  if (!found) throw Error(ErrorCode::UnknownApplication, "no application " + std::to_string(app_id));
  return found->second;
}

std::vector<ProcessInstance> ProcessEngine::list() const {
  std::vector<ProcessInstance> out;
  const auto snap = store_->snapshot(table_);
  for (const auto& [id, row] : snap.rows()) out.push_back(from_row(row));
  return out;
}

std::optional<ProcessInstance> ProcessEngine::find(std::string_view applicant, std::string_view conference) const {
  const auto who = util::to_lower(applicant);
  const auto conf = util::to_lower(conference);
  std::optional<ProcessInstance> best;
  for (auto& p : list()) {
    const auto name = util::to_lower(p.applicant);
    // "Jack" finds "Jack Brown".
    if (name != who && !name.starts_with(who + " ")) continue;
    if (!conf.empty() && util::to_lower(p.conference) != conf) continue;
    if (!best || (is_terminal(best->state) && !is_terminal(p.state)) ||
        (is_terminal(best->state) == is_terminal(p.state) && p.app_id > best->app_id)) {
      best = std::move(p);
    }
  }
  return best;
}

Assessment assess_loan(const LoanAssessmentInput& in) {
  if (in.term_months < 1) throw Error(ErrorCode::ValidationError, "loan term must be at least one month");
  if (in.credit_score < 0) throw Error(ErrorCode::ValidationError, "credit score cannot be negative");
  if (in.credit_score < 500) {
    return {Risk::HighRisk, "credit score " + std::to_string(in.credit_score) + " is below 500"};
  }
  const double payment = in.amount / static_cast<double>(in.term_months);
  const double cap = 0.35 * (in.yearly_salary / 12.0);
  if (payment > cap) {
    return {Risk::HighRisk, "monthly payment " + util::format_real(payment) + " exceeds 35% of monthly salary (" +
                                util::format_real(cap) + ")"};
  }
  return {Risk::LowRisk, "credit score and payment are within limits"};
}

}  // namespace bpa
