#include "common.hpp"

#include <map>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa::agents {

using namespace detail;
using nlohmann::json;

namespace {

const std::map<std::string, ProcessAction>& actions() {
  static const std::map<std::string, ProcessAction> m = {{"approve", ProcessAction::Approve},
                                                         {"reject", ProcessAction::Reject},
                                                         {"send_back", ProcessAction::SendBack},
                                                         {"resubmit", ProcessAction::Resubmit}};
  return m;
}

std::string verb(const std::string& intent) { return intent == "send_back" ? "send back" : intent; }

std::string past(const std::string& intent) {
  static const std::map<std::string, std::string> m = {{"approve", "approved"},   {"reject", "rejected"},
                                                       {"send_back", "sent back"}, {"resubmit", "resubmitted"},
                                                       {"submit", "submitted"}};
  return m.at(intent);
}

std::string cell(const Table& t, const std::vector<Value>& row, const std::string& column) {
  const auto& v = row[t.schema().require(column)];
  return is_null(v) ? std::string() : display(v);
}

json employee_json(const Table& t, const std::vector<Value>& row) {
  return {{"name", cell(t, row, "name")}, {"user_id", cell(t, row, "user_id")}, {"airport", cell(t, row, "home_airport")}};
}

std::string dashed(std::string date) {
  std::replace(date.begin(), date.end(), '/', '-');
  return date;
}

}  // namespace

std::shared_ptr<AgentPipeline> make_task_execution_agent(const Services& s) {
  static const auto patterns = compile_all({
      {"submit", "submit|file|apply application|request? {conference:CONF}"},
      {"resubmit", "resubmit application|request? {conference:CONF}?"},
      {"approve", "approve|accept {applicant:NAME} application|request? {conference:CONF}?"},
      {"reject", "reject|decline|deny {applicant:NAME} application|request? {conference:CONF}?"},
      {"send_back", "send_back|return {applicant:NAME} application|request? {conference:CONF}?"},
  });
  auto store = s.store;
  auto engine = s.engine;

  AgentManifest m;
  m.name = "task_execution";
  m.description = "Submits and moves travel-preapproval applications through their review";
  m.allowed_personas = {Persona::Employee, Persona::Manager, Persona::Director};
  m.intent_personas = {{"submit", {Persona::Employee}},
                       {"resubmit", {Persona::Employee}},
                       {"approve", {Persona::Manager, Persona::Director}},
                       {"reject", {Persona::Manager, Persona::Director}},
                       {"send_back", {Persona::Manager, Persona::Director}}};

  auto nlu = understand("task_nlu", {"applicant", "conference"}, [](SkillFrame& f) {
    auto hit = intent::match(f.utterance.text, patterns);
    if (hit.intent.empty()) return;
    f.intent = hit.intent;
    f.confidence = hit.coverage;
    for (const auto& [slot, value] : hit.entities) f.set(slot, value);
  });

  auto directory = act("employee_directory", {"applicant"}, {"employee"}, [store](SkillFrame& f) {
    const auto employees = store->snapshot("employees");
    const bool self = f.intent == "submit" || f.intent == "resubmit";
    const auto who = self ? std::string() : lower(f.get("applicant").get<std::string>());
    std::vector<json> found;
    for (const auto& [id, row] : employees.rows()) {
      if (self) {
        if (cell(employees, row, "user_id") == f.utterance.user_id) found = {employee_json(employees, row)};
        continue;
      }
      const auto name = lower(cell(employees, row, "name"));
      if (name == who) {
        found = {employee_json(employees, row)};
        break;
      }
      if (name.starts_with(who + " ")) found.push_back(employee_json(employees, row));
    }
    if (found.size() != 1) {
      f.text = self ? "I could not find you in the employee directory."
                    : "I could not find an employee named " + f.get("applicant").get<std::string>() + ".";
      f.confidence = 0.1;
      f.halted = true;
      return;
    }
    f.set("employee", found.front());
  });

  auto papers = act("paper_directory", {"employee", "conference"}, {"paper"}, [store](SkillFrame& f) {
    const auto name = f.get("employee").at("name").get<std::string>();
    const auto conf = f.get("conference").get<std::string>();
    const auto pubs = store->snapshot("publications");
    for (const auto& [id, row] : pubs.rows()) {
      if (cell(pubs, row, "author") == name && cell(pubs, row, "conference") == conf &&
          cell(pubs, row, "status") == "accepted") {
        f.set("paper", cell(pubs, row, "title"));
        return;
      }
    }
  });

  auto pricing = act("travel_pricing", {"employee", "conference"}, {"trip"}, [store](SkillFrame& f) {
    const auto conf = f.get("conference").get<std::string>();
    const auto confs = store->snapshot("conferences");
    for (const auto& [id, row] : confs.rows()) {
      if (cell(confs, row, "name") != conf) continue;
      const auto start = cell(confs, row, "start_date");
      const auto end = cell(confs, row, "end_date");
      const auto home = f.get("employee").at("airport").get<std::string>();
      const double fare = stub_fare(home, cell(confs, row, "airport"), start, end);
      const double hotel = kHotelNightly * days_between(start, end);
      const double fee = as_number(row[confs.schema().require("registration_fee")]).value_or(0);
      f.set("trip", {{"start_date", dashed(start)}, {"end_date", dashed(end)}, {"amount", fare + hotel + fee}});
      return;
    }
    f.text = "I do not know the conference " + conf + ".";
    f.halted = true;
  });

  auto locate = [engine](SkillFrame& f) -> std::optional<ProcessInstance> {
    const auto name = f.get("employee").at("name").get<std::string>();
    const auto conf = f.get("conference").is_string() ? f.get("conference").get<std::string>() : std::string();
    return engine->find(name, conf);
  };

  auto execute = [engine, locate](SkillFrame& f) {
    const auto name = f.get("employee").at("name").get<std::string>();
    if (f.intent == "submit") {
      const auto& trip = f.get("trip");
      auto p = engine->submit({name, f.get("conference").get<std::string>(), trip.at("start_date").get<std::string>(),
                               trip.at("end_date").get<std::string>(), trip.at("amount").get<double>()});
      f.set("outcome", {{"app_id", p.app_id}, {"state", to_string(p.state)}});
      return;
    }
    auto p = locate(f);
    if (!p) {
      f.set("outcome", {{"error", "I could not find an application by " + name + "."}});
      return;
    }
    const std::string whose = f.intent == "resubmit" ? "Your" : name + "'s";
    try {
      auto after = engine->transition(p->app_id, f.utterance.persona, actions().at(f.intent));
      f.set("outcome", {{"app_id", after.app_id}, {"state", to_string(after.state)}});
    } catch (const Error& e) {
      std::string why;
      switch (e.code()) {
        case ErrorCode::TerminalState:
          why = whose + " application is already " + std::string(to_string(p->state)) + ".";
          break;
        case ErrorCode::IllegalTransition:
          why = whose + " application cannot be " + past(f.intent) + " while it is in " +
                std::string(to_string(p->state)) + ".";
          break;
        case ErrorCode::UnauthorizedActor:
          why = "As a " + std::string(to_string(f.utterance.persona)) + " you cannot " + verb(f.intent) + " " +
                (f.intent == "resubmit" ? std::string("your") : name + "'s") + " application while it is in " +
                std::string(to_string(p->state)) + ".";
          break;
        default: throw;
      }
      f.set("outcome", {{"error", why}});
    }
  };
  auto dry_run = [locate](SkillFrame& f) {
    if (f.intent == "submit") return;
    if (!locate(f)) {
      f.set("outcome", {{"error", "I could not find an application by " +
                                      f.get("employee").at("name").get<std::string>() + "."}});
    }
  };
  auto process = world_changing_act("process_task", {"employee", "conference", "trip"}, {"outcome"}, execute, dry_run);

  auto reply = respond("task_reply", {"employee", "conference", "trip", "paper", "outcome"}, [](SkillFrame& f) {
    if (f.text) return;
    const auto& outcome = f.get("outcome");
    if (outcome.is_object() && outcome.contains("error")) {
      f.text = outcome.at("error").get<std::string>();
      return;
    }
    const auto name = f.get("employee").at("name").get<std::string>();
    if (f.intent == "submit") {
      const auto conf = f.get("conference").get<std::string>();
      const auto amount = plain_number(std::round(f.get("trip").at("amount").get<double>()));
      std::string text = f.mode == Mode::Preview
                             ? "Would submit your application to " + conf + " requesting " + amount + "$"
                             : "Your application to " + conf + " has been submitted with a requested amount of " +
                                   amount + "$";
      if (f.get("paper").is_string()) text += " to present \"" + f.get("paper").get<std::string>() + "\"";
      f.text = std::move(text);
      return;
    }
    const std::string whose = f.intent == "resubmit" ? "your" : name + "'s";
    if (f.mode == Mode::Preview) {
      f.text = "Would " + verb(f.intent) + " " + whose + " application";
      return;
    }
    f.text = (f.intent == "resubmit" ? std::string("Your") : whose) + " application has been " + past(f.intent);
  });

  return compose_agent(std::move(m), std::move(nlu),
                       {std::move(directory), std::move(papers), std::move(pricing), std::move(process)},
                       std::move(reply),
                       {{"employee_directory", {}},
                        {"paper_directory", {"submit"}},
                        {"travel_pricing", {"submit"}},
                        {"process_task", {}}},
                       s.ledger);
}

}  // namespace bpa::agents
