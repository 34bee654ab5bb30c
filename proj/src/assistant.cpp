#include "bpa/assistant.hpp"

#include "bpa/error.hpp"

namespace bpa {

const std::vector<std::string>& fixture_tables() {
  static const std::vector<std::string> tables = {"employees", "conferences", "publications", "travel_requests",
                                                  "loans"};
  return tables;
}

namespace {

std::shared_ptr<Datastore> open_store(const AssistantOptions& o) {
  auto store = o.journal_dir ? Datastore::open(*o.journal_dir) : Datastore::in_memory();
  for (const auto& t : fixture_tables()) store->load_csv(t, o.fixtures / (t + ".csv"));
  return store;
}

DeliveryOptions delivery_for(const AssistantOptions& o) {
  auto d = o.delivery;
  if (d.dead_letter_file.is_relative()) d.dead_letter_file = o.data_dir / d.dead_letter_file;
  return d;
}

}  // namespace

Assistant::Assistant(AssistantOptions options)
    : options_(std::move(options)), orchestrator_(options_.config) {
  const auto& kind = options_.config.assistant;
  if (kind != "travelbot" && kind != "loanbot") {
    throw Error(ErrorCode::InvalidConfig, "unknown assistant '" + kind + "' (expected travelbot or loanbot)");
  }
  std::filesystem::create_directories(options_.data_dir);
  services_.store = open_store(options_);
  services_.engine = std::make_shared<ProcessEngine>(services_.store);
  services_.alerts = std::make_shared<AlertRegistry>(services_.store, options_.data_dir / "alerts");
  services_.ledger = std::make_shared<SideEffectLedger>();
  services_.results_dir = options_.data_dir / "results";

  const auto& s = services_;
  auto add = [this](std::shared_ptr<Agent> agent) {
    auto it = options_.agent_overrides.find(agent->manifest().name);
    orchestrator_.register_agent(it == options_.agent_overrides.end() ? std::move(agent) : it->second);
  };
  if (kind == "travelbot") {
    display_name_ = "Travelbot";
    auto lex = agents::travel_lexicon(s.store->schema("travel_requests"));
    add(agents::make_chitchat_agent(
        display_name_, "travel preapproval requests, publication lookups, flight estimates, charts and alerts",
        s.ledger));
    add(agents::make_publication_query_agent(s));
    add(agents::make_data_query_agent(s, lex));
    add(agents::make_task_execution_agent(s));
    add(agents::make_travel_estimation_agent(s));
    add(agents::make_visualization_agent(s));
    add(agents::make_alerting_agent(s, {lex}));
  } else {
    display_name_ = "LoanBot";
    auto lex = agents::loans_lexicon(s.store->schema("loans"));
    add(agents::make_chitchat_agent(
        display_name_, "questions about loan data, loan risk assessments, charts, alerts and loan documents",
        s.ledger));
    add(agents::make_data_query_agent(s, lex));
    add(agents::make_loan_rules_agent(s));
    add(agents::make_visualization_agent(s));
    add(agents::make_alerting_agent(s, {lex}));
    add(agents::make_document_ingest_agent(s));
  }

  notifier_ = std::make_shared<Notifier>(delivery_for(options_), options_.console);
  daemon_ = std::make_unique<AlertDaemon>(s.store, notifier_);
  if (options_.run_daemon) daemon_->start();
}

Assistant::~Assistant() {
  daemon_->stop();
  notifier_->drain();
}

}  // namespace bpa
