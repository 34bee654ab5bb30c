#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>

#include "bpa/agents.hpp"
#include "bpa/alerts.hpp"
#include "bpa/orchestrator.hpp"

namespace bpa {

struct AssistantOptions {
  OrchestratorConfig config;  // config.assistant picks "travelbot" or "loanbot"
  std::filesystem::path fixtures = "fixtures";
  // In-memory store when absent.
  std::optional<std::filesystem::path> journal_dir;
  // Exported results, File-channel alerts and the dead-letter file.
  std::filesystem::path data_dir = std::filesystem::temp_directory_path() / "bpa";
  DeliveryOptions delivery;
  std::ostream* console = nullptr;
  // Start the alert daemon's thread. When false, call daemon().pump().
  bool run_daemon = true;
  // Replaces the built-in agent of the same name, keeping its registration slot.
  std::map<std::string, std::shared_ptr<Agent>> agent_overrides;
};

// Tables loaded from `<fixtures>/<name>.csv` at startup.
const std::vector<std::string>& fixture_tables();

/// One reference assistant: datastore with fixtures, process engine, alert
/// registry and daemon, the agent catalog and the orchestrator.
class Assistant {
 public:
  // Throws FixtureError naming a missing or malformed file and InvalidConfig
  // for an unknown assistant.
  explicit Assistant(AssistantOptions options);
  ~Assistant();
  Assistant(const Assistant&) = delete;
  Assistant& operator=(const Assistant&) = delete;

  TurnResult turn(const Utterance& u, TurnContext ctx) { return orchestrator_.run_turn(u, std::move(ctx)); }

  const std::string& display_name() const noexcept { return display_name_; }
  Orchestrator& orchestrator() noexcept { return orchestrator_; }
  const agents::Services& services() const noexcept { return services_; }
  Notifier& notifier() noexcept { return *notifier_; }
  AlertDaemon& daemon() noexcept { return *daemon_; }
  const AssistantOptions& options() const noexcept { return options_; }

  // Covers every table, so process and alert state are included.
  std::uint64_t world_hash() const { return services_.store->state_hash(); }

 private:
  AssistantOptions options_;
  std::string display_name_;
  agents::Services services_;
  Orchestrator orchestrator_;
  std::shared_ptr<Notifier> notifier_;
  std::unique_ptr<AlertDaemon> daemon_;
};

}  // namespace bpa
