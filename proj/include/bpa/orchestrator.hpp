#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "bpa/contracts.hpp"

namespace bpa {

enum class ScorerKind { Identity, MinMax };
enum class SelectorKind { TopOne, TopK, EpsilonGreedy };
enum class SequencerKind { DescendingScore, RulePriority };

struct ScoredPreview {
  std::string agent_name;
  double raw_confidence = 0;
  double final_score = 0;
  AgentResponse preview;
  int dialog_depth = 0;
};

struct SelectorPolicy {
  SelectorKind kind = SelectorKind::TopOne;
  int k = 1;
  double threshold = 0.2;
  // epsilon_t = max(floor, start * decay^t), t = feedback signals learned so far
  double epsilon_start = 0.5;
  double epsilon_decay = 0.99;
  double epsilon_floor = 0.05;
  double alpha = 0.1;
};

struct OrchestratorConfig {
  std::string assistant = "travelbot";
  ScorerKind scorer = ScorerKind::MinMax;
  SelectorPolicy selector;
  SequencerKind sequencer = SequencerKind::RulePriority;
  std::vector<std::string> priority = {"chitchat"};
  std::chrono::milliseconds preview_deadline{2000};
  std::chrono::milliseconds execute_deadline{10000};
  std::uint64_t seed = 7;
  std::string fallback_text = "I cannot help with that yet.";
};

// key = value lines, '#' comments. Throws InvalidConfig on unknown keys or
// bad values.
OrchestratorConfig parse_config(std::istream& in);
OrchestratorConfig load_config(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Pipeline stages

/// Previews every agent concurrently. An agent that misses the deadline or
/// throws is recorded as a decline; the others are unaffected.
std::vector<ScoredPreview> fan_out_preview(const Utterance& u, const TurnContext& ctx,
                                           const std::vector<std::shared_ptr<Agent>>& agents,
                                           std::chrono::milliseconds deadline);

void score(std::vector<ScoredPreview>& previews, ScorerKind scorer);

// TopOne / TopK over eligible entries (final_score >= threshold, not
// declined). Ties keep input order. Throws NoEligibleAgent.
std::vector<std::string> select_top(const std::vector<ScoredPreview>& previews, const SelectorPolicy& policy);

struct ExecutedResponse {
  std::string agent;
  double final_score = 0;
  AgentResponse response;
};

// Input order is registration order; returned order is a permutation.
std::vector<ExecutedResponse> sequence(std::vector<ExecutedResponse> executed, SequencerKind kind,
                                       const std::vector<std::string>& priority);

// Utterance feature bucket for the learned selector.
std::size_t feature_bucket(const std::vector<ScoredPreview>& previews, const std::string& text);
inline constexpr std::size_t kFeatureBuckets = 64;

struct FeedbackSignal {
  std::uint64_t decision_id = 0;
  std::string selected_agent;
  double reward = 0;
};

/// Epsilon-greedy selection over a value table keyed by (bucket, agent).
/// Shared across sessions; all members are thread-safe.
class BanditSelector {
 public:
  explicit BanditSelector(SelectorPolicy policy, std::uint64_t seed);

  struct Decision {
    std::uint64_t id = 0;
    std::string agent;
  };
  // Throws NoEligibleAgent.
  Decision select(const std::vector<ScoredPreview>& previews, std::size_t bucket);

  // value <- value + alpha * (reward - value). Throws UnknownTurn for an id
  // that was never issued, already learned, or names another agent.
  double learn(const FeedbackSignal& f);

  double epsilon() const;
  std::optional<double> value(std::size_t bucket, const std::string& agent) const;
  std::uint64_t learned() const;

 private:
  struct Pending {
    std::size_t bucket;
    std::string agent;
  };

  SelectorPolicy policy_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::map<std::pair<std::size_t, std::string>, double> values_;
  std::map<std::uint64_t, Pending> pending_;
  std::uint64_t next_id_ = 1;
  std::uint64_t learned_ = 0;
};

struct TurnTrace {
  std::vector<ScoredPreview> previews;
  std::vector<std::string> selected;
  std::vector<std::string> executed;
  std::optional<std::uint64_t> decision_id;
  bool fallback = false;
  std::vector<std::string> diagnostics;
};

struct TurnResult {
  std::vector<ExecutedResponse> responses;
  TurnContext context;
  TurnTrace trace;
};

/// Posterior score -> select -> sequence orchestration. Holds the agent
/// registry and the bandit table; no per-session state.
class Orchestrator {
 public:
  explicit Orchestrator(OrchestratorConfig config);

  // Throws DuplicateName.
  void register_agent(std::shared_ptr<Agent> agent);
  bool unregister_agent(const std::string& name);
  // Registered agents that are still available, in registration order.
  std::vector<std::shared_ptr<Agent>> agents() const;

  /// One conversational turn. Throws InvalidUtterance and EmptyRegistry;
  /// NoEligibleAgent becomes the fallback reply attributed to "fallback".
  TurnResult run_turn(const Utterance& u, TurnContext ctx);

  double learn(const FeedbackSignal& f) { return bandit_.learn(f); }
  const BanditSelector& bandit() const noexcept { return bandit_; }
  const OrchestratorConfig& config() const noexcept { return config_; }

 private:
  OrchestratorConfig config_;
  mutable std::shared_mutex registry_mu_;
  std::vector<std::shared_ptr<Agent>> registry_;
  BanditSelector bandit_;
};

}  // namespace bpa
