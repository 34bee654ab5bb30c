#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace bpa {

enum class Persona { Employee, Manager, Director, LoanOfficer };
std::string_view to_string(Persona p) noexcept;
// Accepts "LoanOfficer", "Loan Officer" and any letter case.
Persona persona_from_string(std::string_view s);
const std::vector<Persona>& all_personas();

enum class Mode { Preview, Execute };
std::string_view to_string(Mode m) noexcept;
Mode mode_from_string(std::string_view s);

struct Utterance {
  std::string text;
  std::string user_id;
  Persona persona = Persona::Employee;
  std::int64_t turn_id = 0;
};
// Throws InvalidUtterance for blank text.
void validate(const Utterance& u);

struct ContextEntry {
  nlohmann::json value;
  std::optional<int> ttl_turns;  // nullopt: never expires
  std::string written_by;
  std::int64_t written_at_turn = 0;

  bool operator==(const ContextEntry&) const = default;
};

struct TurnContext {
  std::string session_id;
  // Id of the turn being processed, or of the last completed one between turns.
  std::int64_t turn = 0;
  std::map<std::string, ContextEntry> entries;

  const ContextEntry* find(const std::string& key) const;
  bool operator==(const TurnContext&) const = default;
};

// Key every data-producing agent writes its latest result set under.
inline constexpr std::string_view kPlottableKey = "plottable";
inline constexpr int kPlottableTtl = 3;

/// End-of-turn bookkeeping. Entries already at zero are dropped; every other
/// finite entry loses one turn, except entries written during the turn that
/// just completed, which start counting on the next one.
TurnContext tick_context(TurnContext ctx);
// Removes entries whose ttl has reached zero.
void purge_expired(TurnContext& ctx);

struct TableData {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  bool operator==(const TableData&) const = default;
};

struct Attachment {
  enum class Kind { Image, Table, Link };

  Kind kind = Kind::Link;
  std::string data;  // image bytes or URL
  TableData table;
  std::string mime;  // images only
  std::string caption;

  bool operator==(const Attachment&) const = default;
};
std::string_view to_string(Attachment::Kind k) noexcept;

struct AgentResponse {
  std::optional<std::string> text;
  std::optional<Attachment> attachment;
  double confidence = 0;
  TurnContext updated_context;
  bool declined = false;
  Mode mode = Mode::Preview;
  int dialog_depth = 0;
  // Intent the agent recognized; empty for declines.
  std::string intent;
  bool timed_out = false;
  std::string diagnostic;

  bool operator==(const AgentResponse&) const = default;
};

AgentResponse make_decline(const TurnContext& ctx, Mode mode, std::string diagnostic = {});

struct AgentManifest {
  std::string name;
  std::string description;
  std::set<Persona> allowed_personas;
  bool world_changing = false;
  std::string endpoint = "local";
  // Narrower persona sets for individual intents.
  std::map<std::string, std::set<Persona>> intent_personas;

  bool operator==(const AgentManifest&) const = default;
};

// Canonical wire form shared by the gateway and remote agents.
nlohmann::json to_json(const Utterance& u);
nlohmann::json to_json(const TurnContext& c);
nlohmann::json to_json(const Attachment& a);
nlohmann::json to_json(const AgentResponse& r);
nlohmann::json to_json(const AgentManifest& m);
Utterance utterance_from_json(const nlohmann::json& j);
TurnContext context_from_json(const nlohmann::json& j);
Attachment attachment_from_json(const nlohmann::json& j);
AgentResponse response_from_json(const nlohmann::json& j);
AgentManifest manifest_from_json(const nlohmann::json& j);

class Agent {
 public:
  virtual ~Agent() = default;
  virtual const AgentManifest& manifest() const = 0;
  // Must be safe to call concurrently for different sessions.
  virtual AgentResponse run(const Utterance& u, const TurnContext& ctx, Mode mode) = 0;
  // False once the agent should no longer receive fan-out.
  virtual bool available() const { return true; }
};

// ---------------------------------------------------------------------------
// Skills

enum class SkillRole { Understand, Act, Respond };
std::string_view to_string(SkillRole r) noexcept;

struct SkillSpec {
  std::string name;
  SkillRole role = SkillRole::Act;
  bool world_changing = false;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

/// Record of world-changing skill invocations, shared by the pipelines of an
/// assistant.
class SideEffectLedger {
 public:
  struct Entry {
    std::string agent;
    std::string skill;
    std::string session;
    std::int64_t turn_id = 0;
    Mode mode = Mode::Execute;
  };

  void record(Entry e);
  std::vector<Entry> entries() const;
  std::size_t size() const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
};

/// Working state of one pipeline run. Skills exchange data through named
/// slots; a skill may only write slots listed in its outputs.
class SkillFrame {
 public:
  SkillFrame(const Utterance& u, const TurnContext& ctx, Mode mode, std::string agent);

  const Utterance& utterance;
  const Mode mode;
  const TurnContext& ctx_in;
  TurnContext ctx_out;

  std::string intent;
  double confidence = 0;
  bool declined = false;
  // Set by an act to skip the remaining acts; respond still runs.
  bool halted = false;
  int dialog_depth = 0;
  std::optional<std::string> text;
  std::optional<Attachment> attachment;

  // Throws SkillFailure when `slot` is not a declared output of the running skill.
  void set(const std::string& slot, nlohmann::json value);
  bool has(const std::string& slot) const;
  // Null when the slot was never written.
  const nlohmann::json& get(const std::string& slot) const;

  void put_context(const std::string& key, nlohmann::json value, std::optional<int> ttl);
  void erase_context(const std::string& key);

  const std::string& agent() const noexcept { return agent_; }

 private:
  friend class AgentPipeline;

  std::string agent_;
  const SkillSpec* running_ = nullptr;
  std::map<std::string, nlohmann::json> slots_;
};

using SkillFn = std::function<void(SkillFrame&)>;

struct Skill {
  SkillSpec spec;
  SkillFn run;
  // Side-effect-free stand-in used in Preview mode for world-changing acts.
  SkillFn dry_run;
};

struct WiringStep {
  std::string act;
  // Intents that trigger this act; empty means every intent.
  std::vector<std::string> intents;
};
using Wiring = std::vector<WiringStep>;

class AgentPipeline : public Agent {
 public:
  const AgentManifest& manifest() const override { return manifest_; }
  AgentResponse run(const Utterance& u, const TurnContext& ctx, Mode mode) override;

  bool world_changing() const noexcept { return manifest_.world_changing; }
  const std::vector<Skill>& acts() const noexcept { return acts_; }

 private:
  friend std::shared_ptr<AgentPipeline> compose_agent(AgentManifest, Skill, std::vector<Skill>, Skill, Wiring,
                                                      std::shared_ptr<SideEffectLedger>);
  AgentPipeline() = default;

  void invoke(const Skill& skill, const SkillFn& fn, SkillFrame& frame) const;

  AgentManifest manifest_;
  Skill understand_;
  std::vector<Skill> acts_;
  Skill respond_;
  Wiring wiring_;
  std::shared_ptr<SideEffectLedger> ledger_;
};

/// Checks roles and slot flow, then builds the pipeline. The manifest's
/// world_changing flag is recomputed from the acts.
///
/// Throws RoleError for a skill in the wrong position and WiringError for a
/// slot read that nothing upstream writes, an unknown act in the wiring, or
/// an act the wiring never schedules.
std::shared_ptr<AgentPipeline> compose_agent(AgentManifest manifest, Skill understand, std::vector<Skill> acts,
                                             Skill respond, Wiring wiring,
                                             std::shared_ptr<SideEffectLedger> ledger = nullptr);

}  // namespace bpa
