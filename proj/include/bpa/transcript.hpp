#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bpa/assistant.hpp"
#include "bpa/contracts.hpp"
#include "bpa/orchestrator.hpp"

namespace bpa {

// Plain-text golden conversation.
//
//   # comment
//   assistant: loanbot          header, before the first turn
//   persona: Loan Officer       may change between turns
//   user: lee                   may change between turns
//
//   > utterance                 starts a turn
//   @ agent                     expected responding agent (optional)
//   = literal reply             exactly one of = or ~
//   ~ regular expression        must match the whole reply
//   + image|table|link          expected attachment kind (optional)
struct TranscriptTurn {
  int line = 0;
  Persona persona = Persona::Employee;
  std::string user;
  std::string utterance;
  std::optional<std::string> agent;
  std::string expected;
  bool regex = false;
  std::optional<Attachment::Kind> attachment;
};

struct Transcript {
  std::string name;
  std::string assistant;
  std::vector<TranscriptTurn> turns;
};

// Throws MalformedTranscript with "<name>:<line>: <problem>".
Transcript parse_transcript(std::istream& in, const std::string& name);
Transcript load_transcript(const std::filesystem::path& file);

struct TurnOutcome {
  int line = 0;
  std::string utterance;
  std::string agent;
  std::string text;
  std::optional<Attachment::Kind> attachment;
  // Empty when the turn matched.
  std::vector<std::string> divergences;

  bool passed() const { return divergences.empty(); }
};

struct ReplayReport {
  std::string transcript;
  std::vector<TurnOutcome> turns;

  bool passed() const;
  std::size_t failures() const;
  // Contains nothing run-specific, so equal runs render byte-identical reports.
  std::string render() const;
};

using TurnRunner = std::function<TurnResult(const Utterance&, TurnContext)>;

/// Runs the turns in order through `run`, threading the context, and compares
/// the first sequenced response against each expectation.
ReplayReport replay(const Transcript& t, const TurnRunner& run, const std::string& session_id = "replay");

/// Replays against a freshly built assistant of the kind the transcript
/// names, without the alert daemon thread.
ReplayReport replay_fresh(const Transcript& t, AssistantOptions options);

}  // namespace bpa
