#pragma once

#include <set>
#include <string>
#include <vector>

#include "bpa/agents.hpp"
#include "bpa/intent.hpp"

namespace bpa::agents::detail {

inline std::set<Persona> everyone() { return {all_personas().begin(), all_personas().end()}; }

inline Skill understand(std::string name, std::vector<std::string> outputs, SkillFn fn) {
  return {{std::move(name), SkillRole::Understand, false, {}, std::move(outputs)}, std::move(fn), nullptr};
}

inline Skill act(std::string name, std::vector<std::string> inputs, std::vector<std::string> outputs, SkillFn fn) {
  return {{std::move(name), SkillRole::Act, false, std::move(inputs), std::move(outputs)}, std::move(fn), nullptr};
}

inline Skill world_changing_act(std::string name, std::vector<std::string> inputs, std::vector<std::string> outputs,
                                SkillFn fn, SkillFn dry_run) {
  return {{std::move(name), SkillRole::Act, true, std::move(inputs), std::move(outputs)}, std::move(fn),
          std::move(dry_run)};
}

inline Skill respond(std::string name, std::vector<std::string> inputs, SkillFn fn) {
  return {{std::move(name), SkillRole::Respond, false, std::move(inputs), {}}, std::move(fn), nullptr};
}

std::vector<intent::IntentPattern> compile_all(const std::vector<std::pair<std::string, std::string>>& patterns);

// Lowercase words with surrounding punctuation removed.
std::vector<std::string> words(std::string_view text);
// Whitespace-separated tokens with their original spelling.
std::vector<std::string> raw_tokens(std::string_view text);

std::string lower(std::string_view s);

}  // namespace bpa::agents::detail
