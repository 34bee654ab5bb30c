#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bpa::intent {

enum class EntityKind {
  None,
  Name,        // run of capitalized words, possessive stripped: "John Smith's" -> "John Smith"
  Number,      // "3000", "$3,000", "3000$"
  Code,        // three capital letters: "BOS"
  Date,        // yyyy/mm/dd
  Conference,  // acronym followed by a year: "AAAI 2020"
};

struct PatternToken {
  // Lowercase words; a multi-word alternative is written with '_' ("how_many")
  // and a trailing '*' matches by prefix ("approv*").
  std::vector<std::string> alternatives;
  bool required = true;
  EntityKind entity = EntityKind::None;
  std::string slot;
};

struct IntentPattern {
  std::string intent;
  std::vector<PatternToken> tokens;
};

/// Compiles a pattern such as "approve|accept {applicant:NAME} request|application?".
/// Tokens are space separated, '|' separates alternatives, a trailing '?'
/// makes a token optional and {slot:KIND} extracts an entity.
IntentPattern compile(std::string intent, std::string_view pattern);

struct IntentMatch {
  std::string intent;  // empty when nothing matched
  std::map<std::string, std::string> entities;
  double coverage = 0;
};

/// Matches pattern tokens in order against the utterance, skipping words in
/// between. coverage = matched tokens / pattern tokens; a missing required
/// token rules the pattern out. The best pattern wins by coverage, then by
/// intent name.
IntentMatch match(std::string_view text, const std::vector<IntentPattern>& patterns);

}  // namespace bpa::intent
