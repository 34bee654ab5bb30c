#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bpa/query.hpp"
#include "bpa/table.hpp"

namespace bpa::nlq {

/// Vocabulary for one table: the schema plus informal names users give its
/// columns ("amount" for loan_amount) and a few value phrases ("pending").
class Lexicon {
 public:
  // Seeds synonyms from the column names themselves ("credit_score" ->
  // "credit score").
  Lexicon(std::string table, Schema schema);

  Lexicon& synonym(std::string_view phrase, const std::string& column);
  Lexicon& value_phrase(std::string_view phrase, Filter filter);
  // Column matched by "by <Name>" / "from <Name>" person references.
  Lexicon& person_column(const std::string& column);

  const std::string& table() const noexcept { return table_; }
  const Schema& schema() const noexcept { return schema_; }

  struct Phrase {
    std::vector<std::string> words;
    std::string column;
  };
  const std::vector<Phrase>& synonyms() const noexcept { return synonyms_; }
  const std::vector<std::pair<std::vector<std::string>, Filter>>& value_phrases() const noexcept {
    return values_;
  }
  const std::string& person() const noexcept { return person_; }

 private:
  std::string table_;
  Schema schema_;
  std::vector<Phrase> synonyms_;
  std::vector<std::pair<std::vector<std::string>, Filter>> values_;
  std::string person_;
};

struct ParseResult {
  StructuredQuery query;
  // Fraction of content words the grammar consumed, in [0, 1].
  double coverage = 0;
};

/// Rule-layered translation:
///  1. aggregation cue words in the head of the sentence ("total", "average",
///     "how many", "top N", "list"),
///  2. filter clauses after "with"/"where"/"whose", conjoined by "and"/"but",
///  3. "per <col>" / "by <col>" grouping.
///
/// Throws UnparseableUtterance when neither a cue nor a filter is found and
/// UnknownColumn when a cue or comparison names no known column.
ParseResult parse(std::string_view text, const Lexicon& lexicon);

/// Parses a number as users type it: "$3,000", "3000$", "10000".
std::optional<Value> parse_number(std::string_view word);

}  // namespace bpa::nlq
