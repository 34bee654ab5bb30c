#include "bpa/nlq.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "bpa/error.hpp"
#include "bpa/util.hpp"

namespace bpa::nlq {

namespace {

std::vector<std::string> words_of(std::string_view phrase) {
  std::vector<std::string> out;
  for (auto& w : util::split(util::to_lower(util::trim(phrase)), ' ')) {
    if (!w.empty()) out.push_back(w);
  }
  return out;
}

struct Token {
  std::string lower;  // possessive stripped
  std::string orig;   // possessive stripped, original case
  std::optional<Value> number;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::string cur;
  auto flush = [&] {
    std::string w = cur;
    cur.clear();
    bool initial = w.size() == 2 && w[1] == '.' && std::isupper(static_cast<unsigned char>(w[0]));
    while (!initial && !w.empty() && std::string_view("?!.,;:\"()'").find(w.back()) != std::string_view::npos) w.pop_back();
    while (!w.empty() && std::string_view("\"('").find(w.front()) != std::string_view::npos) w.erase(0, 1);
    if (w.size() > 2 && (w.ends_with("'s") || w.ends_with("’s"))) w.resize(w.size() - 2);
    if (w.empty()) return;
    Token t;
    t.orig = w;
    t.lower = util::to_lower(w);
    t.number = parse_number(w);
    out.push_back(std::move(t));
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> kWords = {
      "a",    "an",    "the",   "is",    "are",  "was",   "were", "be",   "been", "of",    "for",
      "to",   "in",    "on",    "my",    "me",   "i",     "you",  "your", "what", "who",   "which",
      "all",  "any",   "there", "do",    "does", "did",   "please", "can", "could", "would", "that",
      "this", "these", "those", "have",  "has",  "had",   "it",   "its",  "their", "them", "and",
      "but",  "with",  "where", "whose", "by",   "per",   "each", "than", "as",   "at",    "from",
      "how",  "tell",  "give",  "show",  "let",  "know",  "about", "some", "every", "value", "values",
      "in",   "terms", "currently", "right", "now", "queue"};
  return kWords;
}

bool word_matches(const std::string& token, const std::string& word) {
  if (token == word) return true;
  if (token == word + "s" || token == word + "es") return true;
  if (word.size() > 1 && word.back() == 's' && token + "s" == word) return true;
  return false;
}

// Length of the phrase match at i (0 if none).
std::size_t match_phrase(const std::vector<Token>& toks, std::size_t i, std::size_t end,
                         const std::vector<std::string>& words, bool fuzzy_plural = true) {
  if (words.empty() || i + words.size() > end) return 0;
  for (std::size_t k = 0; k < words.size(); ++k) {
    bool ok = fuzzy_plural ? word_matches(toks[i + k].lower, words[k]) : toks[i + k].lower == words[k];
    if (!ok) return 0;
  }
  return words.size();
}

struct ColumnHit {
  std::size_t pos;
  std::size_t len;
  std::string column;
};

std::optional<ColumnHit> column_at(const std::vector<Token>& toks, std::size_t i, std::size_t end,
                                   const Lexicon& lex) {
  std::optional<ColumnHit> best;
  for (const auto& p : lex.synonyms()) {
    auto len = match_phrase(toks, i, end, p.words);
    if (len && (!best || len > best->len)) best = ColumnHit{i, len, p.column};
  }
  return best;
}

std::optional<ColumnHit> find_column(const std::vector<Token>& toks, std::size_t from, std::size_t end,
                                     const Lexicon& lex) {
  for (std::size_t i = from; i < end; ++i) {
    if (auto hit = column_at(toks, i, end, lex)) return hit;
  }
  return std::nullopt;
}

struct Cue {
  std::vector<std::string> words;
  AggKind kind;
};

const std::vector<Cue>& scalar_cues() {
  static const std::vector<Cue> kCues = {
      {{"how", "many"}, AggKind::Count}, {{"number", "of"}, AggKind::Count}, {{"count", "of"}, AggKind::Count},
      {{"count"}, AggKind::Count},       {{"total"}, AggKind::Sum},          {{"sum", "of"}, AggKind::Sum},
      {{"sum"}, AggKind::Sum},           {{"average"}, AggKind::Avg},        {{"mean"}, AggKind::Avg},
      {{"avg"}, AggKind::Avg},           {{"minimum"}, AggKind::Min},        {{"min"}, AggKind::Min},
      {{"lowest"}, AggKind::Min},        {{"smallest"}, AggKind::Min},       {{"maximum"}, AggKind::Max},
      {{"max"}, AggKind::Max},           {{"highest"}, AggKind::Max},        {{"largest"}, AggKind::Max},
  };
  return kCues;
}

const std::vector<std::vector<std::string>>& list_cues() {
  static const std::vector<std::vector<std::string>> kCues = {
      {"list"}, {"find"}, {"show"}, {"display"}, {"retrieve"}, {"get"}, {"fetch"}};
  return kCues;
}

std::optional<std::pair<AggKind, std::size_t>> scalar_cue_at(const std::vector<Token>& toks, std::size_t i,
                                                             std::size_t end) {
  std::optional<std::pair<AggKind, std::size_t>> best;
  for (const auto& c : scalar_cues()) {
    auto len = match_phrase(toks, i, end, c.words, false);
    if (len && (!best || len > best->second)) best = std::make_pair(c.kind, len);
  }
  return best;
}

struct OpPhrase {
  std::vector<std::string> words;
  CmpOp op;
};

const std::vector<OpPhrase>& op_phrases() {
  static const std::vector<OpPhrase> kOps = {
      {{"more", "than"}, CmpOp::Gt},       {{"greater", "than"}, CmpOp::Gt}, {{"higher", "than"}, CmpOp::Gt},
      {{"larger", "than"}, CmpOp::Gt},     {{"over"}, CmpOp::Gt},            {{"above"}, CmpOp::Gt},
      {{"exceeds"}, CmpOp::Gt},            {{"exceeding"}, CmpOp::Gt},       {{">"}, CmpOp::Gt},
      {{"less", "than"}, CmpOp::Lt},       {{"lower", "than"}, CmpOp::Lt},   {{"fewer", "than"}, CmpOp::Lt},
      {{"smaller", "than"}, CmpOp::Lt},    {{"below"}, CmpOp::Lt},           {{"under"}, CmpOp::Lt},
      {{"<"}, CmpOp::Lt},                  {{"at", "least"}, CmpOp::Ge},     {{"no", "less", "than"}, CmpOp::Ge},
      {{">="}, CmpOp::Ge},                 {{"at", "most"}, CmpOp::Le},      {{"no", "more", "than"}, CmpOp::Le},
      {{"<="}, CmpOp::Le},                 {{"not", "equal", "to"}, CmpOp::Ne}, {{"other", "than"}, CmpOp::Ne},
      {{"is", "not"}, CmpOp::Ne},          {{"!="}, CmpOp::Ne},              {{"equal", "to"}, CmpOp::Eq},
      {{"equals"}, CmpOp::Eq},             {{"="}, CmpOp::Eq},
  };
  return kOps;
}

std::optional<std::pair<CmpOp, std::size_t>> op_at(const std::vector<Token>& toks, std::size_t i, std::size_t end) {
  std::optional<std::pair<CmpOp, std::size_t>> best;
  for (const auto& p : op_phrases()) {
    auto len = match_phrase(toks, i, end, p.words, false);
    if (len && (!best || len > best->second)) best = std::make_pair(p.op, len);
  }
  return best;
}

bool is_capitalized_word(const Token& t) {
  if (t.orig.empty() || !std::isupper(static_cast<unsigned char>(t.orig[0]))) return false;
  // All-caps tokens are codes (BOS, ICML), not names.
  bool all_caps = std::all_of(t.orig.begin(), t.orig.end(), [](unsigned char c) {
    return !std::isalpha(c) || std::isupper(c);
  });
  return !(all_caps && t.orig.size() > 1 && t.orig.find('.') == std::string::npos);
}

bool is_introducer(const std::string& w) {
  return w == "with" || w == "where" || w == "whose" || w == "having" || w == "have" || w == "has";
}

}  // namespace

std::optional<Value> parse_number(std::string_view word) {
  std::string s;
  for (char c : word) {
    if (c == '$' || c == ',') continue;
    s.push_back(c);
  }
  if (s.empty()) return std::nullopt;
  if (s.find_first_of(".eE") == std::string::npos) {
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
    if (ec == std::errc{} && p == s.data() + s.size()) return Value(i);
    return std::nullopt;
  }
  double d = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (ec == std::errc{} && p == s.data() + s.size() && std::isdigit(static_cast<unsigned char>(s.back()))) {
    return Value(d);
  }
  return std::nullopt;
}

Lexicon::Lexicon(std::string table, Schema schema) : table_(std::move(table)), schema_(std::move(schema)) {
  for (const auto& c : schema_.columns()) {
    std::string phrase = c.name;
    std::replace(phrase.begin(), phrase.end(), '_', ' ');
    synonym(phrase, c.name);
  }
}

Lexicon& Lexicon::synonym(std::string_view phrase, const std::string& column) {
  schema_.require(column);
  synonyms_.push_back({words_of(phrase), column});
  return *this;
}

Lexicon& Lexicon::value_phrase(std::string_view phrase, Filter filter) {
  schema_.require(filter.column);
  values_.emplace_back(words_of(phrase), std::move(filter));
  return *this;
}

Lexicon& Lexicon::person_column(const std::string& column) {
  schema_.require(column);
  person_ = column;
  return *this;
}

ParseResult parse(std::string_view text, const Lexicon& lex) {
  const auto toks = tokenize(text);
  const std::size_t n = toks.size();
  if (n == 0) throw Error(ErrorCode::UnparseableUtterance, "empty utterance");
  std::vector<bool> used(n, false);
  auto mark = [&](std::size_t pos, std::size_t len) {
    for (std::size_t k = pos; k < pos + len && k < n; ++k) used[k] = true;
  };

  std::size_t fstart = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_introducer(toks[i].lower)) {
      fstart = i;
      break;
    }
  }

  StructuredQuery q;
  bool have_cue = false;

  // Layer 1: aggregation cue in the head.
  std::optional<std::size_t> top_pos;
  for (std::size_t i = 0; i + 1 < fstart; ++i) {
    if (toks[i].lower == "top" && toks[i + 1].number) {
      if (auto* k = std::get_if<std::int64_t>(&*toks[i + 1].number); k && *k > 0) {
        q.aggregation = AggKind::TopK;
        q.k = static_cast<std::size_t>(*k);
        top_pos = i;
        mark(i, 2);
        have_cue = true;
        break;
      }
    }
  }

  std::optional<std::size_t> terms_pos;
  for (std::size_t i = 0; i + 2 < n; ++i) {
    if (toks[i].lower == "in" && toks[i + 1].lower == "terms" && toks[i + 2].lower == "of") {
      terms_pos = i;
      mark(i, 3);
      break;
    }
  }

  if (top_pos) {
    auto group = find_column(toks, *top_pos + 2, terms_pos.value_or(fstart), lex);
    if (!group) throw Error(ErrorCode::UnknownColumn, "no known column to rank after 'top'");
    q.group_by = group->column;
    mark(group->pos, group->len);
    if (terms_pos) {
      for (std::size_t i = *terms_pos + 3; i < n; ++i) {
        if (auto cue = scalar_cue_at(toks, i, n)) {
          q.by = cue->first;
          mark(i, cue->second);
          if (q.by != AggKind::Count) {
            auto col = find_column(toks, i + cue->second, n, lex);
            if (!col) throw Error(ErrorCode::UnknownColumn, "no known column after ranking cue");
            q.target = col->column;
            mark(col->pos, col->len);
          }
          break;
        }
      }
    }
  } else {
    std::size_t head_end = terms_pos.value_or(fstart);
    for (std::size_t i = 0; i < head_end && !have_cue; ++i) {
      if (auto cue = scalar_cue_at(toks, i, head_end)) {
        q.aggregation = cue->first;
        mark(i, cue->second);
        have_cue = true;
        if (q.aggregation != AggKind::Count) {
          auto col = find_column(toks, i + cue->second, n, lex);
          if (!col || col->pos >= fstart) {
            throw Error(ErrorCode::UnknownColumn,
                        "'" + toks[i].orig + "' names no known column of " + lex.table());
          }
          q.target = col->column;
          mark(col->pos, col->len);
        }
      }
    }
    for (std::size_t i = 0; i < head_end && !have_cue; ++i) {
      for (const auto& words : list_cues()) {
        if (match_phrase(toks, i, head_end, words, false)) {
          q.aggregation = AggKind::List;
          mark(i, words.size());
          have_cue = true;
          break;
        }
      }
    }
  }

  // Person references ("submitted by John Smith") and value phrases.
  if (!lex.person().empty()) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto& w = toks[i].lower;
      if (w != "by" && w != "from" && w != "for" && w != "of") continue;
      std::size_t j = i + 1;
      while (j < n && (toks[j].lower == "employee" || toks[j].lower == "applicant" || toks[j].lower == "user")) ++j;
      std::size_t start = j;
      while (j < n && is_capitalized_word(toks[j]) && !toks[j].number) ++j;
      if (j == start) continue;
      std::string name;
      for (std::size_t k = start; k < j; ++k) name += (k == start ? "" : " ") + toks[k].orig;
      q.filters.push_back({lex.person(), CmpOp::Eq, name});
      mark(i, j - i);
      i = j - 1;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (used[i]) continue;
    for (const auto& [words, filter] : lex.value_phrases()) {
      if (auto len = match_phrase(toks, i, n, words)) {
        q.filters.push_back(filter);
        mark(i, len);
        break;
      }
    }
  }

  // Layer 2: comparison clauses after the introducer.
  if (fstart < n) {
    mark(fstart, 1);
    std::size_t a = fstart + 1;
    while (a < n) {
      std::size_t b = a;
      while (b < n && toks[b].lower != "and" && toks[b].lower != "but") ++b;
      // Clause [a, b)
      std::optional<std::pair<AggKind, std::size_t>> agg;
      std::optional<ColumnHit> col;
      std::size_t i = a;
      for (; i < b && !col; ++i) {
        if (!agg) {
          if (auto cue = scalar_cue_at(toks, i, b); cue && cue->first != AggKind::Count) {
            agg = std::make_pair(cue->first, i);
            i += cue->second - 1;
            continue;
          }
        }
        col = column_at(toks, i, b, lex);
      }
      std::optional<std::pair<CmpOp, std::size_t>> op;
      std::size_t op_pos = b;
      for (std::size_t j = col ? col->pos + col->len : a; j < b && !op; ++j) {
        if ((op = op_at(toks, j, b))) op_pos = j;
      }
      if (!op && col) {
        for (std::size_t j = col->pos + col->len; j < b; ++j) {
          if (toks[j].lower == "is" || toks[j].lower == "equals") {
            op = std::make_pair(CmpOp::Eq, std::size_t{1});
            op_pos = j;
            break;
          }
        }
      }
      if (op) {
        std::size_t lit_start = op_pos + op->second;
        std::optional<Value> literal;
        std::size_t lit_end = lit_start;
        const ColumnType type = col ? lex.schema().at(lex.schema().require(col->column)).type : ColumnType::Real;
        if (type == ColumnType::Integer || type == ColumnType::Real) {
          for (std::size_t j = lit_start; j < b; ++j) {
            if (toks[j].number) {
              literal = toks[j].number;
              lit_end = j + 1;
              break;
            }
          }
        } else if (lit_start < b) {
          std::string s;
          for (std::size_t j = lit_start; j < b; ++j) s += (j == lit_start ? "" : " ") + toks[j].orig;
          literal = Value(s);
          lit_end = b;
        }
        if (literal) {
          if (!col) {
            throw Error(ErrorCode::UnknownColumn, "comparison does not name a known column of " + lex.table());
          }
          mark(col->pos, col->len);
          mark(op_pos, op->second);
          mark(lit_start, lit_end - lit_start);
          if (agg && (q.group_by || q.aggregation == AggKind::TopK)) {
            mark(agg->second, 1);
            q.having = Having{agg->first, op->first, *literal};
            if (q.aggregation == AggKind::TopK && q.target == "*") {
              q.by = agg->first;
              q.target = col->column;
            }
          } else {
            q.filters.push_back({col->column, op->first, *literal});
          }
        }
      }
      if (b < n) mark(b, 1);
      a = b + 1;
    }
  }

  // Layer 3: grouping.
  if (q.aggregation != AggKind::TopK) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (used[i] || (toks[i].lower != "per" && toks[i].lower != "by" && toks[i].lower != "each")) continue;
      if (auto col = column_at(toks, i + 1, n, lex)) {
        q.group_by = col->column;
        mark(i, 1 + col->len);
        break;
      }
    }
  }

  if (!have_cue && q.filters.empty()) {
    throw Error(ErrorCode::UnparseableUtterance, "no aggregation cue or filter in '" + std::string(text) + "'");
  }
  if (!have_cue) q.aggregation = AggKind::List;
  if (q.aggregation == AggKind::List) {
    q.target = "*";
    q.group_by.reset();
  }
  if (q.having && !q.group_by && q.aggregation != AggKind::TopK) q.having.reset();

  try {
    bind(q, lex.schema());
  } catch (const Error& e) {
    throw Error(ErrorCode::UnparseableUtterance, e.what());
  }

  std::size_t content = 0;
  std::size_t consumed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool stop = stopwords().count(toks[i].lower) != 0;
    if (stop && !used[i]) continue;
    ++content;
    if (used[i]) ++consumed;
  }
  double coverage = content == 0 ? 0.0 : static_cast<double>(consumed) / static_cast<double>(content);
  return ParseResult{std::move(q), coverage};
}

}  // namespace bpa::nlq
