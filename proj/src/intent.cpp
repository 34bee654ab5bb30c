#include "bpa/intent.hpp"

#include <cctype>
#include <optional>
#include <regex>

#include "bpa/error.hpp"
#include "bpa/nlq.hpp"
#include "bpa/util.hpp"

namespace bpa::intent {

namespace {

struct Word {
  std::string orig;   // punctuation trimmed, possessive stripped
  std::string lower;
};

bool is_edge_punct(char c) { return c == ',' || c == '.' || c == '?' || c == '!' || c == ';' || c == ':' || c == '"'; }

std::vector<Word> words_of(std::string_view text) {
  std::vector<Word> out;
  for (const auto& raw : util::split(text, ' ')) {
    std::string w = util::trim(raw);
    while (!w.empty() && is_edge_punct(w.back())) w.pop_back();
    while (!w.empty() && is_edge_punct(w.front())) w.erase(w.begin());
    if (w.size() > 2 && (w.ends_with("'s") || w.ends_with("’s"))) w.erase(w.size() - (w.ends_with("'s") ? 2 : 4));
    if (w.empty()) continue;
    out.push_back({w, util::to_lower(w)});
  }
  return out;
}

bool is_capitalized(const std::string& w) {
  if (w.empty() || !std::isupper(static_cast<unsigned char>(w[0]))) return false;
  int upper = 0;
  for (char c : w) upper += std::isupper(static_cast<unsigned char>(c)) ? 1 : 0;
  return upper == 1 || (w.size() == 2 && w[1] == '.');
}

bool is_year(const std::string& w) {
  return w.size() == 4 && std::all_of(w.begin(), w.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool is_acronym(const std::string& w) {
  int upper = 0;
  for (char c : w) {
    if (!std::isalpha(static_cast<unsigned char>(c))) return false;
    upper += std::isupper(static_cast<unsigned char>(c)) ? 1 : 0;
  }
  return upper >= 2;
}

// Returns the number of words consumed at `i` and the extracted value.
std::optional<std::pair<std::size_t, std::string>> entity_at(const std::vector<Word>& ws, std::size_t i,
                                                             EntityKind kind) {
  const auto& w = ws[i].orig;
  switch (kind) {
    case EntityKind::Name: {
      if (i == 0) return std::nullopt;
      std::size_t j = i;
      std::string name;
      while (j < ws.size() && is_capitalized(ws[j].orig) && ws[j].orig != "I") {
        name += (j == i ? "" : " ") + ws[j].orig;
        ++j;
      }
      if (j == i) return std::nullopt;
      return std::make_pair(j - i, name);
    }
    case EntityKind::Number:
      if (auto v = nlq::parse_number(w)) return std::make_pair(std::size_t{1}, display(*v));
      return std::nullopt;
    case EntityKind::Code:
      if (w.size() == 3 && std::all_of(w.begin(), w.end(), [](char c) { return std::isupper(static_cast<unsigned char>(c)); })) {
        return std::make_pair(std::size_t{1}, w);
      }
      return std::nullopt;
    case EntityKind::Date: {
      static const std::regex date(R"(\d{4}/\d{2}/\d{2})");
      if (std::regex_match(w, date)) return std::make_pair(std::size_t{1}, w);
      return std::nullopt;
    }
    case EntityKind::Conference:
      if (i + 1 < ws.size() && is_acronym(w) && is_year(ws[i + 1].orig)) {
        return std::make_pair(std::size_t{2}, w + " " + ws[i + 1].orig);
      }
      return std::nullopt;
    case EntityKind::None: break;
  }
  return std::nullopt;
}

// Number of words matched by `alt` at position i, 0 if none.
std::size_t keyword_at(const std::vector<Word>& ws, std::size_t i, const std::string& alt) {
  auto parts = util::split(alt, '_');
  if (i + parts.size() > ws.size()) return 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& p = parts[k];
    const auto& w = ws[i + k].lower;
    if (!p.empty() && p.back() == '*') {
      if (!w.starts_with(std::string_view(p).substr(0, p.size() - 1))) return 0;
    } else if (w != p) {
      return 0;
    }
  }
  return parts.size();
}

EntityKind kind_from(std::string_view s) {
  if (s == "NAME") return EntityKind::Name;
  if (s == "NUMBER") return EntityKind::Number;
  if (s == "CODE") return EntityKind::Code;
  if (s == "DATE") return EntityKind::Date;
  if (s == "CONF") return EntityKind::Conference;
  throw Error(ErrorCode::WiringError, "unknown entity kind '" + std::string(s) + "'");
}

}  // namespace

IntentPattern compile(std::string intent, std::string_view pattern) {
  IntentPattern p{std::move(intent), {}};
  for (auto raw : util::split(pattern, ' ')) {
    if (raw.empty()) continue;
    PatternToken t;
    if (raw.back() == '?') {
      t.required = false;
      raw.pop_back();
    }
    if (raw.front() == '{') {
      auto colon = raw.find(':');
      if (raw.back() != '}' || colon == std::string::npos) {
        throw Error(ErrorCode::WiringError, "bad entity token '" + raw + "' in pattern for " + p.intent);
      }
      t.slot = raw.substr(1, colon - 1);
      t.entity = kind_from(std::string_view(raw).substr(colon + 1, raw.size() - colon - 2));
    } else {
      t.alternatives = util::split(raw, '|');
    }
    p.tokens.push_back(std::move(t));
  }
  if (p.tokens.empty()) throw Error(ErrorCode::WiringError, "empty pattern for " + p.intent);
  return p;
}

IntentMatch match(std::string_view text, const std::vector<IntentPattern>& patterns) {
  const auto ws = words_of(text);
  IntentMatch best;
  for (const auto& p : patterns) {
    std::size_t cur = 0;
    std::size_t matched = 0;
    bool ok = true;
    std::map<std::string, std::string> entities;
    for (const auto& t : p.tokens) {
      std::optional<std::pair<std::size_t, std::size_t>> hit;  // (pos, len)
      for (std::size_t i = cur; i < ws.size() && !hit; ++i) {
        if (t.entity != EntityKind::None) {
          if (auto e = entity_at(ws, i, t.entity)) {
            hit = std::make_pair(i, e->first);
            entities[t.slot] = e->second;
          }
        } else {
          for (const auto& alt : t.alternatives) {
            if (auto len = keyword_at(ws, i, alt)) {
              hit = std::make_pair(i, len);
              break;
            }
          }
        }
      }
      if (hit) {
        ++matched;
        cur = hit->first + hit->second;
      } else if (t.required) {
        ok = false;
        break;
      }
    }
    if (!ok || matched == 0) continue;
    const double coverage = static_cast<double>(matched) / static_cast<double>(p.tokens.size());
    if (best.intent.empty() || coverage > best.coverage || (coverage == best.coverage && p.intent < best.intent)) {
      best = {p.intent, std::move(entities), coverage};
    }
  }
  return best;
}

}  // namespace bpa::intent
