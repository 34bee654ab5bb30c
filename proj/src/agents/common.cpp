#include "common.hpp"

#include <cmath>
#include <cstdio>

#include "bpa/util.hpp"

namespace bpa::agents {

std::string plain_number(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<std::int64_t>(v));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

namespace detail {

std::vector<intent::IntentPattern> compile_all(const std::vector<std::pair<std::string, std::string>>& patterns) {
  std::vector<intent::IntentPattern> out;
  for (const auto& [name, pattern] : patterns) out.push_back(intent::compile(name, pattern));
  return out;
}

std::vector<std::string> raw_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : util::split(text, ' ')) {
    auto w = util::trim(t);
    if (!w.empty()) out.push_back(std::move(w));
  }
  return out;
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  for (auto w : raw_tokens(text)) {
    while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back())) && w.back() != '$') w.pop_back();
    while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.front())) && w.front() != '$') w.erase(w.begin());
    if (!w.empty()) out.push_back(util::to_lower(w));
  }
  return out;
}

std::string lower(std::string_view s) { return util::to_lower(s); }

}  // namespace detail
}  // namespace bpa::agents
