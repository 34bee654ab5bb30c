#include "bpa/util.hpp"
#include "bpa/error.hpp"

#include <algorithm>
#include <array>
#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <cctype>
#include <charconv>
#include <chrono>
#include <ctime>
#include <random>

namespace bpa {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidUtterance: return "InvalidUtterance";
    case ErrorCode::WiringError: return "WiringError";
    case ErrorCode::RoleError: return "RoleError";
    case ErrorCode::SkillFailure: return "SkillFailure";
    case ErrorCode::Serialization: return "Serialization";
    case ErrorCode::EmptyRegistry: return "EmptyRegistry";
    case ErrorCode::NoEligibleAgent: return "NoEligibleAgent";
    case ErrorCode::UnknownTurn: return "UnknownTurn";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnparseableUtterance: return "UnparseableUtterance";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::InvalidQuery: return "InvalidQuery";
    case ErrorCode::BindError: return "BindError";
    case ErrorCode::EmptyAggregation: return "EmptyAggregation";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::UnknownTable: return "UnknownTable";
    case ErrorCode::UnknownRow: return "UnknownRow";
    case ErrorCode::DuplicateTable: return "DuplicateTable";
    case ErrorCode::SeqTooOld: return "SeqTooOld";
    case ErrorCode::JournalCorrupt: return "JournalCorrupt";
    case ErrorCode::FixtureError: return "FixtureError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::UnauthorizedActor: return "UnauthorizedActor";
    case ErrorCode::TerminalState: return "TerminalState";
    case ErrorCode::UnknownApplication: return "UnknownApplication";
    case ErrorCode::UnknownTrigger: return "UnknownTrigger";
    case ErrorCode::DeliveryFailure: return "DeliveryFailure";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::EmptyUtterance: return "EmptyUtterance";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::DuplicateFeedback: return "DuplicateFeedback";
    case ErrorCode::HealthProbeFailed: return "HealthProbeFailed";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::MalformedTranscript: return "MalformedTranscript";
  }
  return "Unknown";
}

namespace util {

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  return to_lower(s.substr(0, prefix.size())) == to_lower(prefix);
}

std::uint64_t fnv1a64(std::string_view data) noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::array<char, 17> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + 16, v, 16);
  std::string s(buf.data(), end);
  return std::string(16 - s.size(), '0') + s;
}

std::string format_real(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  std::string s(buf.data(), end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string base64_encode(std::string_view bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::string_view::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::string base64_decode(std::string_view text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::string padded(text);
  std::size_t pad = 0;
  while (!padded.empty() && padded.back() == '=') {
    padded.back() = 'A';
    ++pad;
  }
  if (padded.size() % 4 != 0) {
    throw Error(ErrorCode::Serialization, "base64 input length is not a multiple of 4");
  }
  try {
    std::string out(It(padded.cbegin()), It(padded.cend()));
    out.resize(out.size() - pad);
    return out;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Serialization, std::string("invalid base64: ") + e.what());
  }
}

std::string random_id(std::size_t bytes) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes * 2);
  for (std::size_t i = 0; i < bytes; ++i) {
    auto b = static_cast<unsigned>(rng() & 0xffU);
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace util
}  // namespace bpa
