#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bpa::util {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// Stable 64-bit FNV-1a. Used wherever a hash is persisted or compared across
// process restarts, so it must not depend on std::hash.
std::uint64_t fnv1a64(std::string_view data) noexcept;
std::string hex64(std::uint64_t v);

// Shortest round-trip text for a double; integral values keep a trailing
// ".0" ("137368000.0").
std::string format_real(double v);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// Random lowercase hex identifier of `bytes` bytes.
std::string random_id(std::size_t bytes = 12);

// Current UTC time as ISO-8601 with seconds precision.
std::string utc_timestamp();

}  // namespace bpa::util
