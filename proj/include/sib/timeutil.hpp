#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace sib {

// Canonical timestamp format used in all files: "YYYY-MM-DDTHH:MM:SSZ".
// Parsing is strict; epoch seconds are computed without any timezone
// dependency so results are identical on every host.
std::optional<int64_t> parse_utc(const std::string& s);
std::string format_utc(int64_t epoch_seconds);

constexpr int64_t kSecondsPerDay = 86400;

}  // namespace sib
