#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace nowcast {

using Date = std::chrono::sys_days;

// Strict ISO-8601 calendar date (YYYY-MM-DD). Returns nullopt on any
// malformed or out-of-range input.
std::optional<Date> try_parse_date(std::string_view text);

// Throws DomainError on malformed input.
Date parse_date(std::string_view text);

std::string format_date(Date date);

inline long days_between(Date from, Date to) { return (to - from).count(); }

inline Date add_days(Date date, long days) { return date + std::chrono::days{days}; }

}  // namespace nowcast
