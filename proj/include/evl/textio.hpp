#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evl::textio {

/// Shortest decimal that parses back to exactly `v`.
std::string format_double(double v);
void append_double(std::string& out, double v);

std::optional<double> parse_double(std::string_view s);
std::optional<std::size_t> parse_size(std::string_view s);

/// Splits on runs of spaces/tabs; empty tokens are dropped.
std::vector<std::string_view> split_ws(std::string_view line);

}  // namespace evl::textio
