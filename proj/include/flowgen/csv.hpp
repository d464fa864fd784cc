#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flowgen::csv {

/// A parsed comma-separated table. Fields may be double-quoted; a quoted field
/// may contain commas and doubled quotes.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(std::string_view name) const;
    std::size_t require_column(std::string_view name, const std::filesystem::path& source) const;
};

Table read(const std::filesystem::path& path);
Table parse(std::string_view text);

double to_double(const std::string& field, std::string_view what);

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

} // namespace flowgen::csv
