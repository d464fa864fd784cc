#include "flowgen/csv.hpp"
#include "flowgen/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace flowgen::csv {

namespace {

std::vector<std::string> split_line(std::string_view line)
{
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    current.push_back('"');
                    ++k;
                }
                else {
                    quoted = false;
                }
            }
            else {
                current.push_back(c);
            }
        }
        else if (c == '"') {
            quoted = true;
        }
        else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        }
        else {
            current.push_back(c);
        }
    }
    fields.push_back(std::move(current));
    for (auto& f : fields) {
        const auto first = f.find_first_not_of(" \t");
        const auto last  = f.find_last_not_of(" \t");
        f = first == std::string::npos ? std::string() : f.substr(first, last - first + 1);
    }
    return fields;
}

} // namespace

std::optional<std::size_t> Table::column(std::string_view name) const
{
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (header[k] == name) {
            return k;
        }
    }
    return std::nullopt;
}

std::size_t Table::require_column(std::string_view name, const std::filesystem::path& source) const
{
    auto col = column(name);
    if (!col) {
        throw Error(ErrorCode::MalformedInput,
                    source.string() + ": missing required column '" + std::string(name) + "'");
    }
    return *col;
}

Table parse(std::string_view text)
{
    Table table;
    std::size_t pos = 0;
    bool have_header = false;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        pos = end + 1;
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        auto fields = split_line(line);
        if (!have_header) {
            table.header = std::move(fields);
            have_header  = true;
        }
        else {
            if (fields.size() != table.header.size()) {
                throw Error(ErrorCode::MalformedInput, "row " + std::to_string(table.rows.size() + 2) +
                                                           " has " + std::to_string(fields.size()) +
                                                           " fields, header has " +
                                                           std::to_string(table.header.size()));
            }
            table.rows.push_back(std::move(fields));
        }
        if (end == text.size()) {
            break;
        }
    }
    if (!have_header) {
        throw Error(ErrorCode::MalformedInput, "empty CSV input");
    }
    return table;
}

Table read(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::InputNotFound, "input not found: " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse(buffer.str());
    }
    catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

double to_double(const std::string& field, std::string_view what)
{
    double value = 0.0;
    const char* first = field.data();
    const char* last  = field.data() + field.size();
    if (!field.empty() && *first == '+') {
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc() || ptr != last) {
        throw Error(ErrorCode::MalformedInput, "cannot parse " + std::string(what) + " from '" + field + "'");
    }
    return value;
}

std::string format_double(double value)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

} // namespace flowgen::csv
