#pragma once

// Minimal comma-separated reading/writing for numeric series. Fields never
// contain commas or quotes, so no quoting rules are needed.

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace etl::csv {

inline std::vector<std::string> split(std::string_view line)
{
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) {
            field.remove_suffix(1);
        }
        while (!field.empty() && field.front() == ' ') {
            field.remove_prefix(1);
        }
        fields.emplace_back(field);
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return fields;
}

inline double to_double(const std::string& field)
{
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw std::invalid_argument("csv: not a number: '" + field + "'");
    }
    return value;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    [[nodiscard]] std::size_t column(std::string_view name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        throw std::invalid_argument("csv: missing column '" + std::string(name) + "'");
    }
};

/// Reads a header line followed by numeric rows. Blank lines are skipped.
inline Table read(std::istream& in)
{
    Table table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        auto fields = split(line);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw std::invalid_argument("csv: row has " + std::to_string(fields.size()) + " fields, header has " +
                                        std::to_string(table.header.size()));
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            row.push_back(to_double(f));
        }
        table.rows.push_back(std::move(row));
    }
    if (!have_header) {
        throw std::invalid_argument("csv: empty document");
    }
    return table;
}

/// Shortest representation that round-trips.
inline std::string format(double value)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

} // namespace etl::csv
