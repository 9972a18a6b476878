#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "mrt/error.hpp"

namespace mrt::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    long column(const std::string& name) const
    {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return static_cast<long>(j);
        return -1;
    }
};

inline std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    out.push_back(field);
    return out;
}

inline Table read_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw MrtError(Err::IoError, "cannot open '" + path + "' for reading");
    Table table;
    std::string line;
    if (!std::getline(in, line))
        throw MrtError(Err::ParseError, "'" + path + "' is empty (header row required)");
    table.header = split_line(line);
    const std::size_t width = table.header.size();
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (fields.size() != width)
            throw MrtError(Err::ParseError,
                           "'" + path + "' line " + std::to_string(lineno) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(width));
        table.rows.push_back(std::move(fields));
    }
    return table;
}

// Shortest decimal string that round-trips the double exactly.
inline std::string format_double(double v)
{
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Fixed-precision display formatting for the --round option.
inline std::string format_rounded(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return std::string(buf);
}

inline double parse_double(const std::string& s, long row, const std::string& column)
{
    double value = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw MrtError(Err::TypeError, "value '" + s + "' in column '" + column +
                                           "' is not a number",
                       row);
    return value;
}

inline long parse_int(const std::string& s, long row, const std::string& column)
{
    long value = 0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw MrtError(Err::TypeError, "value '" + s + "' in column '" + column +
                                           "' is not an integer",
                       row);
    return value;
}

inline void write_file(const std::string& path, const Table& table)
{
    std::ofstream out(path);
    if (!out)
        throw MrtError(Err::IoError, "cannot open '" + path + "' for writing");
    auto write_row = [&out](const std::vector<std::string>& fields) {
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (j) out << ',';
            out << fields[j];
        }
        out << '\n';
    };
    write_row(table.header);
    for (const auto& row : table.rows) write_row(row);
    if (!out)
        throw MrtError(Err::IoError, "write to '" + path + "' failed");
}

} // namespace mrt::csv
