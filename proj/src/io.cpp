#include "timbre/io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "timbre/errors.hpp"

namespace timbre::io {

std::string format_double(double x) {
    std::array<char, 64> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    if (ec != std::errc{}) {
        throw std::runtime_error("format_double: conversion failed");
    }
    return std::string(buf.data(), end);
}

double parse_double(std::string_view text, std::size_t line) {
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw ParseError("csv: not a number '" + std::string(text) + "'", line);
    }
    return value;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

CsvTable parse_csv(std::string_view text) {
    CsvTable table;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool have_header = false;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            ++line_no;
            continue;
        }
        if (line.front() == '#') {
            table.comments.emplace_back(line.substr(1));
        } else if (!have_header) {
            table.header = split_csv_line(line);
            have_header = true;
        } else {
            auto row = split_csv_line(line);
            if (row.size() != table.header.size()) {
                throw ParseError("csv: row width does not match header", line_no);
            }
            table.rows.push_back(std::move(row));
        }
        ++line_no;
    }
    if (!have_header) {
        throw ParseError("csv: missing header", 0);
    }
    return table;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw std::runtime_error("cannot write " + tmp.string());
        }
        f.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!f) {
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace timbre::io
