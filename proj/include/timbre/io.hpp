#pragma once

// Plain CSV tables shared by the pipeline stages. Lines starting with '#'
// are comments (provenance stamps) and are skipped by the readers.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace timbre::io {

// Shortest decimal that round-trips to the same double.
std::string format_double(double x);
double parse_double(std::string_view text, std::size_t line);

std::vector<std::string> split_csv_line(std::string_view line);

struct CsvTable {
    std::vector<std::string> comments;  // without the leading '#'
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text);

std::string read_text(const std::filesystem::path& path);
// Writes to a temporary sibling and renames it into place.
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace timbre::io
