#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace timbre {

// Invalid patch, envelope, filter or analysis configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed input file. offset() is the byte position where parsing stopped
// (or the 0-based line number for line-oriented formats).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace timbre
