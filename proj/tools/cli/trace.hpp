#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "cvault/bytes.hpp"

namespace cvault::cli {

// One access per line: "R <offset> <length>" or "W <offset> <hexbytes>".
// Blank lines and lines starting with '#' are ignored.
struct TraceOp {
  enum Kind { read, write };
  Kind kind = read;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;  // reads
  Bytes data;                // writes
  std::size_t line = 0;
};

// Throws ValidationError naming the line.
std::vector<TraceOp> parse_trace(std::string_view text);
std::vector<TraceOp> parse_trace_file(const std::filesystem::path& path);
std::string format_trace(const std::vector<TraceOp>& ops);

// Single-page reads of ceil(fraction * pages) distinct random pages.
std::vector<TraceOp> default_trace(std::uint64_t image_length, double fraction, std::uint64_t seed);

}  // namespace cvault::cli
