#include "trace.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "cvault/errors.hpp"

namespace cvault::cli {

namespace {

std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::uint64_t number(std::string_view s, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ValidationError("trace line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::vector<TraceOp> parse_trace(std::string_view text) {
  std::vector<TraceOp> ops;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    auto f = fields(line);
    if (f.empty() || f[0][0] == '#') continue;
    if (f.size() != 3) throw ValidationError("trace line " + std::to_string(line_no) + ": expected 3 fields");
    TraceOp op;
    op.line = line_no;
    op.offset = number(f[1], line_no);
    if (f[0] == "R") {
      op.kind = TraceOp::read;
      op.length = number(f[2], line_no);
    } else if (f[0] == "W") {
      op.kind = TraceOp::write;
      try {
        op.data = from_hex(f[2]);
      } catch (const ValidationError& e) {
        throw ValidationError("trace line " + std::to_string(line_no) + ": " + e.what());
      }
    } else {
      throw ValidationError("trace line " + std::to_string(line_no) + ": op must be R or W");
    }
    ops.push_back(std::move(op));
  }
  return ops;
}

std::vector<TraceOp> parse_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open trace " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trace(ss.str());
}

std::string format_trace(const std::vector<TraceOp>& ops) {
  std::string out;
  for (const TraceOp& op : ops) {
    if (op.kind == TraceOp::read)
      out += "R " + std::to_string(op.offset) + " " + std::to_string(op.length) + "\n";
    else
      out += "W " + std::to_string(op.offset) + " " + to_hex(op.data) + "\n";
  }
  return out;
}

std::vector<TraceOp> default_trace(std::uint64_t image_length, double fraction, std::uint64_t seed) {
  const std::uint64_t pages = (image_length + kPageSize - 1) / kPageSize;
  auto count = static_cast<std::uint64_t>(std::ceil(fraction * static_cast<double>(pages)));
  count = std::min(count, pages);
  std::vector<std::uint64_t> order(pages);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::uint64_t> pick(i, pages - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<TraceOp> ops;
  for (std::uint64_t i = 0; i < count; ++i) {
    TraceOp op;
    op.offset = order[i] * kPageSize;
    op.length = std::min<std::uint64_t>(kPageSize, image_length - op.offset);
    op.line = i + 1;
    ops.push_back(op);
  }
  return ops;
}

}  // namespace cvault::cli
