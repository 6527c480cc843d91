#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace avicurate::csv {

// Minimal RFC 4180 table: quoted fields, embedded commas/quotes/newlines.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name, or -1.
  int column(std::string_view name) const;
  const std::string& at(std::size_t row, std::string_view name) const;
};

Table parse(std::string_view text);
Table read(const std::filesystem::path& path);

std::string escape(std::string_view field);
std::string format_row(const std::vector<std::string>& fields);
std::string format(const Table& table);

// Writes through a sibling temp file and renames, so readers never see a
// half-written table.
void write(const std::filesystem::path& path, const Table& table);

// Appends one row and fsyncs before returning; creates the file with the
// header if it does not exist.
void append_durable(const std::filesystem::path& path, const std::vector<std::string>& header,
                    const std::vector<std::string>& row);

std::string fmt_double(double v, int precision = 6);

}  // namespace avicurate::csv
