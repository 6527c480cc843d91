#include "avicurate/csv.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>

#include "avicurate/error.hpp"
#include "avicurate/fs_util.hpp"

namespace avicurate::csv {

namespace fs = std::filesystem;

int Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

const std::string& Table::at(std::size_t row, std::string_view name) const {
  const int c = column(name);
  if (c < 0) throw Error(ErrorCode::InvalidArgument, "no column '" + std::string(name) + "'");
  const auto& r = rows.at(row);
  static const std::string kEmpty;
  return static_cast<std::size_t>(c) < r.size() ? r[c] : kEmpty;
}

Table parse(std::string_view text) {
  Table t;
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  std::size_t i = 0;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          record.push_back(std::move(field));
          records.push_back(std::move(record));
        }
        field.clear();
        record.clear();
        any = false;
        break;
      default:
        field.push_back(c);
        any = true;
    }
  }
  if (any || !field.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  if (!records.empty()) {
    t.header = std::move(records.front());
    t.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  }
  return t;
}

Table read(const fs::path& path) { return parse(read_text(path)); }

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_row(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line.push_back(',');
    line += escape(fields[i]);
  }
  line.push_back('\n');
  return line;
}

std::string format(const Table& table) {
  std::string out = format_row(table.header);
  for (const auto& r : table.rows) out += format_row(r);
  return out;
}

void write(const fs::path& path, const Table& table) { write_text_atomic(path, format(table)); }

void append_durable(const fs::path& path, const std::vector<std::string>& header,
                    const std::vector<std::string>& row) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::string payload;
  if (fresh) payload += format_row(header);
  payload += format_row(row);
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error(ErrorCode::IOFailure, "cannot open " + path.string());
  std::size_t off = 0;
  while (off < payload.size()) {
    const ssize_t n = ::write(fd, payload.data() + off, payload.size() - off);
    if (n <= 0) {
      ::close(fd);
      throw Error(ErrorCode::IOFailure, "append to " + path.string());
    }
    off += static_cast<std::size_t>(n);
  }
  const int rc = ::fsync(fd);
  ::close(fd);
  if (rc != 0) throw Error(ErrorCode::IOFailure, "fsync " + path.string());
}

std::string fmt_double(double v, int precision) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

}  // namespace avicurate::csv
