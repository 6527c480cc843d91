#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace avicurate {

std::string read_text(const std::filesystem::path& path);

// Temp-file + rename; parent directories are created.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace avicurate
