#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace ckprobe {

/// Calls `fn` for every line of a plain or gzip-compressed file, without the
/// trailing newline. Throws ConfigError if the file cannot be opened.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view)>& fn);

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Fixed-point with `digits` decimals.
std::string format_fixed(double v, int digits);

}  // namespace ckprobe
