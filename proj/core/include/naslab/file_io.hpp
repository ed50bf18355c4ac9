#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace naslab {

/// Whole-file helpers. IoError names the path on failure.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Creates `dir` and its parents. IoError names the path on failure.
void ensure_directory(const std::filesystem::path& dir);

}  // namespace naslab
