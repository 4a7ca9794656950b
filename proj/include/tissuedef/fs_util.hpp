#pragma once

#include <filesystem>
#include <functional>
#include <string>

namespace tissuedef {

/// Writes `contents` to `path` through a sibling temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Fills a fresh temporary directory via `fill`, then swaps it into `dir`.
/// On failure the previous contents of `dir` are left untouched.
void write_directory_atomic(const std::filesystem::path& dir,
                            const std::function<void(const std::filesystem::path&)>& fill);

}  // namespace tissuedef
