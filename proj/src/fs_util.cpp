#include "tissuedef/fs_util.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "tissuedef/error.hpp"

namespace tissuedef {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_directory_atomic(const fs::path& dir, const std::function<void(const fs::path&)>& fill) {
  std::error_code ec;
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent, ec);
  if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
  fs::path staging = dir;
  staging += ".staging";
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) throw IoError("cannot create directory " + staging.string() + ": " + ec.message());
  try {
    fill(staging);
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  fs::path old = dir;
  old += ".old";
  fs::remove_all(old, ec);
  if (fs::exists(dir)) {
    fs::rename(dir, old, ec);
    if (ec) throw IoError("cannot move aside " + dir.string() + ": " + ec.message());
  }
  fs::rename(staging, dir, ec);
  if (ec) throw IoError("cannot rename " + staging.string() + " to " + dir.string() + ": " + ec.message());
  fs::remove_all(old, ec);
}

}  // namespace tissuedef
