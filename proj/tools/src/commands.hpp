#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "gradmarket/config.hpp"

namespace gradmarket::cli {

// Shared flag bundle; every command receives the subset it understands.
struct CommonOptions {
  std::vector<std::string> overrides;  // --set key=value, applied in order
  std::string out_dir = "out";
  bool out_given = false;  // --out passed explicitly (beats a sweep spec's out)
  int jobs = 1;
  std::optional<std::uint64_t> seed;  // --seed, wins over --set seed=...
};

// Exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitRuntimeError = 2;
inline constexpr int kExitCellFailure = 3;  // sweep only

int cmd_run(const std::string& config_path, const CommonOptions& opts);
int cmd_sweep(const std::string& spec_path, const CommonOptions& opts);
int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir);

// Write `body` to `path` via a temp file + rename so readers never observe a
// partial file. Creates parent directories.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("cannot write " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace gradmarket::cli
