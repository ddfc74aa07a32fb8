#pragma once

// Helper for driving the installed CLI binary from tests. The binary path
// comes in through the GRADMARKET_CLI_PATH compile definition.

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "temp_dir.hpp"

namespace gradmarket::testing {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string shell_quote(const std::string& arg) {
  std::string quoted = "'";
  for (char c : arg) {
    if (c == '\'') {
      quoted += "'\\''";
    } else {
      quoted += c;
    }
  }
  quoted += "'";
  return quoted;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline CliResult run_cli(
    const std::vector<std::string>& args,
    const std::vector<std::pair<std::string, std::string>>& env = {}) {
  TempDir scratch;
  const std::string out_path = scratch.str("stdout");
  const std::string err_path = scratch.str("stderr");

  std::string command;
  for (const auto& [name, value] : env) {
    command += name + "=" + shell_quote(value) + " ";
  }
  command += shell_quote(GRADMARKET_CLI_PATH);
  for (const auto& arg : args) {
    command += ' ';
    command += shell_quote(arg);
  }
  command += " > " + shell_quote(out_path) + " 2> " + shell_quote(err_path);

  const int status = std::system(command.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = read_file(out_path);
  result.err = read_file(err_path);
  return result;
}

}  // namespace gradmarket::testing
