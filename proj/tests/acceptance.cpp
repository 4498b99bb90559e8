// One line per acceptance criterion. Criteria 1-7 run in process; criterion 8
// runs the CLI `verify` pipeline twice and compares the reports byte for byte.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "hjreduce/verify.hpp"

namespace fs = std::filesystem;
using namespace hjreduce;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Runs `hjreduce verify` into `dir` and returns the report text.
std::string verify_once(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path cfg = dir / "verify.json";
  std::ofstream(cfg) << "{\"module\": \"verify\", \"output_dir\": \"" << (dir / "out").string() << "\"}\n";
  const std::string cmd = std::string(HJREDUCE_CLI_PATH) + " verify --quiet --config " + cfg.string() + " > " +
                          (dir / "stdout.txt").string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  (void)rc;  // the report content is what is compared
  return slurp(dir / "out" / "verify_report.txt");
}

}  // namespace

int main() {
  const auto rep = verify::run_core();
  bool ok = rep.pass();
  for (const auto& r : rep.rows) std::cout << verify::render_row(r) << std::flush;

  const fs::path base = fs::temp_directory_path() / ("hjreduce_acceptance_" + std::to_string(::getpid()));
  const std::string a = verify_once(base / "first");
  const std::string b = verify_once(base / "second");
  const auto row = verify::determinism_row(a, b);
  ok = ok && row.pass();
  std::cout << verify::render_row(row);
  std::error_code ec;
  fs::remove_all(base, ec);
  return ok ? 0 : 1;
}
