#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace oddr::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 2;
inline constexpr int kConfigError = 3;
inline constexpr int kRunAborted = 4;
inline constexpr int kIoError = 5;

/// Entry point shared by the `oddr` tool and the tests. Subcommands:
/// prepare, run, compare, surge, report.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// One row of the comparison table, read from a run directory.
struct CompareRow {
  std::string label;
  double gmv = 0.0;
  double orr = 0.0;
  double window_gmv[3] = {0.0, 0.0, 0.0};  // morning, noon, evening
  double window_orr[3] = {0.0, 0.0, 0.0};
};

/// Reads <dir>/report.json. Throws std::runtime_error naming the directory
/// when the report is missing or has another format version.
CompareRow read_compare_row(const std::filesystem::path& dir);
std::string compare_csv(const std::vector<CompareRow>& rows);
std::string compare_text(const std::vector<CompareRow>& rows);

}  // namespace oddr::cli
