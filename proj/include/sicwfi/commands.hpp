#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "sicwfi/config.hpp"

namespace sicwfi {

std::string_view software_version();

struct RunContext {
  std::filesystem::path output_dir;
  bool verbose = false;
  std::ostream* log = nullptr;  // progress lines when verbose
};

struct RunReport {
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;  // relative to the output directory
  double seconds = 0.0;
};

/// Output directory: the explicit flag, else [run] output, else
/// $SICWFI_OUTPUT_ROOT/<command>, else ./sicwfi-out/<command>.
std::filesystem::path resolve_output_dir(const std::string& flag, const RunConfig& config);

/// Worker count from [run] workers, 0 meaning all hardware threads.
int resolve_workers(const RunConfig& config);

/// Runs one command. Writes its CSV/JSON artifacts, the resolved config
/// (`config.resolved`) and `manifest.json` under the output directory.
RunReport run_command(const RunConfig& config, const RunContext& context);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace sicwfi
