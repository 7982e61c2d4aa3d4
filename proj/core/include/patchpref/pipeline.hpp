#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "patchpref/config.hpp"
#include "patchpref/error.hpp"

namespace patchpref {

/// An upstream artifact a stage needs is absent.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(const std::string& stage, const std::filesystem::path& path)
      : Error(stage + ": missing upstream artifact " + path.string()), path_(path) {}
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"gen-data", "train-ssl", "eval-spatch",
                                              "estimate-quality", "train-dpo", "evaluate"};
  return names;
}

struct RunOptions {
  std::string subcommand;
  std::string config_path;  // empty: defaults only
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool force = false;
};

/// Resolves the config (file, then flag overrides).
PipelineConfig resolve_config(const RunOptions& opts);

/// Runs one stage or `all`; throws on failure. Writes progress to `log`.
void run_stages(const RunOptions& opts, std::ostream& log);

/// Exit status wrapper: 0 success, 2 unknown config key, 3 missing upstream
/// artifact, 1 any other failure. Diagnostics go to `err`.
int run_command(const RunOptions& opts, std::ostream& log, std::ostream& err);

/// Builds report.csv from the stage CSVs under `root`; absent values are MISSING.
std::string build_report(const std::filesystem::path& root);

}  // namespace patchpref
