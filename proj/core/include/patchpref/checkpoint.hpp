#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "patchpref/tensor.hpp"

namespace patchpref {

struct CheckpointEntry {
  std::string name;
  int layer = 0;  // 1-based layer the tensor belongs to, 0 if none
  Tensor value;
};

/// One `<name>.tnsr` per entry plus `manifest.txt` (`name shape layer` per line).
/// Returns the written paths, manifest last.
std::vector<std::filesystem::path> save_checkpoint(const std::filesystem::path& dir,
                                                   const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& dir);

/// Builds entries from parallel name/value lists; layer parsed from a trailing
/// number in the name prefix ("conv3.weight" → 3).
std::vector<CheckpointEntry> make_entries(const std::vector<std::string>& names,
                                          const std::vector<Tensor>& values);
/// Copies checkpoint values into `params` by name, checking shapes.
void restore_params(const std::vector<CheckpointEntry>& entries, const std::vector<std::string>& names,
                    std::vector<Tensor>& params);

}  // namespace patchpref
