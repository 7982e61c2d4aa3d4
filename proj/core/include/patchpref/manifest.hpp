#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace patchpref {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(const std::string& text, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

struct StageRecord {
  std::uint64_t input_hash = 0;
  double seconds = 0.0;
  std::vector<std::pair<std::string, std::uint64_t>> outputs;  // path relative to the run dir
};

/// Stage completion markers with artifact hashes, stored as `manifest.txt`.
class RunManifest {
 public:
  static RunManifest load(const std::filesystem::path& root);
  void save(const std::filesystem::path& root) const;

  const StageRecord* find(const std::string& stage) const;
  void set(const std::string& stage, StageRecord record);
  void erase(const std::string& stage) { stages_.erase(stage); }
  const std::map<std::string, StageRecord>& stages() const { return stages_; }

  /// True when `stage` completed with `input_hash` and every output still hashes the same.
  bool is_fresh(const std::string& stage, std::uint64_t input_hash,
                const std::filesystem::path& root) const;
  /// Hash of a completed stage's outputs, used as input to later stages.
  std::uint64_t output_digest(const std::string& stage) const;

 private:
  std::map<std::string, StageRecord> stages_;
};

/// Advisory `.lock` file holding the owner's pid; a lock whose pid is gone is taken over.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace patchpref
