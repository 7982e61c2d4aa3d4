#include "patchpref/manifest.hpp"

#include <cerrno>
#include <csignal>
#include <cstdio>
#include <fcntl.h>
#include <sstream>
#include <unistd.h>

#include "patchpref/corpus_io.hpp"
#include "patchpref/error.hpp"
#include "patchpref/tensor_io.hpp"

namespace fs = std::filesystem;

namespace patchpref {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& text, std::uint64_t h) {
  return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), h);
}

std::uint64_t hash_file(const fs::path& path) { return fnv1a64(read_file_bytes(path)); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

RunManifest RunManifest::load(const fs::path& root) {
  RunManifest m;
  const fs::path file = root / "manifest.txt";
  if (!fs::exists(file)) return m;
  std::istringstream in(read_text(file));
  std::string line, current;
  while (std::getline(in, line)) {
    std::istringstream f(line);
    std::string tag;
    f >> tag;
    if (tag == "stage") {
      std::string hash;
      StageRecord r;
      f >> current >> hash >> r.seconds;
      r.input_hash = std::stoull(hash, nullptr, 16);
      m.stages_[current] = r;
    } else if (tag == "file" && !current.empty()) {
      std::string path, hash;
      f >> path >> hash;
      m.stages_[current].outputs.emplace_back(path, std::stoull(hash, nullptr, 16));
    }
  }
  return m;
}

void RunManifest::save(const fs::path& root) const {
  std::ostringstream out;
  for (const auto& [name, r] : stages_) {
    out << "stage " << name << ' ' << hex64(r.input_hash) << ' ' << r.seconds << '\n';
    for (const auto& [path, hash] : r.outputs) out << "file " << path << ' ' << hex64(hash) << '\n';
  }
  write_text(root / "manifest.txt", out.str());
}

const StageRecord* RunManifest::find(const std::string& stage) const {
  const auto it = stages_.find(stage);
  return it == stages_.end() ? nullptr : &it->second;
}

void RunManifest::set(const std::string& stage, StageRecord record) { stages_[stage] = std::move(record); }

bool RunManifest::is_fresh(const std::string& stage, std::uint64_t input_hash, const fs::path& root) const {
  const StageRecord* r = find(stage);
  if (!r || r->input_hash != input_hash) return false;
  for (const auto& [path, hash] : r->outputs) {
    if (!fs::exists(root / path) || hash_file(root / path) != hash) return false;
  }
  return true;
}

std::uint64_t RunManifest::output_digest(const std::string& stage) const {
  const StageRecord* r = find(stage);
  if (!r) return 0;
  std::uint64_t h = fnv1a64(stage);
  for (const auto& [path, hash] : r->outputs) h = fnv1a64(path + ":" + hex64(hash), h);
  return h;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw Error("cannot create lock " + path_.string());
    long owner = 0;
    try {
      owner = std::stol(read_text(path_));
    } catch (const std::exception&) {
      owner = 0;
    }
    if (owner > 0 && ::kill(static_cast<pid_t>(owner), 0) == 0) {
      throw Error("output directory " + dir.string() + " is locked by pid " + std::to_string(owner));
    }
    fs::remove(path_);  // stale lock from a dead process
  }
  throw Error("cannot acquire lock " + path_.string());
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace patchpref
