#include "patchpref/checkpoint.hpp"

#include <cctype>
#include <sstream>

#include "patchpref/corpus_io.hpp"
#include "patchpref/error.hpp"
#include "patchpref/tensor_io.hpp"

namespace fs = std::filesystem;

namespace patchpref {
namespace {

std::string dims_text(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

int layer_of(const std::string& name) {
  const auto dot = name.find('.');
  const std::string head = name.substr(0, dot);
  std::size_t i = head.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(head[i - 1]))) --i;
  return i < head.size() ? std::stoi(head.substr(i)) : 0;
}

}  // namespace

std::vector<fs::path> save_checkpoint(const fs::path& dir, const std::vector<CheckpointEntry>& entries) {
  std::vector<fs::path> files;
  std::string manifest;
  for (const auto& e : entries) {
    files.push_back(dir / (e.name + ".tnsr"));
    write_tensor(e.value, files.back());
    manifest += e.name + " " + dims_text(e.value.shape()) + " " + std::to_string(e.layer) + "\n";
  }
  files.push_back(dir / "manifest.txt");
  write_text(files.back(), manifest);
  return files;
}

std::vector<CheckpointEntry> load_checkpoint(const fs::path& dir) {
  std::istringstream in(read_text(dir / "manifest.txt"));
  std::vector<CheckpointEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    CheckpointEntry e;
    std::string dims;
    if (!(fields >> e.name >> dims >> e.layer)) throw Error("malformed checkpoint manifest line: " + line);
    e.value = read_tensor(dir / (e.name + ".tnsr"));
    if (dims_text(e.value.shape()) != dims) {
      throw Error("checkpoint tensor " + e.name + " has shape " + dims_text(e.value.shape()) +
                  ", manifest says " + dims);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CheckpointEntry> make_entries(const std::vector<std::string>& names,
                                          const std::vector<Tensor>& values) {
  if (names.size() != values.size()) throw ContractError("name/value count mismatch");
  std::vector<CheckpointEntry> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.push_back({names[i], layer_of(names[i]), values[i]});
  return out;
}

void restore_params(const std::vector<CheckpointEntry>& entries, const std::vector<std::string>& names,
                    std::vector<Tensor>& params) {
  if (entries.size() != names.size()) {
    throw Error("checkpoint has " + std::to_string(entries.size()) + " tensors, model expects " +
                std::to_string(names.size()));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (entries[i].name != names[i] || entries[i].value.shape() != params[i].shape()) {
      throw Error("checkpoint tensor " + entries[i].name + " " + shape_string(entries[i].value.shape()) +
                  " does not match " + names[i] + " " + shape_string(params[i].shape()));
    }
    params[i] = entries[i].value;
  }
}

}  // namespace patchpref
