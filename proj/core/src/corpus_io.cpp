#include "patchpref/corpus_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "patchpref/error.hpp"
#include "patchpref/tensor_io.hpp"

namespace fs = std::filesystem;

namespace patchpref {
namespace {

// Numeric subdirectories of `dir`, sorted by value.
std::vector<std::size_t> numbered_entries(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("missing directory " + dir.string());
  std::vector<std::size_t> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().stem().string();
    if (!name.empty() && std::all_of(name.begin(), name.end(), ::isdigit)) out.push_back(std::stoul(name));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::vector<fs::path> write_pair_corpus(const std::vector<ScenePair>& pairs, const fs::path& dir) {
  std::vector<fs::path> files;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const fs::path d = dir / "pairs" / std::to_string(i);
    const auto& p = pairs[i];
    files.push_back(d / "reference.tnsr");
    write_tensor(p.reference, files.back());
    files.push_back(d / "generated.tnsr");
    write_tensor(p.generated, files.back());
    files.push_back(d / "object_mask.tnsr");
    write_tensor(p.object_mask, files.back());
    files.push_back(d / "corruption_mask.tnsr");
    write_tensor(p.corruption_mask, files.back());
    files.push_back(d / "descriptor.txt");
    write_text(files.back(), p.descriptor.to_text());
  }
  return files;
}

ScenePair read_pair(const fs::path& d) {
  ScenePair p;
  p.reference = read_tensor(d / "reference.tnsr");
  p.generated = read_tensor(d / "generated.tnsr");
  p.object_mask = read_tensor(d / "object_mask.tnsr");
  p.corruption_mask = read_tensor(d / "corruption_mask.tnsr");
  p.descriptor = SceneDescriptor::from_text(read_text(d / "descriptor.txt"));
  return p;
}

std::vector<ScenePair> read_pair_corpus(const fs::path& dir) {
  std::vector<ScenePair> out;
  for (auto i : numbered_entries(dir / "pairs")) out.push_back(read_pair(dir / "pairs" / std::to_string(i)));
  return out;
}

std::vector<fs::path> write_correspondence_corpus(const CorrespondenceCorpus& corpus,
                                                  const fs::path& dir) {
  std::vector<fs::path> files;
  for (std::size_t g = 0; g < corpus.groups.size(); ++g) {
    const fs::path d = dir / "groups" / std::to_string(g);
    const auto& group = corpus.groups[g];
    std::string lines;
    for (std::size_t i = 0; i < group.images.size(); ++i) {
      files.push_back(d / (std::to_string(i) + ".tnsr"));
      write_tensor(group.images[i], files.back());
      lines += group.transforms[i].to_string() + "\n";
    }
    files.push_back(d / "transforms.txt");
    write_text(files.back(), lines);
  }
  return files;
}

CorrespondenceCorpus read_correspondence_corpus(const fs::path& dir, std::size_t grid) {
  CorrespondenceCorpus corpus;
  corpus.grid = grid;
  for (auto g : numbered_entries(dir / "groups")) {
    const fs::path d = dir / "groups" / std::to_string(g);
    CorrespondenceGroup group;
    std::istringstream lines(read_text(d / "transforms.txt"));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      group.transforms.push_back(GridTransform::parse(line));
    }
    for (std::size_t i = 0; i < group.transforms.size(); ++i) {
      group.images.push_back(read_tensor(d / (std::to_string(i) + ".tnsr")));
    }
    corpus.groups.push_back(std::move(group));
  }
  return corpus;
}

}  // namespace patchpref
