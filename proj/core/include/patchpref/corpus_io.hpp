#pragma once

#include <filesystem>
#include <vector>

#include "patchpref/synth.hpp"

namespace patchpref {

/// Writes `pairs/<index>/{reference,generated,object_mask,corruption_mask}.tnsr` and
/// `descriptor.txt` under `dir`. Returns the written file paths.
std::vector<std::filesystem::path> write_pair_corpus(const std::vector<ScenePair>& pairs,
                                                     const std::filesystem::path& dir);
ScenePair read_pair(const std::filesystem::path& pair_dir);
std::vector<ScenePair> read_pair_corpus(const std::filesystem::path& dir);

/// Writes `groups/<g>/<i>.tnsr` and `groups/<g>/transforms.txt` under `dir`.
std::vector<std::filesystem::path> write_correspondence_corpus(const CorrespondenceCorpus& corpus,
                                                               const std::filesystem::path& dir);
CorrespondenceCorpus read_correspondence_corpus(const std::filesystem::path& dir, std::size_t grid);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace patchpref
