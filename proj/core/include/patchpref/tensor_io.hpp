#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "patchpref/tensor.hpp"

namespace patchpref {

enum class StorageType : std::uint8_t { kF64 = 0, kF32 = 1 };

/// Serializes `t` to TNSR bytes. f32 storage rounds each value to float.
std::vector<std::uint8_t> encode_tensor(const Tensor& t, StorageType dtype = StorageType::kF64);
/// Parses TNSR bytes; throws FormatError with the failing byte offset.
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const Tensor& t, const std::filesystem::path& path,
                  StorageType dtype = StorageType::kF64);
Tensor read_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace patchpref
