#include "patchpref/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "patchpref/error.hpp"

namespace patchpref {
namespace {

constexpr std::uint8_t kMagic[4] = {0x54, 0x4E, 0x53, 0x52};
constexpr std::uint8_t kVersion = 1;

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(std::span<const std::uint8_t> in, std::size_t pos) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in[pos + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t, StorageType dtype) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  if (t.rank() > 255) throw ContractError("TNSR supports at most 255 dimensions");
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > 0xFFFFFFFFu) throw ContractError("dimension exceeds u32: " + std::to_string(d));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  const std::size_t width = dtype == StorageType::kF64 ? 8 : 4;
  out.reserve(out.size() + t.size() * width);
  for (double v : t.values()) {
    if (dtype == StorageType::kF64) {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    } else {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("truncated magic", bytes.size());
  for (std::size_t i = 0; i < 4; ++i) {
    if (bytes[i] != kMagic[i]) throw FormatError("bad magic", i);
  }
  if (bytes.size() < 7) throw FormatError("truncated header", bytes.size());
  if (bytes[4] != kVersion) throw FormatError("unsupported version " + std::to_string(bytes[4]), 4);
  if (bytes[5] > 1) throw FormatError("dtype byte " + std::to_string(bytes[5]) + " not in {0,1}", 5);
  const auto dtype = static_cast<StorageType>(bytes[5]);
  const std::size_t ndim = bytes[6];
  std::size_t pos = 7;
  if (bytes.size() < pos + 4 * ndim) throw FormatError("truncated dims", bytes.size());
  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i, pos += 4) {
    shape[i] = get_le<std::uint32_t>(bytes, pos);
    if (shape[i] == 0) throw FormatError("zero dimension", pos);
  }
  const std::size_t count = shape_size(shape);
  const std::size_t width = dtype == StorageType::kF64 ? 8 : 4;
  if (bytes.size() - pos < count * width) throw FormatError("truncated payload", bytes.size());
  if (bytes.size() - pos > count * width) throw FormatError("trailing bytes", pos + count * width);
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i, pos += width) {
    data[i] = dtype == StorageType::kF64
                  ? std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos))
                  : static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos)));
  }
  return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

void write_tensor(const Tensor& t, const std::filesystem::path& path, StorageType dtype) {
  write_file_bytes(path, encode_tensor(t, dtype));
}

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file_bytes(path)); }

}  // namespace patchpref
