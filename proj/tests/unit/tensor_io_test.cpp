#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "patchpref/error.hpp"
#include "patchpref/pgm.hpp"
#include "patchpref/rng.hpp"
#include "patchpref/tensor_io.hpp"

using namespace patchpref;

namespace {

std::vector<std::uint8_t> header(std::uint8_t dtype, std::vector<std::uint32_t> dims) {
  std::vector<std::uint8_t> b{0x54, 0x4E, 0x53, 0x52, 1, dtype, std::uint8_t(dims.size())};
  for (auto d : dims)
    for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(d >> (8 * i)));
  return b;
}

}  // namespace

TEST(TensorIo, SequentialRoundTrip) {
  Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(decode_tensor(encode_tensor(t)), t);
}

TEST(TensorIo, LayoutIsLittleEndianWithHeader) {
  Tensor t({2, 1}, {1.0, -2.5});
  auto bytes = encode_tensor(t);
  auto expect = header(0, {2, 1});
  ASSERT_EQ(bytes.size(), expect.size() + 16);
  EXPECT_TRUE(std::equal(expect.begin(), expect.end(), bytes.begin()));
  double v;
  std::memcpy(&v, bytes.data() + expect.size() + 8, 8);
  EXPECT_EQ(v, -2.5);
}

TEST(TensorIo, ScalarRoundTrip) {
  Tensor t({}, {-7.25});
  Tensor back = decode_tensor(encode_tensor(t));
  EXPECT_TRUE(back.shape().empty());
  EXPECT_EQ(back, t);
}

TEST(TensorIo, RandomRoundTripIsBitExact) {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    Shape s;
    const auto rank = uniform_int(rng, 0, 4);
    for (int i = 0; i < rank; ++i) s.push_back(std::size_t(uniform_int(rng, 1, 5)));
    Tensor t = standard_normal(rng, s);
    Tensor back = decode_tensor(encode_tensor(t));
    ASSERT_EQ(back.shape(), t.shape());
    EXPECT_EQ(std::memcmp(back.data(), t.data(), t.size() * sizeof(double)), 0);
  }
}

TEST(TensorIo, Float32StorageRoundsToFloat) {
  Tensor t({3}, {0.1, 1.0 / 3.0, 2.0});
  auto bytes = encode_tensor(t, StorageType::kF32);
  EXPECT_EQ(bytes[5], 1);
  Tensor back = decode_tensor(bytes);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back[i], double(float(t[i])));
}

TEST(TensorIo, BadMagicReportsOffset) {
  auto bytes = encode_tensor(Tensor({1}, {1.0}));
  bytes[2] = 'X';
  try {
    decode_tensor(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
}

TEST(TensorIo, BadDtypeReportsOffset) {
  auto bytes = encode_tensor(Tensor({1}, {1.0}));
  bytes[5] = 7;
  try {
    decode_tensor(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 5u);
  }
}

TEST(TensorIo, TruncationAtEveryLengthIsFormatError) {
  auto bytes = encode_tensor(Tensor({2, 2}, {1, 2, 3, 4}));
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    std::span<const std::uint8_t> prefix(bytes.data(), n);
    EXPECT_THROW(decode_tensor(prefix), FormatError) << n;
  }
}

TEST(TensorIo, RandomBytesNeverCrash) {
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    auto bytes = header(std::uint8_t(uniform_int(rng, 0, 2)), {std::uint32_t(uniform_int(rng, 0, 3))});
    const auto extra = uniform_int(rng, 0, 40);
    for (int i = 0; i < extra; ++i) bytes.push_back(std::uint8_t(uniform_int(rng, 0, 255)));
    if (uniform_int(rng, 0, 3) == 0) bytes[std::size_t(uniform_int(rng, 0, 6))] ^= 0xFF;
    try {
      Tensor t = decode_tensor(bytes);
      EXPECT_EQ(encode_tensor(t, StorageType(bytes[5])), bytes);
    } catch (const FormatError&) {
    }
  }
}

TEST(TensorIo, FileRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "patchpref_io_test";
  std::filesystem::remove_all(dir);
  Tensor t({2, 2}, {1, 2, 3, 4});
  write_tensor(t, dir / "a" / "t.tnsr");
  EXPECT_EQ(read_tensor(dir / "a" / "t.tnsr"), t);
  std::filesystem::remove_all(dir);
}

TEST(Pgm, HeaderAndScaling) {
  Tensor m({1, 3}, {0.0, 0.5, 2.0});
  auto bytes = encode_pgm(m);
  const std::string head = "P5\n3 1\n255\n";
  ASSERT_EQ(bytes.size(), head.size() + 3);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + head.size()), head);
  EXPECT_EQ(bytes[head.size()], 0);
  EXPECT_EQ(bytes[head.size() + 1], 128);
  EXPECT_EQ(bytes[head.size() + 2], 255);
  Tensor c = cosine_to_unit(Tensor({2}, {-1.0, 1.0}));
  EXPECT_EQ(c, Tensor({2}, {0.0, 1.0}));
}
