#include <bit>
#include <cstring>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace tabfids {
namespace {

TEST(CheckpointTest, RoundTripIsBitExact) {
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const auto spec = trial % 2 == 0 ? cnn_backbone(8 + trial) : resmlp_backbone(6 + trial, 5);
    auto w = build_model(spec, rng());
    // include values that text formats tend to mangle
    w.blocks()[0].params[0](0, 0) = -0.0;
    w.blocks()[0].params[0](0, 1) = std::nextafter(1.0, 2.0);
    w.blocks()[0].params[0](0, 2) = 4.9e-324;
    const auto bytes = encode_checkpoint(w);
    const auto back = decode_checkpoint(bytes);
    EXPECT_EQ(back, w);
    EXPECT_EQ(encode_checkpoint(back), bytes);
  }
}

TEST(CheckpointTest, FileRoundTrip) {
  testing::TempDir dir("ckpt");
  const auto w = build_model(cnn_backbone(10), 3);
  const auto path = (dir.path() / "w.ftw").string();
  save_checkpoint(w, path);
  EXPECT_EQ(load_checkpoint(path), w);
}

TEST(CheckpointTest, LayoutIsLittleEndianWithMagic) {
  BlockedWeights w({{"ab", {Matrix(1, 2, std::vector<double>{1.5, -2.0})}}});
  const auto bytes = encode_checkpoint(w);
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 4 + 8 + 8 + 16);
  EXPECT_EQ(bytes.substr(0, 4), "FTW1");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x02\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(12, 2), "ab");
  EXPECT_EQ(bytes.substr(14, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(18, 8), std::string("\x01\0\0\0\0\0\0\0", 8));
  EXPECT_EQ(bytes.substr(26, 8), std::string("\x02\0\0\0\0\0\0\0", 8));
  std::uint64_t raw = 0;
  for (int i = 7; i >= 0; --i) raw = (raw << 8) | static_cast<unsigned char>(bytes[34 + i]);
  EXPECT_EQ(std::bit_cast<double>(raw), 1.5);
}

TEST(CheckpointTest, RejectsCorruptInput) {
  const auto bytes = encode_checkpoint(build_model(resmlp_backbone(4, 3), 1));
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), DataError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(decode_checkpoint(bytes + "z"), DataError);
  EXPECT_THROW(decode_checkpoint(""), DataError);

  BlockedWeights w({{"b", {Matrix(1, 1)}}});
  auto nan_bytes = encode_checkpoint(w);
  const auto nan_bits = std::bit_cast<std::uint64_t>(std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < 8; ++i) nan_bytes[nan_bytes.size() - 8 + i] = static_cast<char>((nan_bits >> (8 * i)) & 0xff);
  EXPECT_THROW(decode_checkpoint(nan_bytes), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/path.ftw"), DataError);
}

}  // namespace
}  // namespace tabfids
