#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "tabfids/error.hpp"
#include "tabfids/network.hpp"

namespace tabfids {

// Layout, all integers little-endian:
//   "FTW1"
//   u32 block_count
//   per block: u32 name_len, name bytes, u32 matrix_count,
//              per matrix: u64 rows, u64 cols, rows*cols f64
namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t get(int width) {
    if (pos_ + width > bytes_.size()) throw DataError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += width;
    return v;
  }

  std::string take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint truncated");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'F', 'T', 'W', '1'};

inline std::string encode_checkpoint(const BlockedWeights& w) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(w.block_count()));
  for (const auto& block : w.blocks()) {
    detail::put_u32(out, static_cast<std::uint32_t>(block.name.size()));
    out += block.name;
    detail::put_u32(out, static_cast<std::uint32_t>(block.params.size()));
    for (const auto& m : block.params) {
      detail::put_u64(out, m.rows());
      detail::put_u64(out, m.cols());
      for (double v : m.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

inline BlockedWeights decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw DataError("not an FTW1 checkpoint");
  }
  detail::Reader in(bytes);
  (void)in.take(4);
  const auto nblocks = in.get(4);
  std::vector<WeightBlock> blocks;
  for (std::uint64_t b = 0; b < nblocks; ++b) {
    WeightBlock block;
    block.name = in.take(in.get(4));
    const auto nmat = in.get(4);
    for (std::uint64_t i = 0; i < nmat; ++i) {
      const auto rows = in.get(8);
      const auto cols = in.get(8);
      if (cols != 0 && rows > (bytes.size() / 8) / cols) {
        throw DataError("checkpoint matrix dimensions exceed file size");
      }
      std::vector<double> data(rows * cols);
      for (auto& v : data) v = std::bit_cast<double>(in.get(8));
      try {
        block.params.emplace_back(rows, cols, std::move(data));
      } catch (const ShapeError& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
      }
    }
    blocks.push_back(std::move(block));
  }
  if (!in.done()) throw DataError("checkpoint has trailing bytes");
  return BlockedWeights(std::move(blocks));
}

inline void save_checkpoint(const BlockedWeights& w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write checkpoint " + path);
  const std::string bytes = encode_checkpoint(w);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeError("failed writing checkpoint " + path);
}

inline BlockedWeights load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace tabfids
