#include "dot/tree_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dot/error.hpp"

namespace dot {

namespace {

constexpr char kMagic[4] = {'D', 'O', 'T', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 6 * 8 + 8;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(FormatError::Kind::kStructure, "tree file: unexpected end of node data");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> serialize_tree(const SparseOctree& tree) {
  std::vector<std::uint32_t> remap;
  const SparseOctree compact = tree.compacted(&remap);
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kTreeFileVersion);
  w.u32(static_cast<std::uint32_t>(compact.basis_count()));
  w.u32(static_cast<std::uint32_t>(compact.max_depth()));
  const Cube& bounds = compact.bounds();
  for (int a = 0; a < 3; ++a) w.f64(bounds.center[a]);
  for (int a = 0; a < 3; ++a) w.f64(bounds.half);
  w.u64(compact.capacity());
  for (std::uint32_t i = 0; i < compact.capacity(); ++i) {
    if (compact.slot_is_leaf(i)) {
      w.u8(1);
      for (float v : compact.slot_payload(i)) w.f32(v);
    } else {
      w.u8(0);
      for (std::uint32_t c : compact.slot_children(i)) w.u64(c);
    }
  }
  std::vector<std::uint8_t>& bytes = w.bytes();
  const std::uint32_t crc = crc32_of(bytes);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  return std::move(bytes);
}

SparseOctree deserialize_tree(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError(FormatError::Kind::kCrc, "tree file: missing CRC");
  const std::span<const std::uint8_t> body = bytes.first(bytes.size() - 4);
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body.size() + i]) << (8 * i);
  if (crc32_of(body) != stored) throw FormatError(FormatError::Kind::kCrc, "tree file: CRC mismatch");
  if (body.size() < 4 || std::memcmp(body.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kMagic, "tree file: bad magic");
  }
  Reader r(body.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kTreeFileVersion) {
    throw FormatError(FormatError::Kind::kVersion,
                      "tree file: unsupported version " + std::to_string(version));
  }
  if (body.size() < kHeaderBytes) {
    throw FormatError(FormatError::Kind::kStructure, "tree file: truncated header");
  }
  const std::uint32_t basis_count = r.u32();
  const std::uint32_t max_depth = r.u32();
  Vec3 center;
  double halves[3];
  for (int a = 0; a < 3; ++a) center[a] = r.f64();
  for (double& h : halves) h = r.f64();
  const std::uint64_t node_count = r.u64();
  if (!is_valid_basis_count(static_cast<int>(basis_count)) || max_depth > 20) {
    throw FormatError(FormatError::Kind::kStructure, "tree file: invalid basis count or depth");
  }
  const double half = halves[0];
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(center[a]) || !std::isfinite(halves[a]) || !(halves[a] > 0.0) ||
        halves[a] != half) {
      throw FormatError(FormatError::Kind::kStructure, "tree file: bounds are not a cube");
    }
  }
  // A node needs at least 1 + 4 bytes, which bounds node_count before allocating.
  if (node_count == 0 || node_count > r.remaining() / 5) {
    throw FormatError(FormatError::Kind::kStructure, "tree file: implausible node count");
  }
  const Cube bounds{center, half};
  const std::size_t stride = 1 + 3 * static_cast<std::size_t>(basis_count);
  std::vector<SparseOctree::Record> records(node_count);
  for (auto& rec : records) {
    const std::uint8_t tag = r.u8();
    if (tag == 0) {
      rec.leaf = false;
      for (auto& c : rec.children) c = r.u64();
    } else if (tag == 1) {
      rec.leaf = true;
      rec.payload.resize(stride);
      for (float& v : rec.payload) v = r.f32();
    } else {
      throw FormatError(FormatError::Kind::kStructure, "tree file: unknown node tag");
    }
  }
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::kStructure, "tree file: trailing bytes");
  return SparseOctree::from_records(bounds, static_cast<int>(basis_count),
                                    static_cast<int>(max_depth), records);
}

void save_tree(const SparseOctree& tree, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_tree(tree);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::kIo, "failed writing " + path.string());
}

SparseOctree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open tree file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_tree(bytes);
}

}  // namespace dot
