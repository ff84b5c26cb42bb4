#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dot/octree.hpp"

namespace dot {

inline constexpr std::uint32_t kTreeFileVersion = 1;

// DOT1 container, little-endian:
//   "DOT1" | version u32 | basis_count u32 | max_depth u32 |
//   bounds center xyz, half-extent xyz (6 x f64) | node_count u64 |
//   node records in pre-order (u8 tag: 0 internal + 8 x u64 children,
//   1 leaf + f32 sigma + 3B x f32 sh) | CRC32 of all preceding bytes.
std::vector<std::uint8_t> serialize_tree(const SparseOctree& tree);
// Throws FormatError (kCrc, kMagic, kVersion, kStructure).
SparseOctree deserialize_tree(std::span<const std::uint8_t> bytes);

void save_tree(const SparseOctree& tree, const std::filesystem::path& path);
SparseOctree load_tree(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace dot
