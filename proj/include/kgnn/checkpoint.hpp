#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kgnn/bytes.hpp"
#include "kgnn/params.hpp"

namespace kgnn {

inline constexpr std::uint32_t kCheckpointMagic = 0x4E4E474B;  // "KGNN" little-endian
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: magic, u32 version, u32 n_kinds then per kind [u8 kind][u32 rank][rank x u32],
// then [u32 n][n x (u8 kind, u64 id, u32 numel, numel x f64)] sorted by key.
std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params);
ParameterSet decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet read_checkpoint(const std::filesystem::path& path);

// Records a file name in <dir>/latest and prunes checkpoint-epoch-*.kgnn beyond `keep`.
void publish_checkpoint(const std::filesystem::path& dir, const std::filesystem::path& written, std::size_t keep);
std::filesystem::path checkpoint_name(std::size_t epoch);
// Path named by <dir>/latest; `dir` itself is returned when it is a file.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& dir_or_file);

}  // namespace kgnn
