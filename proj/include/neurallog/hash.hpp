#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace neurallog {

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);

/// FNV-1a 64 of a file's bytes. Throws DataError if unreadable.
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

std::string to_hex(std::uint64_t value);

/// SplitMix64 finalizer; used to derive independent sub-seeds from one root.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace neurallog
