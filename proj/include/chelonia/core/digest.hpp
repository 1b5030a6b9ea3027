#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace chelonia {

inline constexpr std::string_view kDefaultChecksumType = "sha256";

// Hex digest of `data`. Supported types: sha256, sha1, md5.
std::string checksum(std::span<const std::uint8_t> data, std::string_view type = kDefaultChecksumType);

std::string toHex(std::span<const std::uint8_t> data);

// Bytes from the operating system's cryptographic generator.
void secureRandom(std::span<std::uint8_t> out);

}  // namespace chelonia
