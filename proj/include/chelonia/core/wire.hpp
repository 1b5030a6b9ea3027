#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace chelonia {

using Value = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

namespace wire {

inline constexpr std::uint8_t kSchemaVersion = 1;

// Binary encoding of a Value tree. Every length and count is a fixed
// 4-byte little-endian field and every number is 8 bytes, so the encoded
// size of a map grows by exactly the same amount per added entry. Object
// keys come out sorted, which makes the encoding canonical.
std::string encode(const Value& value);

// Inverse of encode(). Throws Error(bad-request) on malformed input.
Value decode(std::string_view data);

// Encoded size without materializing the buffer.
std::size_t encodedSize(const Value& value);

// Framing used by the socket transport and the on-disk log: a 4-byte
// length prefix followed by a schema byte and the encoded value.
std::string frame(const Value& value);

// Returns the number of bytes consumed, or 0 when `data` does not yet hold
// a whole frame.
std::size_t unframe(std::string_view data, Value& out);

Value binary(const Bytes& bytes);
Bytes toBytes(const Value& value);

}  // namespace wire
}  // namespace chelonia
