#include "chelonia/core/wire.hpp"

#include <cstring>

#include "chelonia/core/errors.hpp"

namespace chelonia::wire {
namespace {

enum Tag : std::uint8_t {
  kNull = 0,
  kFalse = 1,
  kTrue = 2,
  kInt = 3,
  kUInt = 4,
  kDouble = 5,
  kString = 6,
  kArray = 7,
  kObject = 8,
  kBinary = 9,
};

void putU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void putU64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void encodeInto(const Value& v, std::string& out) {
  switch (v.type()) {
    case Value::value_t::null:
    case Value::value_t::discarded:
      out.push_back(static_cast<char>(kNull));
      break;
    case Value::value_t::boolean:
      out.push_back(static_cast<char>(v.get<bool>() ? kTrue : kFalse));
      break;
    case Value::value_t::number_integer:
      out.push_back(static_cast<char>(kInt));
      putU64(out, static_cast<std::uint64_t>(v.get<std::int64_t>()));
      break;
    case Value::value_t::number_unsigned:
      out.push_back(static_cast<char>(kUInt));
      putU64(out, v.get<std::uint64_t>());
      break;
    case Value::value_t::number_float: {
      out.push_back(static_cast<char>(kDouble));
      double d = v.get<double>();
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof bits);
      putU64(out, bits);
      break;
    }
    case Value::value_t::string: {
      const auto& s = v.get_ref<const std::string&>();
      out.push_back(static_cast<char>(kString));
      putU32(out, static_cast<std::uint32_t>(s.size()));
      out.append(s);
      break;
    }
    case Value::value_t::array:
      out.push_back(static_cast<char>(kArray));
      putU32(out, static_cast<std::uint32_t>(v.size()));
      for (const auto& item : v) encodeInto(item, out);
      break;
    case Value::value_t::object:
      out.push_back(static_cast<char>(kObject));
      putU32(out, static_cast<std::uint32_t>(v.size()));
      for (const auto& [key, item] : v.items()) {
        putU32(out, static_cast<std::uint32_t>(key.size()));
        out.append(key);
        encodeInto(item, out);
      }
      break;
    case Value::value_t::binary: {
      const auto& b = v.get_binary();
      out.push_back(static_cast<char>(kBinary));
      putU32(out, static_cast<std::uint32_t>(b.size()));
      out.append(reinterpret_cast<const char*>(b.data()), b.size());
      break;
    }
  }
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  Value value(int depth = 0) {
    if (depth > 256) fail("nesting too deep");
    auto tag = static_cast<Tag>(u8());
    switch (tag) {
      case kNull:
        return nullptr;
      case kFalse:
        return false;
      case kTrue:
        return true;
      case kInt:
        return static_cast<std::int64_t>(u64());
      case kUInt:
        return u64();
      case kDouble: {
        std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof d);
        return d;
      }
      case kString:
        return std::string(take(u32()));
      case kArray: {
        std::uint32_t n = u32();
        Value arr = Value::array();
        for (std::uint32_t i = 0; i < n; ++i) arr.push_back(value(depth + 1));
        return arr;
      }
      case kObject: {
        std::uint32_t n = u32();
        Value obj = Value::object();
        for (std::uint32_t i = 0; i < n; ++i) {
          std::string key(take(u32()));
          obj[key] = value(depth + 1);
        }
        return obj;
      }
      case kBinary: {
        auto raw = take(u32());
        return Value::binary(Bytes(raw.begin(), raw.end()));
      }
    }
    fail("unknown tag");
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  [[noreturn]] void fail(const char* what) const {
    throw Error(errc::kBadRequest, std::string("malformed payload: ") + what);
  }

  std::string_view take(std::size_t n) {
    if (data_.size() - pos_ < n) fail("truncated");
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }

  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[i])) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(s[i])) << (8 * i);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::size_t sizeOf(const Value& v) {
  switch (v.type()) {
    case Value::value_t::null:
    case Value::value_t::discarded:
    case Value::value_t::boolean:
      return 1;
    case Value::value_t::number_integer:
    case Value::value_t::number_unsigned:
    case Value::value_t::number_float:
      return 9;
    case Value::value_t::string:
      return 5 + v.get_ref<const std::string&>().size();
    case Value::value_t::array: {
      std::size_t n = 5;
      for (const auto& item : v) n += sizeOf(item);
      return n;
    }
    case Value::value_t::object: {
      std::size_t n = 5;
      for (const auto& [key, item] : v.items()) n += 4 + key.size() + sizeOf(item);
      return n;
    }
    case Value::value_t::binary:
      return 5 + v.get_binary().size();
  }
  return 0;
}

}  // namespace

std::string encode(const Value& value) {
  std::string out;
  out.reserve(sizeOf(value));
  encodeInto(value, out);
  return out;
}

Value decode(std::string_view data) {
  Reader reader(data);
  Value v = reader.value();
  if (!reader.done()) throw Error(errc::kBadRequest, "malformed payload: trailing bytes");
  return v;
}

std::size_t encodedSize(const Value& value) { return sizeOf(value); }

std::string frame(const Value& value) {
  std::string body;
  body.push_back(static_cast<char>(kSchemaVersion));
  encodeInto(value, body);
  std::string out;
  out.reserve(body.size() + 4);
  putU32(out, static_cast<std::uint32_t>(body.size()));
  out += body;
  return out;
}

std::size_t unframe(std::string_view data, Value& out) {
  if (data.size() < 4) return 0;
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[i])) << (8 * i);
  if (data.size() - 4 < len) return 0;
  if (len == 0 || static_cast<std::uint8_t>(data[4]) != kSchemaVersion) {
    throw Error(errc::kBadRequest, "unsupported frame schema");
  }
  out = decode(data.substr(5, len - 1));
  return 4 + len;
}

Value binary(const Bytes& bytes) { return Value::binary(bytes); }

Bytes toBytes(const Value& value) {
  if (value.is_binary()) {
    const auto& b = value.get_binary();
    return Bytes(b.begin(), b.end());
  }
  if (value.is_null()) return {};
  throw Error(errc::kBadRequest, "expected binary field");
}

}  // namespace chelonia::wire
