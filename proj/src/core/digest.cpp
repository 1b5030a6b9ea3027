#include "chelonia/core/digest.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <memory>

#include "chelonia/core/errors.hpp"

namespace chelonia {

std::string toHex(std::span<const std::uint8_t> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::string checksum(std::span<const std::uint8_t> data, std::string_view type) {
  const EVP_MD* md = nullptr;
  if (type == "sha256") {
    md = EVP_sha256();
  } else if (type == "sha1") {
    md = EVP_sha1();
  } else if (type == "md5") {
    md = EVP_md5();
  } else {
    throw Error(errc::kBadRequest, "unsupported checksum type " + std::string(type));
  }
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error(errc::kBackendFailure, "digest computation failed");
  }
  return toHex(std::span<const std::uint8_t>(digest, len));
}

void secureRandom(std::span<std::uint8_t> out) {
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw Error(errc::kBackendFailure, "random generator failure");
  }
}

}  // namespace chelonia
