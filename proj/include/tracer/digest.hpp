#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "tracer/errors.hpp"

namespace tracer {

// SHA-256 of the input, hex-encoded.
inline std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int out_len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr) throw error("sha256: failed to allocate digest context");
    bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
              EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
              EVP_DigestFinal_ex(ctx, out.data(), &out_len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw error("sha256: digest computation failed");

    static const char hex[] = "0123456789abcdef";
    std::string result;
    result.reserve(out_len * 2);
    for (unsigned int i = 0; i < out_len; ++i) {
        result.push_back(hex[out[i] >> 4]);
        result.push_back(hex[out[i] & 0xf]);
    }
    return result;
}

// Digest over multiple fields with an unambiguous separator so that
// ("ab","c") and ("a","bc") never collide.
inline std::string sha256_hex_fields(std::initializer_list<std::string_view> fields) {
    std::string joined;
    for (const auto& f : fields) {
        joined += std::to_string(f.size());
        joined += ':';
        joined += f;
    }
    return sha256_hex(joined);
}

}  // namespace tracer
