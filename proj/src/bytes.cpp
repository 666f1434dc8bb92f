#include "das/bytes.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace das {

Hash32 sha256(ByteSpan data) {
    Hash32 out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size()) {
        throw std::runtime_error("sha256: digest failed");
    }
    return out;
}

HashWriter::HashWriter() {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256: init failed");
    }
    ctx_ = ctx;
}

HashWriter::~HashWriter() {
    if (ctx_ != nullptr) EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_));
}

HashWriter& HashWriter::write(ByteSpan data) {
    if (EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size()) != 1) {
        throw std::runtime_error("sha256: update failed");
    }
    return *this;
}

HashWriter& HashWriter::write(std::string_view s) {
    return write(ByteSpan{reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

HashWriter& HashWriter::write_u64(std::uint64_t v) {
    std::uint8_t buf[8];
    for (int i = 7; i >= 0; --i) {
        buf[i] = static_cast<std::uint8_t>(v & 0xff);
        v >>= 8;
    }
    return write(ByteSpan{buf, 8});
}

Hash32 HashWriter::finish() {
    Hash32 out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len) != 1 ||
        len != out.size()) {
        throw std::runtime_error("sha256: final failed");
    }
    return out;
}

std::string to_hex(ByteSpan data) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

}  // namespace das
