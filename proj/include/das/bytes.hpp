// Byte buffers, 32-byte digests, and SHA-256 helpers used for ids, proofs
// and deterministic seed derivation.

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace das {

using Bytes = std::vector<std::uint8_t>;
using ByteSpan = std::span<const std::uint8_t>;
using Hash32 = std::array<std::uint8_t, 32>;

// One-shot SHA-256 (OpenSSL EVP under the hood).
Hash32 sha256(ByteSpan data);

// Incremental builder for hashing heterogeneous fields without
// intermediate copies. Field order defines the digest.
class HashWriter {
public:
    HashWriter();
    ~HashWriter();
    HashWriter(const HashWriter&) = delete;
    HashWriter& operator=(const HashWriter&) = delete;

    HashWriter& write(ByteSpan data);
    HashWriter& write(std::string_view s);
    HashWriter& write_u64(std::uint64_t v);  // big-endian
    Hash32 finish();

private:
    void* ctx_;
};

// First 8 bytes of a digest as a big-endian integer. Used to seed PRNGs
// from domain-separated hashes.
inline std::uint64_t hash_to_u64(const Hash32& h) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | h[static_cast<std::size_t>(i)];
    return v;
}

inline ByteSpan as_span(const Hash32& h) { return ByteSpan{h.data(), h.size()}; }

std::string to_hex(ByteSpan data);

}  // namespace das
