#include "fairex/hashchain.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace fairex {

namespace {

constexpr std::array<std::uint32_t, 8> kInitialState = {
    0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
    0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u,
};

constexpr std::array<std::uint32_t, 64> kRoundConstants = {
    0x428a2f98u, 0x71374491u, 0xb5c0fbcfu, 0xe9b5dba5u, 0x3956c25bu, 0x59f111f1u,
    0x923f82a4u, 0xab1c5ed5u, 0xd807aa98u, 0x12835b01u, 0x243185beu, 0x550c7dc3u,
    0x72be5d74u, 0x80deb1feu, 0x9bdc06a7u, 0xc19bf174u, 0xe49b69c1u, 0xefbe4786u,
    0x0fc19dc6u, 0x240ca1ccu, 0x2de92c6fu, 0x4a7484aau, 0x5cb0a9dcu, 0x76f988dau,
    0x983e5152u, 0xa831c66du, 0xb00327c8u, 0xbf597fc7u, 0xc6e00bf3u, 0xd5a79147u,
    0x06ca6351u, 0x14292967u, 0x27b70a85u, 0x2e1b2138u, 0x4d2c6dfcu, 0x53380d13u,
    0x650a7354u, 0x766a0abbu, 0x81c2c92eu, 0x92722c85u, 0xa2bfe8a1u, 0xa81a664bu,
    0xc24b8b70u, 0xc76c51a3u, 0xd192e819u, 0xd6990624u, 0xf40e3585u, 0x106aa070u,
    0x19a4c116u, 0x1e376c08u, 0x2748774cu, 0x34b0bcb5u, 0x391c0cb3u, 0x4ed8aa4au,
    0x5b9cca4fu, 0x682e6ff3u, 0x748f82eeu, 0x78a5636fu, 0x84c87814u, 0x8cc70208u,
    0x90befffau, 0xa4506cebu, 0xbef9a3f7u, 0xc67178f2u,
};

inline std::uint32_t big_sigma0(std::uint32_t x) {
    return std::rotr(x, 2) ^ std::rotr(x, 13) ^ std::rotr(x, 22);
}
inline std::uint32_t big_sigma1(std::uint32_t x) {
    return std::rotr(x, 6) ^ std::rotr(x, 11) ^ std::rotr(x, 25);
}
inline std::uint32_t small_sigma0(std::uint32_t x) {
    return std::rotr(x, 7) ^ std::rotr(x, 18) ^ (x >> 3);
}
inline std::uint32_t small_sigma1(std::uint32_t x) {
    return std::rotr(x, 17) ^ std::rotr(x, 19) ^ (x >> 10);
}
inline std::uint32_t ch(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    return (x & y) ^ (~x & z);
}
inline std::uint32_t maj(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    return (x & y) ^ (x & z) ^ (y & z);
}

inline int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

std::array<std::uint8_t, 32> ChainingValue::to_bytes() const {
    std::array<std::uint8_t, 32> out{};
    for (std::size_t i = 0; i < 8; ++i) {
        out[4 * i] = static_cast<std::uint8_t>(words[i] >> 24);
        out[4 * i + 1] = static_cast<std::uint8_t>(words[i] >> 16);
        out[4 * i + 2] = static_cast<std::uint8_t>(words[i] >> 8);
        out[4 * i + 3] = static_cast<std::uint8_t>(words[i]);
    }
    return out;
}

ChainingValue ChainingValue::from_bytes(std::span<const std::uint8_t, 32> bytes) {
    ChainingValue cv;
    for (std::size_t i = 0; i < 8; ++i) {
        cv.words[i] = (static_cast<std::uint32_t>(bytes[4 * i]) << 24) |
                      (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 16) |
                      (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 8) |
                      static_cast<std::uint32_t>(bytes[4 * i + 3]);
    }
    return cv;
}

std::string ChainingValue::to_hex() const {
    static const char* digits = "0123456789abcdef";
    auto bytes = to_bytes();
    std::string s;
    s.reserve(64);
    for (auto b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

ChainingValue ChainingValue::from_hex(const std::string& hex) {
    if (hex.size() != 64) throw HashError("chaining value hex must be 64 characters");
    std::array<std::uint8_t, 32> bytes{};
    for (std::size_t i = 0; i < 32; ++i) {
        int hi = hex_nibble(hex[2 * i]);
        int lo = hex_nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw HashError("invalid hex digit in chaining value");
        bytes[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return from_bytes(bytes);
}

ChainingValue iv() {
    ChainingValue cv;
    cv.words = kInitialState;
    return cv;
}

PaddedFile pad_message(std::span<const std::uint8_t> bytes) {
    PaddedFile pf;
    pf.original_len = bytes.size();
    const std::uint64_t bit_len = pf.original_len * 8;
    // 0x80 marker, zero fill, then the bit length in the final 8 bytes.
    std::size_t total = bytes.size() + 1 + 8;
    total = (total + kBlockSize - 1) / kBlockSize * kBlockSize;

    std::vector<std::uint8_t> padded(total, 0);
    std::copy(bytes.begin(), bytes.end(), padded.begin());
    padded[bytes.size()] = 0x80;
    for (std::size_t i = 0; i < 8; ++i) {
        padded[total - 1 - i] = static_cast<std::uint8_t>(bit_len >> (8 * i));
    }

    pf.blocks.resize(total / kBlockSize);
    for (std::size_t i = 0; i < pf.blocks.size(); ++i) {
        std::memcpy(pf.blocks[i].data(), padded.data() + i * kBlockSize, kBlockSize);
    }
    return pf;
}

PaddedFile pad_message(const std::string& s) {
    return pad_message(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::vector<std::uint8_t> strip_padding(const std::vector<Block>& blocks) {
    if (blocks.empty()) throw HashError("padded file has no blocks");
    std::vector<std::uint8_t> flat(blocks.size() * kBlockSize);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        std::memcpy(flat.data() + i * kBlockSize, blocks[i].data(), kBlockSize);
    }
    std::uint64_t bit_len = 0;
    for (std::size_t i = 0; i < 8; ++i) {
        bit_len = (bit_len << 8) | flat[flat.size() - 8 + i];
    }
    if (bit_len % 8 != 0) throw HashError("length field is not a whole byte count");
    const std::uint64_t len = bit_len / 8;
    if (len + 1 + 8 > flat.size()) throw HashError("length field exceeds padded size");
    if (pad_message(std::span(flat.data(), static_cast<std::size_t>(len))).blocks.size() !=
        blocks.size()) {
        throw HashError("padding is not minimal for the embedded length");
    }
    if (flat[len] != 0x80) throw HashError("missing 0x80 padding marker");
    for (std::size_t i = len + 1; i + 8 < flat.size(); ++i) {
        if (flat[i] != 0) throw HashError("nonzero byte in padding fill");
    }
    flat.resize(static_cast<std::size_t>(len));
    return flat;
}

ChainingValue compress(const ChainingValue& cv, const Block& block) {
    std::uint32_t w[64];
    for (std::size_t i = 0; i < 16; ++i) {
        w[i] = (static_cast<std::uint32_t>(block[4 * i]) << 24) |
               (static_cast<std::uint32_t>(block[4 * i + 1]) << 16) |
               (static_cast<std::uint32_t>(block[4 * i + 2]) << 8) |
               static_cast<std::uint32_t>(block[4 * i + 3]);
    }
    for (std::size_t i = 16; i < 64; ++i) {
        w[i] = small_sigma1(w[i - 2]) + w[i - 7] + small_sigma0(w[i - 15]) + w[i - 16];
    }

    std::uint32_t a = cv.words[0], b = cv.words[1], c = cv.words[2], d = cv.words[3];
    std::uint32_t e = cv.words[4], f = cv.words[5], g = cv.words[6], h = cv.words[7];

    for (std::size_t i = 0; i < 64; ++i) {
        const std::uint32_t t1 = h + big_sigma1(e) + ch(e, f, g) + kRoundConstants[i] + w[i];
        const std::uint32_t t2 = big_sigma0(a) + maj(a, b, c);
        h = g;
        g = f;
        f = e;
        e = d + t1;
        d = c;
        c = b;
        b = a;
        a = t1 + t2;
    }

    ChainingValue out;
    out.words = {a + cv.words[0], b + cv.words[1], c + cv.words[2], d + cv.words[3],
                 e + cv.words[4], f + cv.words[5], g + cv.words[6], h + cv.words[7]};
    return out;
}

ChainingValue digest_blocks(const ChainingValue& cv, std::span<const Block> blocks) {
    ChainingValue state = cv;
    for (const Block& b : blocks) state = compress(state, b);
    return state;
}

ChainingValue fingerprint(std::span<const std::uint8_t> bytes) {
    return digest_blocks(iv(), pad_message(bytes).blocks);
}

ChainingValue fingerprint(const std::string& s) {
    return fingerprint(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

const ChunkPlan::Range& ChunkPlan::range(std::size_t k) const {
    if (k < 1 || k > n) throw HashError("chunk index out of range");
    return boundaries[k - 1];
}

ChunkPlan partition_chunks(std::size_t m, std::size_t chunk_len) {
    if (m == 0) throw HashError("block count must be positive");
    if (chunk_len == 0) throw HashError("chunk length must be positive");
    ChunkPlan plan;
    plan.m = m;
    plan.chunk_len = chunk_len;
    plan.n = (m + chunk_len - 1) / chunk_len;
    plan.boundaries.reserve(plan.n);
    // Chunk 1 carries the remainder m - (n-1)*CL; every later chunk is full.
    const std::size_t first = m - (plan.n - 1) * chunk_len;
    std::size_t pos = 0;
    for (std::size_t k = 1; k <= plan.n; ++k) {
        const std::size_t size = (k == 1) ? first : chunk_len;
        plan.boundaries.push_back({pos, pos + size});
        pos += size;
    }
    return plan;
}

Chunk extract_chunk(const PaddedFile& pf, const ChunkPlan& plan, std::size_t k) {
    if (plan.m != pf.blocks.size()) throw HashError("plan does not match padded file");
    const auto& r = plan.range(k);
    Chunk c;
    c.index = k;
    c.blocks.assign(pf.blocks.begin() + static_cast<std::ptrdiff_t>(r.begin),
                    pf.blocks.begin() + static_cast<std::ptrdiff_t>(r.end));
    return c;
}

std::vector<ChainingValue> compute_intermediate_hashes(std::span<const Block> blocks,
                                                       const ChunkPlan& plan,
                                                       const ChainingValue& start) {
    if (plan.m != blocks.size()) throw HashError("plan does not match block count");
    std::vector<ChainingValue> hashes;
    hashes.reserve(plan.n + 1);
    hashes.push_back(start);
    for (std::size_t k = 1; k <= plan.n; ++k) {
        const auto& r = plan.range(k);
        hashes.push_back(digest_blocks(hashes.back(), blocks.subspan(r.begin, r.size())));
    }
    return hashes;
}

std::vector<ChainingValue> compute_intermediate_hashes(const PaddedFile& pf, const ChunkPlan& plan) {
    return compute_intermediate_hashes(pf.blocks, plan, iv());
}

bool verify_chunk(const ChainingValue& h_prev, const Chunk& chunk, const ChainingValue& h_expected) {
    return digest_blocks(h_prev, chunk.blocks) == h_expected;
}

std::vector<std::size_t> segment_sizes(std::size_t m, std::size_t z, std::size_t chunk_len) {
    if (z == 0) throw HashError("segment count must be positive");
    if (chunk_len == 0) throw HashError("chunk length must be positive");
    if (z > m) throw HashError("segment count exceeds block count");
    const std::size_t base = (m + z - 1) / z;
    const std::size_t per = (base + chunk_len - 1) / chunk_len * chunk_len;
    if (z > 1 && (z - 1) * per >= m) {
        throw HashError("segment geometry leaves the last segment empty");
    }
    std::vector<std::size_t> sizes(z, per);
    sizes[z - 1] = m - (z - 1) * per;
    return sizes;
}

std::vector<ChainingValue> segment_fingerprint(const PaddedFile& pf, std::size_t z,
                                               std::size_t chunk_len) {
    const auto sizes = segment_sizes(pf.blocks.size(), z, chunk_len);
    std::vector<ChainingValue> hashes;
    hashes.reserve(z);
    ChainingValue state = iv();
    std::size_t pos = 0;
    for (std::size_t q = 0; q < z; ++q) {
        state = digest_blocks(state, std::span(pf.blocks).subspan(pos, sizes[q]));
        hashes.push_back(state);
        pos += sizes[q];
    }
    return hashes;
}

}  // namespace fairex
