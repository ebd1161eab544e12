#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairex {

/// 64-byte message block, the unit fed to the compression function.
inline constexpr std::size_t kBlockSize = 64;
using Block = std::array<std::uint8_t, kBlockSize>;

/// 256-bit chaining value (eight big-endian 32-bit words).
struct ChainingValue {
    std::array<std::uint32_t, 8> words{};

    auto operator<=>(const ChainingValue&) const = default;

    std::array<std::uint8_t, 32> to_bytes() const;
    static ChainingValue from_bytes(std::span<const std::uint8_t, 32> bytes);
    std::string to_hex() const;
    static ChainingValue from_hex(const std::string& hex);
};

/// Standard SHA-256 initial state.
ChainingValue iv();

/// Padded message: blocks plus the original byte count the padding encodes.
struct PaddedFile {
    std::vector<Block> blocks;
    std::uint64_t original_len = 0;
};

struct HashError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Applies standard SHA-256 padding: 0x80, zeros, 64-bit big-endian bit length.
PaddedFile pad_message(std::span<const std::uint8_t> bytes);
PaddedFile pad_message(const std::string& s);

/// Recovers the unpadded bytes, rejecting malformed padding.
std::vector<std::uint8_t> strip_padding(const std::vector<Block>& blocks);

/// One application of the SHA-256 compression function (with feed-forward).
ChainingValue compress(const ChainingValue& cv, const Block& block);

/// Left fold of compress over the blocks; identity on the empty sequence.
ChainingValue digest_blocks(const ChainingValue& cv, std::span<const Block> blocks);

/// SHA-256 of the raw bytes: pad, then fold from the IV.
ChainingValue fingerprint(std::span<const std::uint8_t> bytes);
ChainingValue fingerprint(const std::string& s);

/// How m blocks split into n chunks of chunk_len blocks each; the first
/// chunk absorbs the remainder and may be shorter.
struct ChunkPlan {
    std::size_t m = 0;          // total blocks
    std::size_t chunk_len = 0;  // CL, blocks per chunk
    std::size_t n = 0;          // chunk count, ceil(m / CL)

    struct Range {
        std::size_t begin = 0;  // 0-based, inclusive
        std::size_t end = 0;    // 0-based, exclusive
        std::size_t size() const { return end - begin; }
        bool operator==(const Range&) const = default;
    };
    std::vector<Range> boundaries;  // boundaries[k-1] is chunk k, k in 1..n

    const Range& range(std::size_t k) const;  // 1-based chunk index
};

ChunkPlan partition_chunks(std::size_t m, std::size_t chunk_len);

/// Chunk k with its blocks in file order.
struct Chunk {
    std::size_t index = 0;  // 1-based
    std::vector<Block> blocks;
};

Chunk extract_chunk(const PaddedFile& pf, const ChunkPlan& plan, std::size_t k);

/// H_0..H_n where H_0 is the IV (or the given start) and H_k chains through
/// chunk k. H_n equals the fingerprint of the unpadded bytes when start = IV.
std::vector<ChainingValue> compute_intermediate_hashes(const PaddedFile& pf, const ChunkPlan& plan);
std::vector<ChainingValue> compute_intermediate_hashes(std::span<const Block> blocks,
                                                       const ChunkPlan& plan,
                                                       const ChainingValue& start);

/// True iff chaining h_prev through the chunk's blocks lands on h_expected.
bool verify_chunk(const ChainingValue& h_prev, const Chunk& chunk, const ChainingValue& h_expected);

/// Segment geometry for the multi-seller split: z segments of whole chunks.
/// All segments but the last hold ceil(m/z) blocks rounded up to a multiple
/// of chunk_len; the last takes the remainder.
std::vector<std::size_t> segment_sizes(std::size_t m, std::size_t z, std::size_t chunk_len);

/// Segment hashes H_1^s..H_z^s; H_z^s equals the whole-file fingerprint and
/// each H_{q-1}^s is the chaining start of segment q.
std::vector<ChainingValue> segment_fingerprint(const PaddedFile& pf, std::size_t z,
                                               std::size_t chunk_len = 1);

}  // namespace fairex
