#pragma once

#include "fairex/arbiter.hpp"
#include "fairex/game.hpp"

#include <memory>
#include <optional>

namespace fairex {

struct MultipartyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Public identity of a multi-seller trade: the ordered segment hash list.
struct SegmentFingerprint {
    std::vector<ChainingValue> hashes;  // H_1^s..H_z^s
    std::size_t z = 0;
    std::size_t segment_size = 0;        // blocks per segment; the last may differ
    std::vector<std::size_t> sizes;      // exact block count per segment
};

SegmentFingerprint make_segment_fingerprint(const PaddedFile& pf, std::size_t z,
                                            std::size_t chunk_len);

/// Buyer's off-chain purchase request for segment q of a fingerprinted file.
struct SegmentRequest {
    PublicKey buyer{};
    PublicKey seller{};
    std::vector<ChainingValue> fingerprint;  // the full hash list
    std::size_t q = 0;                       // 1-based segment index
    ChainingValue segment;                   // == fingerprint[q-1]
    std::optional<std::uint64_t> id;
    std::optional<std::uint64_t> valid_period;

    bool operator==(const SegmentRequest&) const = default;
};

SegmentRequest make_segment_request(const PublicKey& buyer, const PublicKey& seller,
                                    const std::vector<ChainingValue>& fingerprint, std::size_t q);

/// Canonical encoding (documented in the README; stable for signatures):
/// magic "SEGREQ01", option flags, optional id/valid_period as u64be,
/// length-prefixed buyer and seller keys, u32be z plus the hash list,
/// u32be q, then the segment hash.
std::vector<std::uint8_t> encode_request(const SegmentRequest& request);
SegmentRequest decode_request(std::span<const std::uint8_t> bytes);

struct SignedRequest {
    SegmentRequest request;
    Signature signature;  // by the named seller, over encode_request
};

SignedRequest sign_request(const KeyPair& seller, const SegmentRequest& request);

struct AggregateHandshake {
    std::vector<SegmentRequest> requests;  // q = 1..z in order
    std::vector<std::uint8_t> aggregate_signature;
};

/// Aggregation contract: the combined signature verifies iff every seller's
/// signature over its own request verifies.
class AggregateScheme {
public:
    virtual ~AggregateScheme() = default;
    virtual std::vector<std::uint8_t> aggregate(std::span<const Signature> parts) const = 0;
    virtual bool verify_aggregate(const AggregateHandshake& handshake) const = 0;
    virtual std::string name() const = 0;
};

/// Concatenated per-seller signatures with aggregate-verify semantics; stands
/// in for a pairing-based scheme where no pairing curve is available.
class ConcatAggregate final : public AggregateScheme {
public:
    std::vector<std::uint8_t> aggregate(std::span<const Signature> parts) const override;
    bool verify_aggregate(const AggregateHandshake& handshake) const override;
    std::string name() const override { return "concat-ed25519"; }
};

/// Collects the seller confirmations into one handshake. Sellers must be
/// distinct and cover q = 1..z of one fingerprint for one buyer.
AggregateHandshake make_handshake(const std::vector<SignedRequest>& confirmations,
                                  const AggregateScheme& scheme);

/// Per-seller serving data: which segment is on offer and the chunk-hash
/// commitment registered for its session.
struct SellerOffer {
    PublicKey seller{};
    std::size_t q = 0;
    std::vector<ChainingValue> commitment;  // H_0..H_{n_q} inside segment q
};

struct MultipartyTrade {
    std::vector<SessionId> sessions;  // session per segment, q order
    int buyer_tx_count = 0;           // the buyer's own on-chain calls
};

/// Opens the z per-segment sessions atomically (all or none): each priced at
/// F_p/z with deposits D_S/z and D_B/z, seller funds locked from the pool.
/// z must divide the price and both deposits.
MultipartyTrade open_multiparty(Arbiter& arbiter, const AggregateHandshake& handshake,
                                const AggregateScheme& scheme, std::size_t chunk_len,
                                const std::vector<std::size_t>& segment_sizes,
                                const std::vector<SellerOffer>& offers, Money price,
                                Money seller_deposit, Money buyer_deposit, Tick max_timeout,
                                Tick now);

/// Buyer-side completion: finalizes every still-active session with its
/// final acknowledgment. Disputed or settled segments are left alone.
void redeem_multiparty(Arbiter& arbiter, MultipartyTrade& trade,
                       const std::vector<std::optional<Acknowledgment>>& final_acks, Tick now);

/// Per-segment deposit conditions: the buyer's segment deposit covers the
/// segment price, and the worst-case segment selling cost fits D_S/z.
bool check_multiparty_deposits(const UtilityProfile& utilities, std::size_t z, Money price,
                               Money seller_deposit, Money buyer_deposit);

}  // namespace fairex
