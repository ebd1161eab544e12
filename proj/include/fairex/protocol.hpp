#pragma once

#include "fairex/hashchain.hpp"
#include "fairex/signing.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <variant>
#include <vector>

namespace fairex {

using Money = std::int64_t;
using Tick = std::int64_t;

/// Logical time is counted in ticks of roughly one second; 24 hours.
inline constexpr Tick kDefaultMaxTimeout = 86'400;

enum class Party { Buyer, Seller };

const char* to_string(Party p);

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Everything both sides agree on before the transfer starts.
struct ExchangeParams {
    ChainingValue fingerprint;       // H(F), or a segment hash in the P2P flow
    ChainingValue chain_start = iv();  // IV, or the previous segment hash
    std::size_t m = 0;               // padded block count
    std::size_t chunk_len = 0;       // CL
    std::size_t n = 0;               // chunk count, ceil(m/CL)
    Money price = 0;                 // F_p
    Money seller_deposit = 0;        // D_S, defaults to F_p
    Money buyer_deposit = 0;         // D_B, defaults to F_p
    Tick max_timeout = kDefaultMaxTimeout;
    PublicKey buyer_key{};
    PublicKey seller_key{};
};

/// Fills in the defaulted deposits and derived geometry, then validates.
ExchangeParams make_params(const ChainingValue& fingerprint, std::size_t m, std::size_t chunk_len,
                           Money price, const PublicKey& buyer, const PublicKey& seller);
void validate_params(const ExchangeParams& params);

/// Off-chain chunk delivery: the chunk plus the preceding intermediate hash.
struct TransferMsg {
    std::size_t k = 0;
    std::vector<Block> blocks;
    ChainingValue h_prev;
};

/// Signed acknowledgment payload layout (112 bytes, bit-exact):
///   bytes 0..15   ASCII label, zero padded
///   bytes 16..47  fingerprint H(F)
///   bytes 48..79  chunk index k, 32-byte big-endian
///   bytes 80..111 seller public key, left-zero-padded to 32 bytes
inline constexpr std::size_t kAckPayloadSize = 112;
inline constexpr char kAckLabel[] = "FairExchangeAck";

struct Acknowledgment {
    std::size_t k = 0;
    std::array<std::uint8_t, kAckPayloadSize> payload{};
    Signature signature;
};

std::array<std::uint8_t, kAckPayloadSize> ack_payload(const ChainingValue& fingerprint,
                                                      std::size_t k, const PublicKey& seller);
Acknowledgment make_ack(const KeyPair& buyer, const ChainingValue& fingerprint, std::size_t k,
                        const PublicKey& seller);
bool verify_ack(const PublicKey& buyer, const Acknowledgment& ack,
                const ChainingValue& fingerprint, std::size_t k, const PublicKey& seller);

// --- state machines -------------------------------------------------------

enum class Phase { Idle, Transferring, AwaitingAck, Disputed, Done, Aborted };

const char* to_string(Phase p);

/// What a party asks the arbiter to adjudicate.
enum class DisputeKind {
    SellerMisbehavior,  // buyer: chunk k missing or invalid
    FalseAck,           // seller: buyer acknowledged an undelivered chunk
    MissingAck,         // seller: buyer went silent instead of acknowledging
};

const char* to_string(DisputeKind k);

/// Digest of an arbiter state change, delivered back to the parties.
struct ArbiterNotice {
    enum class What { DisputeOpened, Settled };
    What what = What::DisputeOpened;
    DisputeKind kind = DisputeKind::SellerMisbehavior;
    Party by = Party::Buyer;
    std::size_t k = 0;
};

struct StartEvent {};
struct TransferReceivedEvent {
    TransferMsg msg;
};
struct AckReceivedEvent {
    Acknowledgment ack;
};
struct TimeoutEvent {};  // the counterpart exceeded MAX_TIMEOUT
struct ArbiterUpdateEvent {
    ArbiterNotice notice;
};

using SellerEvent = std::variant<StartEvent, AckReceivedEvent, TimeoutEvent, ArbiterUpdateEvent>;
using BuyerEvent = std::variant<TransferReceivedEvent, TimeoutEvent, ArbiterUpdateEvent>;

struct SendChunkAction {
    TransferMsg msg;
};
struct SendAckAction {
    Acknowledgment ack;
};
struct ReportAction {
    std::size_t k = 0;
    DisputeKind kind = DisputeKind::SellerMisbehavior;
    std::optional<Acknowledgment> evidence;  // disputed A_k or last A_{k+1}
    // Whether chunk k was actually delivered before the dispute. Money never
    // depends on it; it selects the sent/unsent payoff row for bookkeeping.
    bool chunk_delivered = false;
};
struct ProveAction {
    std::size_t k = 0;
    ChainingValue h;  // chaining value before the chunk's last block
    Block block{};    // the chunk's last block
};
struct FinalizeAction {
    Acknowledgment final_ack;  // A_1
};

using ProtocolAction =
    std::variant<SendChunkAction, SendAckAction, ReportAction, ProveAction, FinalizeAction>;

/// Seller-side data for one exchange: the blocks being sold plus the chunk
/// chain derived from them.
struct SellerContext {
    ExchangeParams params;
    std::vector<Block> blocks;
    ChunkPlan plan;
    std::vector<ChainingValue> hashes;  // H_0..H_n from params.chain_start
};

SellerContext make_seller_context(const ExchangeParams& params, std::vector<Block> blocks);

/// View of chunk k's blocks inside the seller's buffer.
std::span<const Block> extract_chunk_span(const SellerContext& ctx, std::size_t k);

struct SellerState {
    Phase phase = Phase::Idle;
    std::size_t next_k = 0;  // chunk awaiting acknowledgment
    std::map<std::size_t, Acknowledgment> acks;
};

/// Honest seller policy: send chunks n down to 1, each next chunk gated on
/// a valid acknowledgment of the previous one.
std::pair<SellerState, std::vector<ProtocolAction>> seller_step(const SellerState& state,
                                                                const SellerEvent& event,
                                                                const SellerContext& ctx);

struct BuyerContext {
    ExchangeParams params;
    ChunkPlan plan;
    KeyPair key;
};

BuyerContext make_buyer_context(const ExchangeParams& params, const KeyPair& key);

struct BuyerState {
    Phase phase = Phase::Transferring;
    std::size_t next_k = 0;        // chunk expected next
    ChainingValue expected;        // required chain target for next_k
    std::map<std::size_t, std::vector<Block>> received;
    std::map<std::size_t, ChainingValue> h_prev_of;  // accepted h_prev per chunk
};

BuyerState make_buyer_state(const BuyerContext& ctx);

/// Honest buyer policy: verify each chunk against the expectation chain
/// seeded by the fingerprint, acknowledge on success, report otherwise.
std::pair<BuyerState, std::vector<ProtocolAction>> buyer_step(const BuyerState& state,
                                                              const BuyerEvent& event,
                                                              const BuyerContext& ctx);

/// Proof material for chunk k: the chaining value before the last block and
/// the last block itself.
std::pair<ChainingValue, Block> possession_proof(const ChainingValue& h_before_chunk,
                                                 std::span<const Block> chunk_blocks);

/// Reassembles and unpads the transferred bytes; requires a completed run.
std::vector<std::uint8_t> reassemble_file(const BuyerState& state, const BuyerContext& ctx);

}  // namespace fairex
