#include "fairex/protocol.hpp"

#include <algorithm>
#include <cstring>

namespace fairex {

const char* to_string(Party p) {
    return p == Party::Buyer ? "buyer" : "seller";
}

const char* to_string(Phase p) {
    switch (p) {
        case Phase::Idle: return "idle";
        case Phase::Transferring: return "transferring";
        case Phase::AwaitingAck: return "awaiting-ack";
        case Phase::Disputed: return "disputed";
        case Phase::Done: return "done";
        case Phase::Aborted: return "aborted";
    }
    return "?";
}

const char* to_string(DisputeKind k) {
    switch (k) {
        case DisputeKind::SellerMisbehavior: return "seller-misbehavior";
        case DisputeKind::FalseAck: return "false-ack";
        case DisputeKind::MissingAck: return "missing-ack";
    }
    return "?";
}

ExchangeParams make_params(const ChainingValue& fingerprint, std::size_t m, std::size_t chunk_len,
                           Money price, const PublicKey& buyer, const PublicKey& seller) {
    ExchangeParams p;
    p.fingerprint = fingerprint;
    p.m = m;
    p.chunk_len = chunk_len;
    p.n = (m + chunk_len - 1) / chunk_len;
    p.price = price;
    p.seller_deposit = price;  // deposits default to the file price
    p.buyer_deposit = price;
    p.buyer_key = buyer;
    p.seller_key = seller;
    validate_params(p);
    return p;
}

void validate_params(const ExchangeParams& params) {
    if (params.price <= 0) throw ProtocolError("price must be positive");
    if (params.m == 0 || params.chunk_len == 0) throw ProtocolError("bad geometry");
    if (params.n != (params.m + params.chunk_len - 1) / params.chunk_len) {
        throw ProtocolError("chunk count does not match geometry");
    }
    if (params.max_timeout <= 0) throw ProtocolError("max_timeout must be positive");
    if (params.seller_deposit < 0 || params.buyer_deposit < 0) {
        throw ProtocolError("deposits must be non-negative");
    }
}

std::array<std::uint8_t, kAckPayloadSize> ack_payload(const ChainingValue& fingerprint,
                                                      std::size_t k, const PublicKey& seller) {
    std::array<std::uint8_t, kAckPayloadSize> payload{};
    std::memcpy(payload.data(), kAckLabel, std::min(sizeof(kAckLabel) - 1, std::size_t{16}));
    const auto fp = fingerprint.to_bytes();
    std::memcpy(payload.data() + 16, fp.data(), 32);
    std::uint64_t v = k;
    for (std::size_t i = 0; i < 8; ++i) {
        payload[79 - i] = static_cast<std::uint8_t>(v >> (8 * i));
    }
    // Seller key occupies the low bytes of its 32-byte field; ours fill it.
    std::memcpy(payload.data() + 80 + (32 - seller.size()), seller.data(), seller.size());
    return payload;
}

Acknowledgment make_ack(const KeyPair& buyer, const ChainingValue& fingerprint, std::size_t k,
                        const PublicKey& seller) {
    if (k < 1) throw ProtocolError("chunk index out of range");
    Acknowledgment ack;
    ack.k = k;
    ack.payload = ack_payload(fingerprint, k, seller);
    ack.signature = sign(buyer, ack.payload);
    return ack;
}

bool verify_ack(const PublicKey& buyer, const Acknowledgment& ack,
                const ChainingValue& fingerprint, std::size_t k, const PublicKey& seller) {
    if (ack.k != k) return false;
    if (ack.payload != ack_payload(fingerprint, k, seller)) return false;
    return verify(buyer, ack.payload, ack.signature);
}

SellerContext make_seller_context(const ExchangeParams& params, std::vector<Block> blocks) {
    validate_params(params);
    if (blocks.size() != params.m) throw ProtocolError("block count does not match params");
    SellerContext ctx;
    ctx.params = params;
    ctx.plan = partition_chunks(params.m, params.chunk_len);
    ctx.hashes = compute_intermediate_hashes(blocks, ctx.plan, params.chain_start);
    if (ctx.hashes.back() != params.fingerprint) {
        throw ProtocolError("blocks do not hash to the agreed fingerprint");
    }
    ctx.blocks = std::move(blocks);
    return ctx;
}

namespace {

TransferMsg chunk_message(const SellerContext& ctx, std::size_t k) {
    const auto& r = ctx.plan.range(k);
    TransferMsg msg;
    msg.k = k;
    msg.blocks.assign(ctx.blocks.begin() + static_cast<std::ptrdiff_t>(r.begin),
                      ctx.blocks.begin() + static_cast<std::ptrdiff_t>(r.end));
    msg.h_prev = ctx.hashes[k - 1];
    return msg;
}

std::optional<Acknowledgment> last_ack_evidence(const SellerState& state, std::size_t k) {
    auto it = state.acks.find(k + 1);
    if (it == state.acks.end()) return std::nullopt;
    return it->second;
}

}  // namespace

std::pair<ChainingValue, Block> possession_proof(const ChainingValue& h_before_chunk,
                                                 std::span<const Block> chunk_blocks) {
    if (chunk_blocks.empty()) throw ProtocolError("chunk has no blocks");
    ChainingValue h = digest_blocks(h_before_chunk, chunk_blocks.first(chunk_blocks.size() - 1));
    return {h, chunk_blocks.back()};
}

std::pair<SellerState, std::vector<ProtocolAction>> seller_step(const SellerState& state,
                                                                const SellerEvent& event,
                                                                const SellerContext& ctx) {
    SellerState next = state;
    std::vector<ProtocolAction> actions;

    if (const auto* update = std::get_if<ArbiterUpdateEvent>(&event)) {
        const auto& notice = update->notice;
        if (notice.what == ArbiterNotice::What::Settled) {
            // Done only marks a completed transfer; disputes end in Aborted.
            if (state.phase != Phase::Done) next.phase = Phase::Aborted;
            return {next, actions};
        }
        if (notice.kind == DisputeKind::SellerMisbehavior && notice.by == Party::Buyer) {
            // Challenged to show possession of chunk k's last block.
            auto [h, block] = possession_proof(ctx.hashes[notice.k - 1],
                                               extract_chunk_span(ctx, notice.k));
            next.phase = Phase::Disputed;
            actions.push_back(ProveAction{notice.k, h, block});
        }
        return {next, actions};
    }

    switch (state.phase) {
        case Phase::Idle: {
            if (!std::holds_alternative<StartEvent>(event)) {
                throw ProtocolError("seller expected Start in idle phase");
            }
            next.next_k = ctx.params.n;
            next.phase = Phase::AwaitingAck;
            actions.push_back(SendChunkAction{chunk_message(ctx, next.next_k)});
            return {next, actions};
        }
        case Phase::AwaitingAck: {
            if (const auto* got = std::get_if<AckReceivedEvent>(&event)) {
                const Acknowledgment& ack = got->ack;
                if (ack.k == state.next_k &&
                    verify_ack(ctx.params.buyer_key, ack, ctx.params.fingerprint, ack.k,
                               ctx.params.seller_key)) {
                    next.acks[ack.k] = ack;
                    if (ack.k == 1) {
                        next.phase = Phase::Done;
                        actions.push_back(FinalizeAction{ack});
                    } else {
                        next.next_k = ack.k - 1;
                        actions.push_back(SendChunkAction{chunk_message(ctx, next.next_k)});
                    }
                    return {next, actions};
                }
                if (ack.k < state.next_k &&
                    verify_ack(ctx.params.buyer_key, ack, ctx.params.fingerprint, ack.k,
                               ctx.params.seller_key)) {
                    // Well-formed acknowledgment for a chunk never delivered.
                    next.phase = Phase::Disputed;
                    actions.push_back(ReportAction{ack.k, DisputeKind::FalseAck, ack, false});
                    return {next, actions};
                }
                // Garbage acknowledgment: treat the buyer as unresponsive.
                next.phase = Phase::Disputed;
                actions.push_back(ReportAction{state.next_k, DisputeKind::MissingAck,
                                               last_ack_evidence(state, state.next_k), true});
                return {next, actions};
            }
            if (std::holds_alternative<TimeoutEvent>(event)) {
                next.phase = Phase::Disputed;
                actions.push_back(ReportAction{state.next_k, DisputeKind::MissingAck,
                                               last_ack_evidence(state, state.next_k), true});
                return {next, actions};
            }
            throw ProtocolError("seller event not legal while awaiting ack");
        }
        case Phase::Disputed:
        case Phase::Done:
        case Phase::Aborted:
            if (std::holds_alternative<TimeoutEvent>(event)) return {next, actions};
            throw ProtocolError("seller received event after leaving the transfer loop");
        case Phase::Transferring:
            throw ProtocolError("seller has no transferring phase");
    }
    return {next, actions};
}

std::span<const Block> extract_chunk_span(const SellerContext& ctx, std::size_t k) {
    const auto& r = ctx.plan.range(k);
    return std::span(ctx.blocks).subspan(r.begin, r.size());
}

BuyerContext make_buyer_context(const ExchangeParams& params, const KeyPair& key) {
    validate_params(params);
    BuyerContext ctx;
    ctx.params = params;
    ctx.plan = partition_chunks(params.m, params.chunk_len);
    ctx.key = key;
    return ctx;
}

BuyerState make_buyer_state(const BuyerContext& ctx) {
    BuyerState state;
    state.phase = Phase::Transferring;
    state.next_k = ctx.params.n;
    state.expected = ctx.params.fingerprint;
    return state;
}

std::pair<BuyerState, std::vector<ProtocolAction>> buyer_step(const BuyerState& state,
                                                              const BuyerEvent& event,
                                                              const BuyerContext& ctx) {
    BuyerState next = state;
    std::vector<ProtocolAction> actions;

    if (const auto* update = std::get_if<ArbiterUpdateEvent>(&event)) {
        const auto& notice = update->notice;
        if (notice.what == ArbiterNotice::What::Settled) {
            if (state.phase != Phase::Done) next.phase = Phase::Aborted;
            return {next, actions};
        }
        if (notice.kind == DisputeKind::FalseAck && notice.by == Party::Seller) {
            auto it = state.received.find(notice.k);
            if (it != state.received.end()) {
                // The chunk was in fact delivered; prove possession.
                auto [h, block] =
                    possession_proof(state.h_prev_of.at(notice.k), std::span(it->second));
                next.phase = Phase::Disputed;
                actions.push_back(ProveAction{notice.k, h, block});
            }
        }
        // A missing-ack dispute offers the buyer no on-chain answer.
        return {next, actions};
    }

    switch (state.phase) {
        case Phase::Transferring: {
            if (const auto* got = std::get_if<TransferReceivedEvent>(&event)) {
                const TransferMsg& msg = got->msg;
                const bool in_order = msg.k == state.next_k;
                const bool sized = in_order && msg.blocks.size() == ctx.plan.range(msg.k).size();
                const bool chained =
                    sized && digest_blocks(msg.h_prev, msg.blocks) == state.expected;
                // Chunk 1 must close the chain on the agreed start value.
                const bool grounded =
                    chained && (msg.k > 1 || msg.h_prev == ctx.params.chain_start);
                if (grounded) {
                    next.received[msg.k] = msg.blocks;
                    next.h_prev_of[msg.k] = msg.h_prev;
                    next.expected = msg.h_prev;
                    actions.push_back(SendAckAction{make_ack(ctx.key, ctx.params.fingerprint,
                                                             msg.k, ctx.params.seller_key)});
                    if (msg.k == 1) {
                        next.phase = Phase::Done;
                    } else {
                        next.next_k = msg.k - 1;
                    }
                    return {next, actions};
                }
                next.phase = Phase::Disputed;
                actions.push_back(
                    ReportAction{state.next_k, DisputeKind::SellerMisbehavior, {}, false});
                return {next, actions};
            }
            if (std::holds_alternative<TimeoutEvent>(event)) {
                next.phase = Phase::Disputed;
                actions.push_back(
                    ReportAction{state.next_k, DisputeKind::SellerMisbehavior, {}, false});
                return {next, actions};
            }
            throw ProtocolError("buyer event not legal while transferring");
        }
        case Phase::Disputed:
        case Phase::Done:
        case Phase::Aborted:
            if (std::holds_alternative<TimeoutEvent>(event)) return {next, actions};
            throw ProtocolError("buyer received event after leaving the transfer loop");
        case Phase::Idle:
        case Phase::AwaitingAck:
            throw ProtocolError("buyer has no such phase");
    }
    return {next, actions};
}

std::vector<std::uint8_t> reassemble_file(const BuyerState& state, const BuyerContext& ctx) {
    if (state.phase != Phase::Done || state.received.size() != ctx.params.n) {
        throw ProtocolError("transfer incomplete; cannot reassemble");
    }
    std::vector<Block> blocks;
    blocks.reserve(ctx.params.m);
    for (std::size_t k = 1; k <= ctx.params.n; ++k) {
        const auto& part = state.received.at(k);
        blocks.insert(blocks.end(), part.begin(), part.end());
    }
    return strip_padding(blocks);
}

}  // namespace fairex
