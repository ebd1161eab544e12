#include "fairex/multiparty.hpp"

#include <algorithm>
#include <set>

namespace fairex {

namespace {

constexpr char kRequestMagic[8] = {'S', 'E', 'G', 'R', 'E', 'Q', '0', '1'};
constexpr std::size_t kSignatureSize = 64;  // Ed25519

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) {
        out.push_back(static_cast<std::uint8_t>(v >> shift));
    }
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::span<const std::uint8_t> take(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw MultipartyError("request encoding truncated");
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    std::uint32_t u32() {
        auto b = take(4);
        return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
               (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (auto byte : take(8)) v = (v << 8) | byte;
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

SegmentFingerprint make_segment_fingerprint(const PaddedFile& pf, std::size_t z,
                                            std::size_t chunk_len) {
    SegmentFingerprint fp;
    fp.z = z;
    fp.sizes = segment_sizes(pf.blocks.size(), z, chunk_len);
    fp.segment_size = fp.sizes.front();
    fp.hashes = segment_fingerprint(pf, z, chunk_len);
    return fp;
}

SegmentRequest make_segment_request(const PublicKey& buyer, const PublicKey& seller,
                                    const std::vector<ChainingValue>& fingerprint, std::size_t q) {
    if (fingerprint.empty()) throw MultipartyError("fingerprint list is empty");
    if (q < 1 || q > fingerprint.size()) throw MultipartyError("segment index out of range");
    SegmentRequest r;
    r.buyer = buyer;
    r.seller = seller;
    r.fingerprint = fingerprint;
    r.q = q;
    r.segment = fingerprint[q - 1];
    return r;
}

std::vector<std::uint8_t> encode_request(const SegmentRequest& request) {
    if (request.q < 1 || request.q > request.fingerprint.size()) {
        throw MultipartyError("segment index out of range");
    }
    if (request.segment != request.fingerprint[request.q - 1]) {
        throw MultipartyError("segment hash is not the fingerprint entry at q");
    }
    std::vector<std::uint8_t> out;
    out.insert(out.end(), std::begin(kRequestMagic), std::end(kRequestMagic));
    std::uint8_t flags = 0;
    if (request.id) flags |= 1;
    if (request.valid_period) flags |= 2;
    out.push_back(flags);
    if (request.id) put_u64(out, *request.id);
    if (request.valid_period) put_u64(out, *request.valid_period);
    put_u32(out, static_cast<std::uint32_t>(request.buyer.size()));
    out.insert(out.end(), request.buyer.begin(), request.buyer.end());
    put_u32(out, static_cast<std::uint32_t>(request.seller.size()));
    out.insert(out.end(), request.seller.begin(), request.seller.end());
    put_u32(out, static_cast<std::uint32_t>(request.fingerprint.size()));
    for (const auto& h : request.fingerprint) {
        const auto bytes = h.to_bytes();
        out.insert(out.end(), bytes.begin(), bytes.end());
    }
    put_u32(out, static_cast<std::uint32_t>(request.q));
    const auto seg = request.segment.to_bytes();
    out.insert(out.end(), seg.begin(), seg.end());
    return out;
}

SegmentRequest decode_request(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    auto magic = in.take(8);
    if (!std::equal(magic.begin(), magic.end(), std::begin(kRequestMagic))) {
        throw MultipartyError("bad request magic");
    }
    SegmentRequest r;
    const std::uint8_t flags = in.take(1)[0];
    if (flags & ~3u) throw MultipartyError("unknown request flags");
    if (flags & 1) r.id = in.u64();
    if (flags & 2) r.valid_period = in.u64();
    if (in.u32() != r.buyer.size()) throw MultipartyError("bad buyer key length");
    auto buyer = in.take(r.buyer.size());
    std::copy(buyer.begin(), buyer.end(), r.buyer.begin());
    if (in.u32() != r.seller.size()) throw MultipartyError("bad seller key length");
    auto seller = in.take(r.seller.size());
    std::copy(seller.begin(), seller.end(), r.seller.begin());
    const std::uint32_t z = in.u32();
    if (z == 0) throw MultipartyError("fingerprint list is empty");
    for (std::uint32_t i = 0; i < z; ++i) {
        auto h = in.take(32);
        r.fingerprint.push_back(ChainingValue::from_bytes(std::span<const std::uint8_t, 32>(h)));
    }
    r.q = in.u32();
    auto seg = in.take(32);
    r.segment = ChainingValue::from_bytes(std::span<const std::uint8_t, 32>(seg));
    if (!in.done()) throw MultipartyError("trailing bytes in request encoding");
    if (r.q < 1 || r.q > r.fingerprint.size() || r.segment != r.fingerprint[r.q - 1]) {
        throw MultipartyError("segment hash is not the fingerprint entry at q");
    }
    return r;
}

SignedRequest sign_request(const KeyPair& seller, const SegmentRequest& request) {
    if (seller.pub != request.seller) throw MultipartyError("request names a different seller");
    return {request, sign(seller, encode_request(request))};
}

std::vector<std::uint8_t> ConcatAggregate::aggregate(std::span<const Signature> parts) const {
    std::vector<std::uint8_t> out;
    for (const auto& part : parts) {
        if (part.size() != kSignatureSize) throw MultipartyError("malformed signature bytes");
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

bool ConcatAggregate::verify_aggregate(const AggregateHandshake& handshake) const {
    const std::size_t z = handshake.requests.size();
    if (handshake.aggregate_signature.size() != z * kSignatureSize) return false;
    for (std::size_t i = 0; i < z; ++i) {
        Signature part(handshake.aggregate_signature.begin() + i * kSignatureSize,
                       handshake.aggregate_signature.begin() + (i + 1) * kSignatureSize);
        const auto message = encode_request(handshake.requests[i]);
        if (!verify(handshake.requests[i].seller, message, part)) return false;
    }
    return true;
}

AggregateHandshake make_handshake(const std::vector<SignedRequest>& confirmations,
                                  const AggregateScheme& scheme) {
    if (confirmations.empty()) throw MultipartyError("handshake needs at least one confirmation");
    const std::size_t z = confirmations.size();
    std::set<PublicKey> sellers;
    AggregateHandshake handshake;
    std::vector<Signature> parts;
    for (std::size_t q = 1; q <= z; ++q) {
        const auto& confirmed = confirmations[q - 1];
        const auto& r = confirmed.request;
        if (r.q != q) throw MultipartyError("confirmations must be ordered by segment");
        if (r.fingerprint.size() != z) throw MultipartyError("fingerprint length disagrees with z");
        if (r.fingerprint != confirmations[0].request.fingerprint ||
            r.buyer != confirmations[0].request.buyer) {
            throw MultipartyError("confirmations describe different trades");
        }
        if (!sellers.insert(r.seller).second) throw MultipartyError("sellers must be distinct");
        handshake.requests.push_back(r);
        parts.push_back(confirmed.signature);
    }
    handshake.aggregate_signature = scheme.aggregate(parts);
    return handshake;
}

MultipartyTrade open_multiparty(Arbiter& arbiter, const AggregateHandshake& handshake,
                                const AggregateScheme& scheme, std::size_t chunk_len,
                                const std::vector<std::size_t>& segment_sizes,
                                const std::vector<SellerOffer>& offers, Money price,
                                Money seller_deposit, Money buyer_deposit, Tick max_timeout,
                                Tick now) {
    const std::size_t z = handshake.requests.size();
    if (z == 0) throw MultipartyError("handshake is empty");
    if (!scheme.verify_aggregate(handshake)) throw MultipartyError("aggregate signature invalid");
    if (segment_sizes.size() != z || offers.size() != z) {
        throw MultipartyError("geometry and offers must cover every segment");
    }
    const auto zz = static_cast<Money>(z);
    if (price % zz != 0 || seller_deposit % zz != 0 || buyer_deposit % zz != 0) {
        throw MultipartyError("price and deposits must split evenly across segments");
    }

    // Validate the whole batch before touching any state: all or none.
    std::vector<ExchangeParams> params(z);
    for (std::size_t q = 1; q <= z; ++q) {
        const auto& request = handshake.requests[q - 1];
        const auto& offer = offers[q - 1];
        if (offer.seller != request.seller || offer.q != q) {
            throw MultipartyError("offer does not match the handshake seller");
        }
        ExchangeParams& p = params[q - 1];
        p.fingerprint = request.segment;
        p.chain_start = q == 1 ? iv() : request.fingerprint[q - 2];
        p.m = segment_sizes[q - 1];
        p.chunk_len = chunk_len;
        p.n = (p.m + chunk_len - 1) / chunk_len;
        p.price = price / zz;
        p.seller_deposit = seller_deposit / zz;
        p.buyer_deposit = buyer_deposit / zz;
        p.max_timeout = max_timeout;
        p.buyer_key = request.buyer;
        p.seller_key = request.seller;
        validate_params(p);
        if (offer.commitment.size() != p.n + 1 || offer.commitment.front() != p.chain_start ||
            offer.commitment.back() != p.fingerprint) {
            throw MultipartyError("offer commitment does not span the segment");
        }
        if (arbiter.balance(offer.seller) < p.seller_deposit) {
            throw MultipartyError("seller has not funded its segment deposit");
        }
    }

    MultipartyTrade trade;
    for (std::size_t q = 1; q <= z; ++q) {
        const ExchangeParams& p = params[q - 1];
        arbiter.lock(p.seller_key, p.seller_deposit);
        const SessionId id =
            arbiter.set_parameters_and_pay(p, p.seller_deposit, offers[q - 1].commitment, now);
        arbiter.accept_parameters_and_pay(id, p.price + p.buyer_deposit, now);
        trade.sessions.push_back(id);
    }
    trade.buyer_tx_count = 1;  // one combined on-chain call opened the trade
    return trade;
}

void redeem_multiparty(Arbiter& arbiter, MultipartyTrade& trade,
                       const std::vector<std::optional<Acknowledgment>>& final_acks, Tick now) {
    if (final_acks.size() != trade.sessions.size()) {
        throw MultipartyError("one final acknowledgment slot per segment");
    }
    for (std::size_t i = 0; i < trade.sessions.size(); ++i) {
        const Session& s = arbiter.session(trade.sessions[i]);
        if (s.status != SessionStatus::Active || !final_acks[i]) continue;
        arbiter.finalize(trade.sessions[i], *final_acks[i], now);
    }
    trade.buyer_tx_count += 1;
}

bool check_multiparty_deposits(const UtilityProfile& utilities, std::size_t z, Money price,
                               Money seller_deposit, Money buyer_deposit) {
    const auto chunk_split = segment_sizes(utilities.n, z, 1);
    const Rational buyer_per_segment(buyer_deposit, static_cast<Money>(z));
    const Rational price_per_segment(price, static_cast<Money>(z));
    if (buyer_per_segment < price_per_segment) return false;

    // Worst-case selling cost of a segment: its g^S drop times the price cap
    // on F_c. Every segment must fit within the split seller deposit.
    const Rational deposit_per_segment(seller_deposit, static_cast<Money>(z));
    std::size_t end = 0;
    Rational prev = utilities.seller.front();
    for (std::size_t q = 0; q < z; ++q) {
        end += chunk_split[q];
        const Rational drop = prev - utilities.seller[end];
        if (drop * Rational(price) > deposit_per_segment) return false;
        prev = utilities.seller[end];
    }
    return true;
}

}  // namespace fairex
