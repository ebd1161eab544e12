#include "fairex/arbiter.hpp"

#include <sstream>

namespace fairex {

Money floor_money(const Rational& r) {
    if (r < 0) throw ArbiterError("negative payout");
    return r.numerator() / r.denominator();
}

const char* to_string(TransitionKind k) {
    switch (k) {
        case TransitionKind::HonestComplete: return "honest-complete";
        case TransitionKind::SentReportedProved: return "sent-reported-proved";
        case TransitionKind::SentReportedTimeout: return "sent-reported-timeout";
        case TransitionKind::SentBuyerTimeout: return "sent-buyer-timeout";
        case TransitionKind::UnsentReportedProved: return "unsent-reported-proved";
        case TransitionKind::UnsentReportedTimeout: return "unsent-reported-timeout";
        case TransitionKind::UnsentBuyerTimeout: return "unsent-buyer-timeout";
        case TransitionKind::FalseAckBuyerTimeout: return "false-ack-buyer-timeout";
        case TransitionKind::FalseAckBuyerProved: return "false-ack-buyer-proved";
    }
    return "?";
}

const char* to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::AwaitSeller: return "await-seller";
        case SessionStatus::AwaitBuyer: return "await-buyer";
        case SessionStatus::Active: return "active";
        case SessionStatus::DisputeOpen: return "dispute-open";
        case SessionStatus::Settled: return "settled";
    }
    return "?";
}

std::size_t transferred_chunks(const Transition& t, std::size_t n) {
    switch (t.kind) {
        case TransitionKind::HonestComplete:
            return n;
        case TransitionKind::SentReportedProved:
        case TransitionKind::SentReportedTimeout:
        case TransitionKind::SentBuyerTimeout:
            return n - t.k + 1;
        case TransitionKind::UnsentReportedProved:
        case TransitionKind::UnsentReportedTimeout:
        case TransitionKind::UnsentBuyerTimeout:
        case TransitionKind::FalseAckBuyerTimeout:
        case TransitionKind::FalseAckBuyerProved:
            return n - t.k;
    }
    return 0;
}

PayoutParams payout_params(const ExchangeParams& p) {
    return {p.n, p.price, p.seller_deposit, p.buyer_deposit};
}

std::pair<Rational, Rational> settle_rational(const Transition& t, const PayoutParams& p) {
    if (p.n == 0) throw ArbiterError("payout params need n >= 1");
    const auto n = static_cast<long long>(p.n);
    const auto k = static_cast<long long>(t.k);
    if (t.kind != TransitionKind::HonestComplete && (t.k < 1 || t.k > p.n)) {
        throw ArbiterError("transition chunk index out of range");
    }
    const Rational price(p.price);
    switch (t.kind) {
        case TransitionKind::HonestComplete:
            return {Rational(p.buyer_deposit), Rational(p.seller_deposit + p.price)};
        case TransitionKind::SentReportedProved:
        case TransitionKind::UnsentReportedProved:
            return {price * Rational(k - 1, n), price * Rational(n - k + 1, n)};
        case TransitionKind::SentReportedTimeout:
        case TransitionKind::UnsentReportedTimeout:
            return {Rational(p.price + p.buyer_deposit), Rational(0)};
        case TransitionKind::SentBuyerTimeout:
        case TransitionKind::UnsentBuyerTimeout:
            return {Rational(0), price * Rational(n - k, n) + Rational(p.seller_deposit)};
        case TransitionKind::FalseAckBuyerTimeout:
            return {Rational(0), Rational(p.seller_deposit + p.buyer_deposit + p.price)};
        case TransitionKind::FalseAckBuyerProved:
            return {price * Rational(k, n), price * Rational(n - k, n)};
    }
    throw ArbiterError("unknown transition");
}

Payout settle_table(const Transition& t, const PayoutParams& p) {
    const auto [buyer, seller] = settle_rational(t, p);
    Payout out;
    out.to_buyer = floor_money(buyer);
    out.to_seller = floor_money(seller);
    const Money escrow = p.price + p.seller_deposit + p.buyer_deposit;
    out.burned = escrow - out.to_buyer - out.to_seller;
    if (out.burned < 0) throw ArbiterError("payout exceeds escrow");
    return out;
}

std::string describe(const Session& s) {
    std::ostringstream out;
    out << "status=" << to_string(s.status) << " escrow=" << s.escrow << " tx=" << s.tx_count
        << " clock=" << s.clock << " n=" << s.params.n << " cl=" << s.params.chunk_len
        << " price=" << s.params.price << " ds=" << s.params.seller_deposit
        << " db=" << s.params.buyer_deposit << " fingerprint=" << s.params.fingerprint.to_hex()
        << " buyer=" << key_to_hex(s.params.buyer_key)
        << " seller=" << key_to_hex(s.params.seller_key);
    if (s.dispute) {
        out << " dispute.by=" << to_string(s.dispute->by)
            << " dispute.kind=" << to_string(s.dispute->kind) << " dispute.k=" << s.dispute->k
            << " dispute.deadline=" << s.dispute->deadline;
    }
    if (s.transition && s.payout) {
        out << " settled.kind=" << to_string(s.transition->kind) << " settled.k=" << s.transition->k
            << " payout.buyer=" << s.payout->to_buyer << " payout.seller=" << s.payout->to_seller
            << " payout.burned=" << s.payout->burned;
    }
    return out.str();
}

std::string Arbiter::triple_key(const ExchangeParams& p) {
    return key_to_hex(p.buyer_key) + key_to_hex(p.seller_key) + p.fingerprint.to_hex();
}

SessionId Arbiter::set_parameters_and_pay(const ExchangeParams& params, Money seller_deposit,
                                          std::vector<ChainingValue> hash_commitment, Tick now) {
    validate_params(params);
    if (seller_deposit < params.seller_deposit) throw ArbiterError("seller deposit below agreement");
    if (seller_deposit > params.seller_deposit) throw ArbiterError("seller deposit above agreement");
    if (hash_commitment.size() != params.n + 1) {
        throw ArbiterError("commitment must list H_0..H_n");
    }
    if (hash_commitment.front() != params.chain_start ||
        hash_commitment.back() != params.fingerprint) {
        throw ArbiterError("commitment endpoints must match chain start and fingerprint");
    }
    const std::string key = triple_key(params);
    if (active_.contains(key)) throw ArbiterError("session already open for this trade");

    Session s;
    s.params = params;
    s.hash_commitment = std::move(hash_commitment);
    s.status = SessionStatus::AwaitBuyer;
    s.escrow = seller_deposit;
    s.tx_count = 1;
    s.clock = now;
    sessions_.push_back(std::move(s));
    const SessionId id = sessions_.size() - 1;
    active_[key] = id;
    return id;
}

void Arbiter::accept_parameters_and_pay(SessionId id, Money payment, Tick now) {
    Session& s = mutable_session(id);
    if (s.status != SessionStatus::AwaitBuyer) throw ArbiterError("session not awaiting buyer");
    if (payment != s.params.price + s.params.buyer_deposit) {
        throw ArbiterError("payment must equal price plus buyer deposit");
    }
    s.escrow += payment;
    s.status = SessionStatus::Active;
    s.tx_count += 1;
    s.clock = std::max(s.clock, now);
}

void Arbiter::report(SessionId id, Party by, std::size_t k, DisputeKind kind,
                     const std::optional<Acknowledgment>& evidence, bool chunk_delivered,
                     Tick now) {
    Session& s = mutable_session(id);
    if (s.status == SessionStatus::DisputeOpen) throw ArbiterError("dispute already open");
    if (s.status != SessionStatus::Active) throw ArbiterError("session not active");
    if (k < 1 || k > s.params.n) throw ArbiterError("disputed chunk out of range");

    if (by == Party::Buyer) {
        if (kind != DisputeKind::SellerMisbehavior) {
            throw ArbiterError("buyer reports challenge the seller");
        }
    } else {
        switch (kind) {
            case DisputeKind::FalseAck:
                if (!evidence ||
                    !verify_ack(s.params.buyer_key, *evidence, s.params.fingerprint, k,
                                s.params.seller_key)) {
                    throw ArbiterError("false-ack claim needs the disputed acknowledgment");
                }
                break;
            case DisputeKind::MissingAck:
                // Nothing has been acknowledged yet when k = n.
                if (k < s.params.n &&
                    (!evidence ||
                     !verify_ack(s.params.buyer_key, *evidence, s.params.fingerprint, k + 1,
                                 s.params.seller_key))) {
                    throw ArbiterError("missing-ack claim needs the last acknowledgment");
                }
                break;
            case DisputeKind::SellerMisbehavior:
                throw ArbiterError("seller cannot report itself");
        }
    }

    s.dispute = Dispute{by, kind, k, now + s.params.max_timeout, chunk_delivered};
    s.status = SessionStatus::DisputeOpen;
    s.tx_count += 1;
    s.clock = std::max(s.clock, now);
}

void Arbiter::prove(SessionId id, Party by, const ChainingValue& h, const Block& block, Tick now) {
    Session& s = mutable_session(id);
    if (s.status != SessionStatus::DisputeOpen) throw ArbiterError("no dispute open");
    const Dispute& d = *s.dispute;

    Party prover;
    switch (d.kind) {
        case DisputeKind::SellerMisbehavior: prover = Party::Seller; break;
        case DisputeKind::FalseAck: prover = Party::Buyer; break;
        case DisputeKind::MissingAck:
            throw ArbiterError("a missing-ack dispute has no proof path");
    }
    if (by != prover) throw ArbiterError("dispute is not addressed to this party");
    if (now >= d.deadline) throw ArbiterError("proof deadline expired");
    if (compress(h, block) != s.hash_commitment[d.k]) {
        s.clock = std::max(s.clock, now);
        throw ArbiterError("proof does not hash to the committed value");
    }

    s.tx_count += 1;
    s.clock = std::max(s.clock, now);
    Transition t;
    t.k = d.k;
    if (d.kind == DisputeKind::SellerMisbehavior) {
        t.kind = d.chunk_delivered ? TransitionKind::SentReportedProved
                                   : TransitionKind::UnsentReportedProved;
    } else {
        t.kind = TransitionKind::FalseAckBuyerProved;
    }
    settle(s, t);
}

void Arbiter::timeout(SessionId id, Tick now) {
    Session& s = mutable_session(id);
    if (s.status != SessionStatus::DisputeOpen) throw ArbiterError("nothing due to time out");
    const Dispute& d = *s.dispute;
    if (now < d.deadline) throw ArbiterError("dispute deadline not reached");

    s.tx_count += 1;
    s.clock = std::max(s.clock, now);
    Transition t;
    t.k = d.k;
    switch (d.kind) {
        case DisputeKind::SellerMisbehavior:
            t.kind = d.chunk_delivered ? TransitionKind::SentReportedTimeout
                                       : TransitionKind::UnsentReportedTimeout;
            break;
        case DisputeKind::MissingAck:
            t.kind = d.chunk_delivered ? TransitionKind::SentBuyerTimeout
                                       : TransitionKind::UnsentBuyerTimeout;
            break;
        case DisputeKind::FalseAck:
            t.kind = TransitionKind::FalseAckBuyerTimeout;
            break;
    }
    settle(s, t);
}

void Arbiter::finalize(SessionId id, const Acknowledgment& final_ack, Tick now) {
    Session& s = mutable_session(id);
    if (s.status != SessionStatus::Active) throw ArbiterError("session not active");
    if (!verify_ack(s.params.buyer_key, final_ack, s.params.fingerprint, 1,
                    s.params.seller_key)) {
        throw ArbiterError("final acknowledgment does not verify");
    }
    s.tx_count += 1;
    s.clock = std::max(s.clock, now);
    settle(s, Transition{TransitionKind::HonestComplete, 0});
}

void Arbiter::settle(Session& s, const Transition& t) {
    const Payout payout = settle_table(t, payout_params(s.params));
    if (payout.to_buyer + payout.to_seller + payout.burned != s.escrow) {
        throw ArbiterError("settlement does not conserve escrow");
    }
    credit(s.params.buyer_key, payout.to_buyer);
    credit(s.params.seller_key, payout.to_seller);
    burned_ += payout.burned;
    s.escrow = 0;
    s.transition = t;
    s.payout = payout;
    s.status = SessionStatus::Settled;
    s.dispute.reset();
    active_.erase(triple_key(s.params));
}

const Session& Arbiter::session(SessionId id) const {
    if (id >= sessions_.size()) throw ArbiterError("unknown session");
    return sessions_[id];
}

Session& Arbiter::mutable_session(SessionId id) {
    if (id >= sessions_.size()) throw ArbiterError("unknown session");
    Session& s = sessions_[id];
    if (s.status == SessionStatus::Settled) throw ArbiterError("session already settled");
    return s;
}

void Arbiter::credit(const PublicKey& who, Money amount) {
    if (amount < 0) throw ArbiterError("negative credit");
    pool_[key_to_hex(who)] += amount;
}

void Arbiter::lock(const PublicKey& who, Money amount) {
    if (amount < 0) throw ArbiterError("negative lock");
    Money& bal = pool_[key_to_hex(who)];
    if (bal < amount) throw ArbiterError("insufficient unlocked balance");
    bal -= amount;
}

Money Arbiter::balance(const PublicKey& who) const {
    auto it = pool_.find(key_to_hex(who));
    return it == pool_.end() ? 0 : it->second;
}

}  // namespace fairex
