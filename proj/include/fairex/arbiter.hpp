#pragma once

#include "fairex/protocol.hpp"
#include "fairex/rational.hpp"

#include <map>
#include <optional>
#include <string>

namespace fairex {

Money floor_money(const Rational& r);

struct ArbiterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The nine terminal rows of the payoff table.
enum class TransitionKind {
    HonestComplete,         // T_n..A_1 ran clean
    SentReportedProved,     // chunk sent, buyer reported, seller proved
    SentReportedTimeout,    // chunk sent, buyer reported, seller silent
    SentBuyerTimeout,       // chunk sent, buyer neither acked nor reported
    UnsentReportedProved,   // chunk withheld, buyer reported, seller proved
    UnsentReportedTimeout,  // chunk withheld, buyer reported, seller silent
    UnsentBuyerTimeout,     // chunk withheld, buyer stayed silent
    FalseAckBuyerTimeout,   // undelivered chunk acked, buyer could not prove
    FalseAckBuyerProved,    // undelivered chunk acked, buyer proved possession
};

const char* to_string(TransitionKind k);

struct Transition {
    TransitionKind kind = TransitionKind::HonestComplete;
    std::size_t k = 0;  // disputed chunk; unused for HonestComplete

    bool operator==(const Transition&) const = default;
};

/// Chunks transferred at a terminal, following the table's index convention.
std::size_t transferred_chunks(const Transition& t, std::size_t n);

struct Payout {
    Money to_buyer = 0;
    Money to_seller = 0;
    Money burned = 0;

    bool operator==(const Payout&) const = default;
};

struct PayoutParams {
    std::size_t n = 0;
    Money price = 0;           // F_p
    Money seller_deposit = 0;  // D_S
    Money buyer_deposit = 0;   // D_B
};

PayoutParams payout_params(const ExchangeParams& p);

/// Exact smart-contract payoffs (buyer, seller) for a table row.
std::pair<Rational, Rational> settle_rational(const Transition& t, const PayoutParams& p);

/// Integer settlement: each side rounded down, the escrow remainder burned.
Payout settle_table(const Transition& t, const PayoutParams& p);

enum class SessionStatus { AwaitSeller, AwaitBuyer, Active, DisputeOpen, Settled };

const char* to_string(SessionStatus s);

struct Dispute {
    Party by = Party::Buyer;
    DisputeKind kind = DisputeKind::SellerMisbehavior;
    std::size_t k = 0;
    Tick deadline = 0;
    bool chunk_delivered = false;  // reporter's claim; payoff-row bookkeeping only
};

struct Session {
    ExchangeParams params;
    std::vector<ChainingValue> hash_commitment;  // H_0..H_n, registered at setup
    SessionStatus status = SessionStatus::AwaitBuyer;
    Money escrow = 0;
    int tx_count = 0;
    Tick clock = 0;
    std::optional<Dispute> dispute;
    std::optional<Transition> transition;
    std::optional<Payout> payout;
};

/// Canonical single-line key=value form, documented in the README:
///   status escrow tx clock n cl price ds db fingerprint buyer seller
///   [dispute.by dispute.kind dispute.k dispute.deadline]
///   [settled.kind settled.k payout.buyer payout.seller payout.burned]
std::string describe(const Session& s);

using SessionId = std::size_t;

/// Simulated escrow contract. Sessions are sequential single-writer values;
/// the account pool is where settled funds and serving deposits live.
class Arbiter {
public:
    /// Seller opens the session with params, the chunk-hash commitment and
    /// the agreed deposit. One active session per (buyer, seller, fingerprint).
    SessionId set_parameters_and_pay(const ExchangeParams& params, Money seller_deposit,
                                     std::vector<ChainingValue> hash_commitment, Tick now = 0);

    /// Buyer accepts by paying F_p + D_B exactly.
    void accept_parameters_and_pay(SessionId id, Money payment, Tick now);

    /// Opens a dispute; the reported party has MAX_TIMEOUT to answer.
    /// Seller reports carry the disputed A_k (false ack) or the last received
    /// A_{k+1} (missing ack, no evidence needed at k = n).
    void report(SessionId id, Party by, std::size_t k, DisputeKind kind,
                const std::optional<Acknowledgment>& evidence, bool chunk_delivered, Tick now);

    /// Possession proof: one compression application must land on H_k^c.
    void prove(SessionId id, Party by, const ChainingValue& h, const Block& block, Tick now);

    /// Settles an expired dispute with the matching timeout row.
    void timeout(SessionId id, Tick now);

    /// Seller closes a clean run with the final acknowledgment A_1.
    void finalize(SessionId id, const Acknowledgment& final_ack, Tick now);

    const Session& session(SessionId id) const;
    std::size_t session_count() const { return sessions_.size(); }

    /// Unlocked account balances (deposit recycling pool).
    void credit(const PublicKey& who, Money amount);
    void lock(const PublicKey& who, Money amount);
    Money balance(const PublicKey& who) const;
    Money burned_total() const { return burned_; }

private:
    Session& mutable_session(SessionId id);
    void settle(Session& s, const Transition& t);
    static std::string triple_key(const ExchangeParams& p);

    std::vector<Session> sessions_;
    std::map<std::string, SessionId> active_;
    std::map<std::string, Money> pool_;
    Money burned_ = 0;
};

}  // namespace fairex
