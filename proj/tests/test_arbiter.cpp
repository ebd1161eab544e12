#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fairex/arbiter.hpp"
#include "reference_sha256.hpp"

#include <random>

using namespace fairex;

namespace {

struct Fixture {
    KeyPair buyer = KeyPair::from_seed(std::uint64_t{101});
    KeyPair seller = KeyPair::from_seed(std::uint64_t{202});
    std::vector<std::uint8_t> bytes;
    PaddedFile padded;
    ChunkPlan plan;
    std::vector<ChainingValue> hashes;
    ExchangeParams params;

    explicit Fixture(std::size_t len = 600, std::size_t chunk_len = 2, Money price = 100) {
        std::mt19937_64 rng(9);
        bytes = testutil::random_bytes(rng, len);
        padded = pad_message(bytes);
        plan = partition_chunks(padded.blocks.size(), chunk_len);
        hashes = compute_intermediate_hashes(padded, plan);
        params = make_params(hashes.back(), padded.blocks.size(), chunk_len, price, buyer.pub,
                             seller.pub);
        params.max_timeout = 100;
    }

    SessionId open(Arbiter& arbiter) const {
        const SessionId id = arbiter.set_parameters_and_pay(params, params.seller_deposit, hashes);
        arbiter.accept_parameters_and_pay(id, params.price + params.buyer_deposit, 0);
        return id;
    }

    Acknowledgment ack(std::size_t k) const {
        return make_ack(buyer, params.fingerprint, k, seller.pub);
    }

    std::pair<ChainingValue, Block> proof_for(std::size_t k) const {
        const auto& r = plan.range(k);
        auto span = std::span(padded.blocks).subspan(r.begin, r.size());
        return possession_proof(hashes[k - 1], span);
    }
};

}  // namespace

TEST_CASE("session setup and funding rules") {
    Fixture fx;
    Arbiter arbiter;

    const SessionId id = arbiter.set_parameters_and_pay(fx.params, fx.params.seller_deposit,
                                                        fx.hashes);
    CHECK(arbiter.session(id).status == SessionStatus::AwaitBuyer);
    CHECK(arbiter.session(id).escrow == fx.params.seller_deposit);
    CHECK(arbiter.session(id).tx_count == 1);

    // Underfunded seller deposit.
    CHECK_THROWS_AS(arbiter.set_parameters_and_pay(fx.params, 0, fx.hashes), ArbiterError);

    // Duplicate active session on the same (buyer, seller, fingerprint).
    CHECK_THROWS_AS(arbiter.set_parameters_and_pay(fx.params, fx.params.seller_deposit, fx.hashes),
                    ArbiterError);

    // Wrong buyer payment.
    CHECK_THROWS_AS(arbiter.accept_parameters_and_pay(id, fx.params.price, 0), ArbiterError);
    arbiter.accept_parameters_and_pay(id, fx.params.price + fx.params.buyer_deposit, 0);
    CHECK(arbiter.session(id).status == SessionStatus::Active);
    CHECK(arbiter.session(id).escrow ==
          fx.params.price + fx.params.seller_deposit + fx.params.buyer_deposit);
    CHECK(arbiter.session(id).tx_count == 2);

    // Commitment must span H_0..H_n with matching endpoints.
    auto truncated = fx.hashes;
    truncated.pop_back();
    auto other = fx.params;
    other.fingerprint = fingerprint(std::string("other file"));
    CHECK_THROWS_AS(arbiter.set_parameters_and_pay(other, other.seller_deposit, truncated),
                    ArbiterError);
    CHECK_THROWS_AS(arbiter.set_parameters_and_pay(other, other.seller_deposit, fx.hashes),
                    ArbiterError);
}

TEST_CASE("honest finalize pays the table's first row in three calls") {
    Fixture fx;
    Arbiter arbiter;
    const SessionId id = fx.open(arbiter);

    // Finalize needs a valid A_1.
    auto forged = fx.ack(1);
    forged.signature[0] ^= 1;
    CHECK_THROWS_AS(arbiter.finalize(id, forged, 10), ArbiterError);

    arbiter.finalize(id, fx.ack(1), 10);
    const Session& s = arbiter.session(id);
    CHECK(s.status == SessionStatus::Settled);
    CHECK(s.tx_count == 3);
    CHECK(s.payout->to_buyer == fx.params.buyer_deposit);
    CHECK(s.payout->to_seller == fx.params.seller_deposit + fx.params.price);
    CHECK(s.payout->burned == 0);
    CHECK(arbiter.balance(fx.buyer.pub) == fx.params.buyer_deposit);
    CHECK(arbiter.balance(fx.seller.pub) == fx.params.seller_deposit + fx.params.price);

    // Settled sessions are absorbing.
    CHECK_THROWS_AS(arbiter.finalize(id, fx.ack(1), 11), ArbiterError);
    CHECK_THROWS_AS(arbiter.report(id, Party::Buyer, 1, DisputeKind::SellerMisbehavior, {}, false,
                                   11),
                    ArbiterError);

    // A fresh session on the same triple is allowed once settled.
    CHECK_NOTHROW(arbiter.set_parameters_and_pay(fx.params, fx.params.seller_deposit, fx.hashes));
}

TEST_CASE("buyer report then seller proof settles the proved row") {
    Fixture fx;
    Arbiter arbiter;
    const SessionId id = fx.open(arbiter);
    const std::size_t k = 2;

    arbiter.report(id, Party::Buyer, k, DisputeKind::SellerMisbehavior, {}, false, 5);
    CHECK(arbiter.session(id).status == SessionStatus::DisputeOpen);
    CHECK(arbiter.session(id).dispute->deadline == 5 + fx.params.max_timeout);

    // Second dispute is rejected while one is open.
    CHECK_THROWS_AS(arbiter.report(id, Party::Buyer, k, DisputeKind::SellerMisbehavior, {}, false,
                                   6),
                    ArbiterError);
    // Finalize is rejected during a dispute.
    CHECK_THROWS_AS(arbiter.finalize(id, fx.ack(1), 6), ArbiterError);

    // Wrong prover.
    auto [h, block] = fx.proof_for(k);
    CHECK_THROWS_AS(arbiter.prove(id, Party::Buyer, h, block, 6), ArbiterError);

    // Tampered block: rejected, dispute stays open.
    auto bad = block;
    bad[0] ^= 1;
    CHECK_THROWS_AS(arbiter.prove(id, Party::Seller, h, bad, 6), ArbiterError);
    CHECK(arbiter.session(id).status == SessionStatus::DisputeOpen);

    arbiter.prove(id, Party::Seller, h, block, 6);
    const Session& s = arbiter.session(id);
    CHECK(s.status == SessionStatus::Settled);
    CHECK(s.transition->kind == TransitionKind::UnsentReportedProved);
    const std::size_t n = fx.params.n;
    CHECK(s.payout->to_buyer == static_cast<Money>(fx.params.price * (k - 1) / n));
    CHECK(s.payout->to_seller == static_cast<Money>(fx.params.price * (n - k + 1) / n));
    // Deposits from both sides are forfeited in a proved dispute.
    CHECK(s.payout->burned >= fx.params.seller_deposit + fx.params.buyer_deposit);
    CHECK(s.tx_count == 4);
}

TEST_CASE("proof after the deadline is rejected and the timeout row applies") {
    Fixture fx;
    Arbiter arbiter;
    const SessionId id = fx.open(arbiter);
    arbiter.report(id, Party::Buyer, 1, DisputeKind::SellerMisbehavior, {}, true, 5);

    auto [h, block] = fx.proof_for(1);
    const Tick deadline = arbiter.session(id).dispute->deadline;
    CHECK_THROWS_AS(arbiter.prove(id, Party::Seller, h, block, deadline), ArbiterError);
    CHECK_THROWS_AS(arbiter.timeout(id, deadline - 1), ArbiterError);

    arbiter.timeout(id, deadline);
    const Session& s = arbiter.session(id);
    CHECK(s.transition->kind == TransitionKind::SentReportedTimeout);
    CHECK(s.payout->to_buyer == fx.params.price + fx.params.buyer_deposit);
    CHECK(s.payout->to_seller == 0);
}

TEST_CASE("seller missing-ack report needs the right evidence") {
    Fixture fx;
    Arbiter arbiter;
    const std::size_t n = fx.params.n;
    const SessionId id = fx.open(arbiter);

    // Claim at k < n without the A_{k+1} evidence: rejected.
    CHECK_THROWS_AS(
        arbiter.report(id, Party::Seller, n - 1, DisputeKind::MissingAck, {}, true, 3),
        ArbiterError);
    // Wrong-index evidence: rejected.
    CHECK_THROWS_AS(arbiter.report(id, Party::Seller, n - 1, DisputeKind::MissingAck,
                                   fx.ack(n - 1), true, 3),
                    ArbiterError);

    // At k = n nothing has been acknowledged yet; no evidence needed.
    arbiter.report(id, Party::Seller, n, DisputeKind::MissingAck, {}, true, 3);
    arbiter.timeout(id, 3 + fx.params.max_timeout);
    const Session& s = arbiter.session(id);
    CHECK(s.transition->kind == TransitionKind::SentBuyerTimeout);
    CHECK(s.transition->k == n);
    CHECK(s.payout->to_buyer == 0);
    CHECK(s.payout->to_seller ==
          static_cast<Money>(fx.params.price * (n - n) / n) + fx.params.seller_deposit);
}

TEST_CASE("false-ack dispute: buyer proof or forfeiture") {
    Fixture fx;
    Arbiter arbiter;
    const std::size_t k = 3;

    SUBCASE("buyer cannot prove and the seller takes the whole escrow") {
        const SessionId id = fx.open(arbiter);
        CHECK_THROWS_AS(arbiter.report(id, Party::Seller, k, DisputeKind::FalseAck, {}, false, 4),
                        ArbiterError);  // claim needs the disputed ack
        arbiter.report(id, Party::Seller, k, DisputeKind::FalseAck, fx.ack(k), false, 4);
        arbiter.timeout(id, 4 + fx.params.max_timeout);
        const Session& s = arbiter.session(id);
        CHECK(s.transition->kind == TransitionKind::FalseAckBuyerTimeout);
        CHECK(s.payout->to_seller ==
              fx.params.seller_deposit + fx.params.buyer_deposit + fx.params.price);
        CHECK(s.payout->to_buyer == 0);
        CHECK(s.payout->burned == 0);
    }

    SUBCASE("buyer proves possession and splits at k/n") {
        const SessionId id = fx.open(arbiter);
        arbiter.report(id, Party::Seller, k, DisputeKind::FalseAck, fx.ack(k), false, 4);
        auto [h, block] = fx.proof_for(k);
        arbiter.prove(id, Party::Buyer, h, block, 6);
        const Session& s = arbiter.session(id);
        CHECK(s.transition->kind == TransitionKind::FalseAckBuyerProved);
        const std::size_t n = fx.params.n;
        CHECK(s.payout->to_buyer == static_cast<Money>(fx.params.price * k / n));
        CHECK(s.payout->to_seller == static_cast<Money>(fx.params.price * (n - k) / n));
    }

    SUBCASE("forged evidence is rejected") {
        const SessionId id = fx.open(arbiter);
        auto forged = fx.ack(k);
        forged.signature[3] ^= 1;
        CHECK_THROWS_AS(
            arbiter.report(id, Party::Seller, k, DisputeKind::FalseAck, forged, false, 4),
            ArbiterError);
        CHECK(arbiter.session(id).status == SessionStatus::Active);
    }
}

TEST_CASE("settle_table matches the appendix rows on frozen examples") {
    // SentReportedProved, k=2, n=4, F_p=100, D=100: buyer (k-1)/n, seller (n-k+1)/n.
    PayoutParams p{4, 100, 100, 100};
    auto proved = settle_table({TransitionKind::SentReportedProved, 2}, p);
    CHECK(proved.to_buyer == 25);
    CHECK(proved.to_seller == 75);
    CHECK(proved.burned == 200);

    auto false_proved = settle_table({TransitionKind::FalseAckBuyerProved, 2}, p);
    CHECK(false_proved.to_buyer == 50);
    CHECK(false_proved.to_seller == 50);

    auto honest = settle_table({TransitionKind::HonestComplete, 0}, p);
    CHECK(honest.to_buyer == 100);
    CHECK(honest.to_seller == 200);
    CHECK(honest.burned == 0);

    auto seller_kept = settle_table({TransitionKind::SentBuyerTimeout, 1}, p);
    CHECK(seller_kept.to_buyer == 0);
    CHECK(seller_kept.to_seller == 100 * 3 / 4 + 100);

    auto forfeit = settle_table({TransitionKind::FalseAckBuyerTimeout, 2}, p);
    CHECK(forfeit.to_seller == 300);
    CHECK(forfeit.burned == 0);

    CHECK_THROWS_AS(settle_table({TransitionKind::SentReportedProved, 5}, p), ArbiterError);
    CHECK_THROWS_AS(settle_table({TransitionKind::SentReportedProved, 0}, p), ArbiterError);
}

TEST_CASE("uneven divisions round down and burn the remainder") {
    PayoutParams p{3, 100, 50, 50};
    auto payout = settle_table({TransitionKind::SentReportedProved, 2}, p);
    CHECK(payout.to_buyer == 33);   // floor(100/3)
    CHECK(payout.to_seller == 66);  // floor(200/3)
    CHECK(payout.to_buyer + payout.to_seller + payout.burned == 200);

    const auto [buyer_exact, seller_exact] =
        settle_rational({TransitionKind::SentReportedProved, 2}, p);
    CHECK(buyer_exact == Rational(100, 3));
    CHECK(seller_exact == Rational(200, 3));
}

TEST_CASE("conservation holds on random parameter draws") {
    std::mt19937_64 rng(77);
    const TransitionKind kinds[] = {
        TransitionKind::HonestComplete,        TransitionKind::SentReportedProved,
        TransitionKind::SentReportedTimeout,   TransitionKind::SentBuyerTimeout,
        TransitionKind::UnsentReportedProved,  TransitionKind::UnsentReportedTimeout,
        TransitionKind::UnsentBuyerTimeout,    TransitionKind::FalseAckBuyerTimeout,
        TransitionKind::FalseAckBuyerProved,
    };
    for (int trial = 0; trial < 2000; ++trial) {
        PayoutParams p;
        p.n = 1 + rng() % 64;
        p.price = 1 + static_cast<Money>(rng() % 1'000'000);
        p.seller_deposit = static_cast<Money>(rng() % 1'000'000);
        p.buyer_deposit = static_cast<Money>(rng() % 1'000'000);
        const auto kind = kinds[rng() % 9];
        const std::size_t k = kind == TransitionKind::HonestComplete ? 0 : 1 + rng() % p.n;
        const auto payout = settle_table({kind, k}, p);
        REQUIRE(payout.to_buyer >= 0);
        REQUIRE(payout.to_seller >= 0);
        REQUIRE(payout.burned >= 0);
        REQUIRE(payout.to_buyer + payout.to_seller + payout.burned ==
                p.price + p.seller_deposit + p.buyer_deposit);
    }
}

TEST_CASE("transferred chunk counts follow the table convention") {
    const std::size_t n = 5;
    CHECK(transferred_chunks({TransitionKind::HonestComplete, 0}, n) == 5);
    CHECK(transferred_chunks({TransitionKind::SentReportedProved, 2}, n) == 4);
    CHECK(transferred_chunks({TransitionKind::SentBuyerTimeout, 5}, n) == 1);
    CHECK(transferred_chunks({TransitionKind::UnsentReportedTimeout, 2}, n) == 3);
    CHECK(transferred_chunks({TransitionKind::FalseAckBuyerProved, 5}, n) == 0);
}

TEST_CASE("canonical session description") {
    Fixture fx;
    Arbiter arbiter;
    const SessionId id = fx.open(arbiter);
    const auto text = describe(arbiter.session(id));
    CHECK(text.find("status=active") == 0);
    CHECK(text.find("escrow=300") != std::string::npos);
    CHECK(text.find("fingerprint=" + fx.params.fingerprint.to_hex()) != std::string::npos);

    arbiter.report(id, Party::Buyer, 1, DisputeKind::SellerMisbehavior, {}, false, 7);
    const auto disputed = describe(arbiter.session(id));
    CHECK(disputed.find("dispute.by=buyer") != std::string::npos);
    CHECK(disputed.find("dispute.deadline=107") != std::string::npos);
}

TEST_CASE("deposit pool locks and credits") {
    Arbiter arbiter;
    const auto who = KeyPair::from_seed(std::uint64_t{404}).pub;
    CHECK(arbiter.balance(who) == 0);
    arbiter.credit(who, 50);
    CHECK(arbiter.balance(who) == 50);
    arbiter.lock(who, 30);
    CHECK(arbiter.balance(who) == 20);
    CHECK_THROWS_AS(arbiter.lock(who, 21), ArbiterError);
}
