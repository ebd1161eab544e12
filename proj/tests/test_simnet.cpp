#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fairex/simnet.hpp"

using namespace fairex;

namespace {

// 450 bytes pad to 8 blocks; with CL = 2 that is n = 4 chunks.
Scenario base_scenario() {
    Scenario s;
    s.file_seed = 42;
    s.file_len = 450;
    s.chunk_len = 2;
    s.price = 100;
    s.buyer_value = 120;
    s.seller_cost = 50;
    s.max_timeout = 50;
    s.seed = 7;
    return s;
}

std::size_t chunk_count(const Scenario& s) {
    const auto padded = pad_message(scenario_file(s));
    return (padded.blocks.size() + s.chunk_len - 1) / s.chunk_len;
}

Scenario with_seller(StrategyKind kind, std::size_t k, Tick t = 0) {
    Scenario s = base_scenario();
    s.seller_strategies = {{kind, k, t}};
    return s;
}

Scenario with_buyer(StrategyKind kind, std::size_t k, Tick t = 0) {
    Scenario s = base_scenario();
    s.buyer_strategy = {kind, k, t};
    return s;
}

void check_trace_invariants(const Trace& trace, std::size_t sessions) {
    Tick last = 0;
    for (const auto& event : trace.events) {
        CHECK(event.time >= last);
        last = event.time;
    }
    CHECK(trace.outcomes.size() == sessions);
}

}  // namespace

TEST_CASE("honest exchange: three arbiter calls and a faithful copy") {
    const Scenario s = base_scenario();
    const Trace trace = run_scenario(s);
    check_trace_invariants(trace, 1);

    CHECK(trace.tx_count == 3);
    CHECK(trace.completed);
    CHECK(trace.checksum == fingerprint(scenario_file(s)).to_hex());

    const auto& outcome = trace.outcomes.front();
    CHECK(outcome.transition.kind == TransitionKind::HonestComplete);
    CHECK(outcome.payout.to_buyer == 100);   // D_B back
    CHECK(outcome.payout.to_seller == 200);  // D_S + F_p
    CHECK(outcome.payout.burned == 0);
}

TEST_CASE("aborting seller gets reported, proves, and is paid per chunk") {
    const std::size_t n = chunk_count(base_scenario());
    REQUIRE(n == 4);
    const std::size_t k = 2;
    const Trace trace = run_scenario(with_seller(StrategyKind::AbortAtChunk, k));
    check_trace_invariants(trace, 1);

    const auto& outcome = trace.outcomes.front();
    CHECK(outcome.transition == Transition{TransitionKind::UnsentReportedProved, k});
    CHECK(outcome.payout.to_buyer == static_cast<Money>(100 * (k - 1) / n));
    CHECK(outcome.payout.to_seller == static_cast<Money>(100 * (n - k + 1) / n));
    CHECK_FALSE(trace.completed);
    CHECK(outcome.tx_count == 4);  // setup, accept, report, prove
}

TEST_CASE("corrupted and out-of-order chunks settle as undelivered, proved") {
    for (auto kind : {StrategyKind::WrongChunkAt, StrategyKind::OutOfOrderAt}) {
        const Trace trace = run_scenario(with_seller(kind, 3));
        const auto& outcome = trace.outcomes.front();
        CHECK(outcome.transition == Transition{TransitionKind::UnsentReportedProved, 3});
        CHECK_FALSE(trace.completed);
    }
}

TEST_CASE("false-acking buyer forfeits everything to the seller") {
    const Trace trace = run_scenario(with_buyer(StrategyKind::FalseAckAt, 2));
    const auto& outcome = trace.outcomes.front();
    CHECK(outcome.transition == Transition{TransitionKind::FalseAckBuyerTimeout, 2});
    CHECK(outcome.payout.to_seller == 100 + 100 + 100);  // D_S + D_B + F_p
    CHECK(outcome.payout.to_buyer == 0);
}

TEST_CASE("false-acking buyer against an aborting seller also forfeits") {
    Scenario s = base_scenario();
    s.seller_strategies = {{StrategyKind::AbortAtChunk, 2, 0}};
    s.buyer_strategy = {StrategyKind::FalseAckAt, 2, 0};
    const Trace trace = run_scenario(s);
    const auto& outcome = trace.outcomes.front();
    CHECK(outcome.transition == Transition{TransitionKind::FalseAckBuyerTimeout, 2});
    CHECK(outcome.payout.to_seller == 300);
}

TEST_CASE("silent buyer loses the unacknowledged chunk and its deposit") {
    const std::size_t n = chunk_count(base_scenario());
    const std::size_t k = 2;
    const Trace trace = run_scenario(with_buyer(StrategyKind::NoAckAt, k));
    const auto& outcome = trace.outcomes.front();
    CHECK(outcome.transition == Transition{TransitionKind::SentBuyerTimeout, k});
    CHECK(outcome.payout.to_buyer == 0);
    CHECK(outcome.payout.to_seller == static_cast<Money>(100 * (n - k) / n) + 100);
}

TEST_CASE("false buyer report is answered by a possession proof") {
    const std::size_t n = chunk_count(base_scenario());
    const std::size_t k = 3;
    const Trace trace = run_scenario(with_buyer(StrategyKind::FalseReportAt, k));
    const auto& outcome = trace.outcomes.front();
    CHECK(outcome.transition == Transition{TransitionKind::SentReportedProved, k});
    CHECK(outcome.payout.to_buyer == static_cast<Money>(100 * (k - 1) / n));
    CHECK(outcome.payout.to_seller == static_cast<Money>(100 * (n - k + 1) / n));
}

TEST_CASE("seller lying about a missing ack only hurts itself") {
    const std::size_t n = chunk_count(base_scenario());
    const std::size_t k = 3;
    const Trace trace = run_scenario(with_seller(StrategyKind::SellerFalseReportAt, k));
    const auto& outcome = trace.outcomes.front();
    CHECK(outcome.transition == Transition{TransitionKind::SentBuyerTimeout, k});
    // Paid for the acknowledged chunks only, strictly less than F_p + D_S.
    CHECK(outcome.payout.to_seller == static_cast<Money>(100 * (n - k) / n) + 100);
    CHECK(outcome.payout.to_seller < 200);
}

TEST_CASE("offline parties time out of their disputes") {
    SUBCASE("seller vanishes mid-transfer") {
        const Trace trace = run_scenario(with_seller(StrategyKind::OfflineAt, 0, 4));
        const auto& outcome = trace.outcomes.front();
        CHECK(outcome.transition.kind == TransitionKind::UnsentReportedTimeout);
        CHECK(outcome.payout.to_buyer == 100 + 100);  // F_p + D_B
        CHECK(outcome.payout.to_seller == 0);
    }
    SUBCASE("buyer vanishes mid-transfer") {
        const Trace trace = run_scenario(with_buyer(StrategyKind::OfflineAt, 0, 4));
        const auto& outcome = trace.outcomes.front();
        CHECK(outcome.transition.kind == TransitionKind::SentBuyerTimeout);
        CHECK(outcome.payout.to_buyer == 0);
    }
}

TEST_CASE("disputes settle within MAX_TIMEOUT of the report") {
    const Trace trace = run_scenario(with_seller(StrategyKind::OfflineAt, 0, 4));
    Tick report_time = -1;
    Tick settle_time = -1;
    for (const auto& event : trace.events) {
        if (event.action == "report") report_time = event.time;
        if (event.action == "timeout") settle_time = event.time;
    }
    REQUIRE(report_time >= 0);
    REQUIRE(settle_time >= 0);
    CHECK(settle_time - report_time <= base_scenario().max_timeout);
}

TEST_CASE("identical scenarios produce byte-identical traces") {
    const Scenario s = with_seller(StrategyKind::AbortAtChunk, 2);
    const auto a = trace_to_jsonl(run_scenario(s));
    const auto b = trace_to_jsonl(run_scenario(s));
    CHECK(a == b);
    CHECK_FALSE(a.empty());
}

TEST_CASE("scenario JSON round trip") {
    Scenario s = with_seller(StrategyKind::WrongChunkAt, 2);
    s.utility = UtilityKind::EntireFile;
    const auto text = scenario_to_json(s);
    const Scenario back = scenario_from_json(text);
    CHECK(back.file_seed == s.file_seed);
    CHECK(back.file_len == s.file_len);
    CHECK(back.chunk_len == s.chunk_len);
    CHECK(back.price == s.price);
    CHECK(back.seller_strategies.size() == 1);
    CHECK(back.seller_strategies[0].kind == StrategyKind::WrongChunkAt);
    CHECK(back.utility == UtilityKind::EntireFile);
    CHECK(trace_to_jsonl(run_scenario(back)) == trace_to_jsonl(run_scenario(s)));
}

TEST_CASE("simulator terminals match the game tree leaves") {
    const std::size_t n = chunk_count(base_scenario());
    GameConfig config;
    config.n = n;
    config.price = 100;
    config.buyer_value = 120;
    config.seller_cost = 50;
    config.seller_deposit = 100;
    config.buyer_deposit = 100;
    config.utilities = linear_utilities(n);
    const auto tree = build_full_tree(config, false);

    const std::vector<Scenario> scenarios = {
        base_scenario(),
        with_seller(StrategyKind::AbortAtChunk, 2),
        with_seller(StrategyKind::WrongChunkAt, 1),
        with_buyer(StrategyKind::FalseReportAt, 3),
        with_buyer(StrategyKind::NoAckAt, 2),
        with_buyer(StrategyKind::FalseAckAt, 2),
        with_seller(StrategyKind::OfflineAt, 0, 4),
    };
    for (const auto& scenario : scenarios) {
        const Trace trace = run_scenario(scenario);
        const auto& outcome = trace.outcomes.front();
        const GameNode* leaf = nullptr;
        for (const auto& node : tree.nodes) {
            if (node.kind == NodeKind::Terminal && node.missed == 0 &&
                node.transition == outcome.transition) {
                leaf = &node;
                break;
            }
        }
        REQUIRE(leaf != nullptr);
        const auto totals = terminal_totals(outcome.transition, outcome.payout, config.utilities,
                                            config.buyer_value, config.seller_cost);
        CHECK(totals.first == leaf->buyer_payoff);
        CHECK(totals.second == leaf->seller_payoff);
    }
}

TEST_CASE("with price-sized deposits no single deviation beats honesty") {
    std::vector<Scenario> scenarios = {
        with_seller(StrategyKind::AbortAtChunk, 1),
        with_seller(StrategyKind::AbortAtChunk, 2),
        with_seller(StrategyKind::AbortAtChunk, 4),
        with_seller(StrategyKind::WrongChunkAt, 2),
        with_seller(StrategyKind::OutOfOrderAt, 3),
        with_seller(StrategyKind::SellerFalseReportAt, 2),
        with_seller(StrategyKind::OfflineAt, 0, 4),
        with_buyer(StrategyKind::FalseReportAt, 2),
        with_buyer(StrategyKind::NoAckAt, 3),
        with_buyer(StrategyKind::FalseAckAt, 2),
        with_buyer(StrategyKind::OfflineAt, 0, 6),
    };
    const auto summary = run_matrix(scenarios);
    REQUIRE(summary.rows.size() == scenarios.size());
    CHECK_FALSE(summary.any_profitable_deviation);
    for (const auto& row : summary.rows) {
        REQUIRE(row.deviator.has_value());
        CHECK(row.deviator_total < row.honest_total);
    }
}

TEST_CASE("a zero seller deposit invites a profitable deviation") {
    Scenario s = with_seller(StrategyKind::AbortAtChunk, 1);
    s.seller_deposit = 0;
    s.utility = UtilityKind::EntireFile;
    const auto summary = run_matrix({s});
    CHECK(summary.any_profitable_deviation);
    CHECK(summary.rows.front().outperforms);
}

TEST_CASE("empty matrix yields an empty summary") {
    const auto summary = run_matrix({});
    CHECK(summary.rows.empty());
    CHECK_FALSE(summary.any_profitable_deviation);
    CHECK(matrix_to_string(summary).find("no scenarios") != std::string::npos);
}

TEST_CASE("multiparty honest run splits payoffs and uses two buyer calls") {
    Scenario s = base_scenario();
    s.file_len = 900;  // 15 padded blocks
    s.chunk_len = 2;
    s.z = 2;
    s.price = 100;
    const Trace trace = run_scenario(s);
    check_trace_invariants(trace, 2);

    CHECK(trace.completed);
    CHECK(trace.checksum == fingerprint(scenario_file(s)).to_hex());
    CHECK(trace.buyer_tx_count == 2);  // open + redeem
    for (const auto& outcome : trace.outcomes) {
        CHECK(outcome.transition.kind == TransitionKind::HonestComplete);
        CHECK(outcome.payout.to_seller == 50 + 50);  // F_p/z + D_S/z
    }
    CHECK(trace.total.to_buyer == 100);  // D_B refunded in full
}

TEST_CASE("one bad segment seller does not poison the others") {
    Scenario s = base_scenario();
    s.file_len = 900;
    s.chunk_len = 2;
    s.z = 2;
    s.seller_strategies = {{StrategyKind::Honest, 0, 0}, {StrategyKind::AbortAtChunk, 1, 0}};
    const Trace trace = run_scenario(s);
    check_trace_invariants(trace, 2);

    bool saw_honest = false;
    bool saw_dispute = false;
    for (const auto& outcome : trace.outcomes) {
        if (outcome.segment == 1) {
            CHECK(outcome.transition.kind == TransitionKind::HonestComplete);
            saw_honest = true;
        } else {
            CHECK(outcome.transition == Transition{TransitionKind::UnsentReportedProved, 1});
            saw_dispute = true;
        }
    }
    CHECK(saw_honest);
    CHECK(saw_dispute);
    CHECK_FALSE(trace.completed);
}

TEST_CASE("scenario validation rejects nonsense") {
    Scenario s;
    CHECK_THROWS_AS(validate_scenario(s), SimError);  // no file at all
    s = base_scenario();
    s.chunk_len = 0;
    CHECK_THROWS_AS(validate_scenario(s), SimError);
    s = base_scenario();
    s.max_timeout = 2;
    CHECK_THROWS_AS(validate_scenario(s), SimError);
    s = base_scenario();
    s.seller_strategies = {{}, {}};
    CHECK_THROWS_AS(validate_scenario(s), SimError);  // z = 1 but two sellers
}
