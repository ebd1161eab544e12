#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fairex/game.hpp"

#include <random>

using namespace fairex;

namespace {

GameConfig base_config(std::size_t n, UtilityProfile profile, Money ds = 100, Money db = 100) {
    GameConfig c;
    c.n = n;
    c.price = 100;
    c.buyer_value = 120;
    c.seller_cost = 50;
    c.seller_deposit = ds;
    c.buyer_deposit = db;
    c.utilities = std::move(profile);
    return c;
}

std::size_t count_kind(const GameTree& tree, NodeKind kind) {
    std::size_t count = 0;
    for (const auto& node : tree.nodes) count += node.kind == kind;
    return count;
}

const GameNode* find_leaf(const GameTree& tree, TransitionKind kind, std::size_t k,
                          std::size_t missed = 0) {
    for (const auto& node : tree.nodes) {
        if (node.kind == NodeKind::Terminal && node.transition.kind == kind &&
            node.transition.k == k && node.missed == missed) {
            return &node;
        }
    }
    return nullptr;
}

}  // namespace

TEST_CASE("utility profiles are validated") {
    CHECK_NOTHROW(validate_profile(linear_utilities(4)));
    CHECK_NOTHROW(validate_profile(entire_file_utilities(4)));
    CHECK_NOTHROW(validate_profile(first_chunk_utilities(4)));

    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
        CHECK_NOTHROW(validate_profile(random_monotone_utilities(1 + i % 6, rng)));
    }

    auto broken = linear_utilities(4);
    std::swap(broken.buyer[1], broken.buyer[3]);
    CHECK_THROWS_AS(validate_profile(broken), GameError);

    auto bad_end = linear_utilities(4);
    bad_end.seller[4] = Rational(1, 2);
    CHECK_THROWS_AS(validate_profile(bad_end), GameError);
}

TEST_CASE("config enforces the trade conditions") {
    auto config = base_config(3, linear_utilities(3));
    CHECK_NOTHROW(validate_config(config));
    config.price = 130;  // F_p > F_v
    CHECK_THROWS_AS(validate_config(config), GameError);
    config.price = 40;  // F_p < F_c
    CHECK_THROWS_AS(validate_config(config), GameError);
}

TEST_CASE("pruned tree has linear size: 11n + 1 nodes") {
    for (std::size_t n = 1; n <= 6; ++n) {
        const auto tree = build_pruned_tree(base_config(n, linear_utilities(n)));
        CHECK(tree.nodes.size() == 11 * n + 1);
        CHECK(count_kind(tree, NodeKind::SellerSend) == n);
        CHECK(count_kind(tree, NodeKind::BuyerAfterSend) == n);
        CHECK(count_kind(tree, NodeKind::BuyerAfterNoSend) == n);
        CHECK(count_kind(tree, NodeKind::SellerDisputeSent) == n);
        CHECK(count_kind(tree, NodeKind::SellerDisputeUnsent) == n);
        CHECK(count_kind(tree, NodeKind::Terminal) == 6 * n + 1);
        CHECK(count_kind(tree, NodeKind::SellerFalseAckChoice) == 0);
    }
}

TEST_CASE("n=1 pruned tree wires the smallest instance") {
    const auto tree = build_pruned_tree(base_config(1, linear_utilities(1)));
    const GameNode& root = tree.nodes[tree.root];
    CHECK(root.kind == NodeKind::SellerSend);
    CHECK(root.k == 1);
    REQUIRE(root.edges.size() == 2);
    CHECK(tree.nodes[root.edges[0].child].kind == NodeKind::BuyerAfterSend);
    CHECK(tree.nodes[root.edges[1].child].kind == NodeKind::BuyerAfterNoSend);
}

TEST_CASE("honest terminal pays D_B + F_v and D_S + F_p") {
    const auto config = base_config(4, linear_utilities(4));
    const auto tree = build_pruned_tree(config);
    const GameNode* leaf = find_leaf(tree, TransitionKind::HonestComplete, 0);
    REQUIRE(leaf != nullptr);
    CHECK(leaf->buyer_payoff == Rational(config.buyer_deposit + config.buyer_value));
    CHECK(leaf->seller_payoff == Rational(config.seller_deposit + config.price));
}

TEST_CASE("price-sized deposits make honesty the equilibrium") {
    // n=2, F_p=100, F_v=120, F_c=50, D_S=D_B=100, linear utilities.
    const auto config = base_config(2, linear_utilities(2));
    const auto result = backwards_induction(build_pruned_tree(config));
    CHECK(result.honest_is_spe);
    CHECK_FALSE(result.first_deviation.has_value());
    CHECK(result.buyer_root_value == Rational(100 + 120));
    CHECK(result.seller_root_value == Rational(100 + 100));
}

TEST_CASE("zero seller deposit with entire-file utilities breaks honesty") {
    auto config = base_config(4, entire_file_utilities(4), 0, 100);
    const auto tree = build_pruned_tree(config);
    const auto result = backwards_induction(tree);
    CHECK_FALSE(result.honest_is_spe);
    REQUIRE(result.first_deviation.has_value());

    // The seller defects near the last chunk: withholding it keeps the
    // exclusivity utility while the proved dispute still pays the full price.
    const auto last = tree.index.at({NodeKind::SellerSend, 1, 0});
    CHECK(*result.best_action[last] == GameAction::Withhold);
    // Withholding there beats the honest continuation F_p + D_S = F_p + 0.
    CHECK(result.values[last].second > Rational(config.price));
}

TEST_CASE("seller deviation value is bounded by the proof bound") {
    // Withholding at S_k is worth at most (n-k+1)/n * F_p + F_c.
    std::mt19937_64 rng(3);
    for (std::size_t n = 1; n <= 5; ++n) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto config = base_config(n, random_monotone_utilities(n, rng));
            const auto tree = build_pruned_tree(config);
            const auto result = backwards_induction(tree);
            for (std::size_t k = 1; k <= n; ++k) {
                const auto at = tree.index.at({NodeKind::SellerSend, k, 0});
                const GameNode& node = tree.nodes[at];
                const auto withhold =
                    std::find_if(node.edges.begin(), node.edges.end(), [](const auto& e) {
                        return e.action == GameAction::Withhold;
                    });
                REQUIRE(withhold != node.edges.end());
                const Rational value = result.values[withhold->child].second;
                const Rational bound = Rational(config.price) *
                                           Rational(static_cast<long long>(n - k + 1),
                                                    static_cast<long long>(n)) +
                                       Rational(config.seller_cost);
                CHECK(value <= bound);
            }
        }
    }
}

TEST_CASE("price-sized deposits hold up across random profiles") {
    CHECK(deposits_guarantee_honesty(4, 100, 120, 50, 200));
    for (std::size_t n = 1; n <= 6; ++n) {
        CHECK(deposits_guarantee_honesty(n, 100, 120, 50, 25));
    }
    CHECK_THROWS_AS(deposits_guarantee_honesty(4, 130, 120, 50, 10), GameError);  // F_p > F_v
}

TEST_CASE("deposit bound tightness witness") {
    // With D_S < F_c - F_p/n the seller prefers withholding the last chunk.
    const std::size_t n = 4;
    auto config = base_config(n, entire_file_utilities(n), 0, 100);
    REQUIRE(Rational(config.seller_deposit) <
            Rational(config.seller_cost) - Rational(config.price, static_cast<Money>(n)));
    const auto result = backwards_induction(build_pruned_tree(config));
    CHECK_FALSE(result.honest_is_spe);
}

TEST_CASE("full tree covers the false-ack rows") {
    const auto config = base_config(1, linear_utilities(1));

    SUBCASE("buyer cannot prove: the seller takes everything") {
        const auto tree = build_full_tree(config, false);
        const GameNode* leaf = find_leaf(tree, TransitionKind::FalseAckBuyerTimeout, 1);
        REQUIRE(leaf != nullptr);
        // D_S + D_B + F_p to the seller plus its remaining exclusivity value.
        CHECK(leaf->seller_payoff ==
              Rational(100 + 100 + 100) + Rational(config.seller_cost));
        CHECK(leaf->buyer_payoff == 0);
        CHECK(find_leaf(tree, TransitionKind::FalseAckBuyerProved, 1) == nullptr);
    }

    SUBCASE("buyer can prove: split at k/n") {
        const auto tree = build_full_tree(config, true);
        const GameNode* leaf = find_leaf(tree, TransitionKind::FalseAckBuyerProved, 1);
        REQUIRE(leaf != nullptr);
        CHECK(leaf->buyer_payoff == Rational(100));  // k/n * F_p with k=n=1
        CHECK(leaf->seller_payoff == Rational(0) + Rational(config.seller_cost));
    }

    CHECK_THROWS_AS(build_full_tree(base_config(7, linear_utilities(7)), false), GameError);
}

TEST_CASE("pruned and full tree agree on shared nodes when the buyer cannot prove") {
    std::mt19937_64 rng(9);
    for (std::size_t n = 1; n <= 3; ++n) {
        for (int trial = 0; trial < 10; ++trial) {
            const auto config = base_config(n, random_monotone_utilities(n, rng));
            const auto pruned = build_pruned_tree(config);
            const auto full = build_full_tree(config, false);
            const auto pruned_result = backwards_induction(pruned);
            const auto full_result = backwards_induction(full);
            CHECK(pruned_result.honest_is_spe == full_result.honest_is_spe);
            for (const auto& [key, id] : pruned.index) {
                const auto it = full.index.find(key);
                REQUIRE(it != full.index.end());
                CHECK(pruned_result.values[id] == full_result.values[it->second]);
            }
        }
    }
}

TEST_CASE("false acknowledgment never helps the buyer") {
    std::mt19937_64 rng(13);
    for (std::size_t n = 1; n <= 4; ++n) {
        for (int trial = 0; trial < 10; ++trial) {
            const auto config = base_config(n, random_monotone_utilities(n, rng));
            const auto tree = build_full_tree(config, false);
            const auto result = backwards_induction(tree);
            for (const auto& [key, id] : tree.index) {
                const auto [kind, k, missed] = key;
                if (kind != NodeKind::BuyerAfterNoSend) continue;
                const GameNode& node = tree.nodes[id];
                Rational false_ack_value;
                Rational best_other(-1'000'000);
                for (const auto& edge : node.edges) {
                    const Rational v = result.values[edge.child].first;
                    if (edge.action == GameAction::FalseAck) {
                        false_ack_value = v;
                    } else {
                        best_other = std::max(best_other, v);
                    }
                }
                // Lying is never selected and never beats the alternatives;
                // at k = 1 the report path also pays zero, an exact tie.
                CHECK(false_ack_value <= best_other);
                if (k >= 2) CHECK(false_ack_value < best_other);
                CHECK(*result.best_action[id] != GameAction::FalseAck);
            }
        }
    }
}

TEST_CASE("equilibrium value is monotone in the deposits") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 1 + rng() % 5;
        const auto profile = random_monotone_utilities(n, rng);
        Rational last_buyer(-1'000'000);
        for (Money db : {0, 40, 80, 120, 160}) {
            const auto result = backwards_induction(
                build_pruned_tree(base_config(n, profile, 100, db)));
            CHECK(result.buyer_root_value >= last_buyer);
            last_buyer = result.buyer_root_value;
        }
        Rational last_seller(-1'000'000);
        for (Money ds : {0, 40, 80, 120, 160}) {
            const auto result = backwards_induction(
                build_pruned_tree(base_config(n, profile, ds, 100)));
            CHECK(result.seller_root_value >= last_seller);
            last_seller = result.seller_root_value;
        }
    }
}

TEST_CASE("economic security predicates") {
    auto safe = economic_security(1000, 500, 0, 0);
    CHECK(safe.single_chunk_safe);
    CHECK(safe.corrupt_chunk_safe);

    auto cheap = economic_security(400, 500, 0, 0);
    CHECK_FALSE(cheap.single_chunk_safe);
    CHECK_FALSE(cheap.corrupt_chunk_safe);

    auto partial = economic_security(600, 500, 200, 50);
    CHECK(partial.single_chunk_safe);
    CHECK_FALSE(partial.corrupt_chunk_safe);

    CHECK_THROWS_AS(economic_security(-1, 0, 0, 0), GameError);
}

TEST_CASE("equilibrium report renders every decision node") {
    const auto config = base_config(2, linear_utilities(2));
    const auto tree = build_pruned_tree(config);
    const auto result = backwards_induction(tree);
    const auto text = equilibrium_report(tree, result);
    CHECK(text.find("S_2 actor=seller best=send") != std::string::npos);
    CHECK(text.find("B'_1 actor=buyer best=ack") != std::string::npos);
    CHECK(text.find("honest_is_spe=true") != std::string::npos);
}
