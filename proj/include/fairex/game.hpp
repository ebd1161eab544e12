#pragma once

#include "fairex/arbiter.hpp"

#include <map>
#include <optional>
#include <random>
#include <tuple>

namespace fairex {

struct GameError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Relative utility curves g^B and g^S over 0..n transferred chunks.
struct UtilityProfile {
    std::size_t n = 0;
    std::vector<Rational> buyer;   // non-decreasing, g^B(0)=0, g^B(n)=1
    std::vector<Rational> seller;  // non-increasing, g^S(0)=1, g^S(n)=0
};

void validate_profile(const UtilityProfile& profile);

UtilityProfile linear_utilities(std::size_t n);
/// File worthless until complete (encrypted/compressed data).
UtilityProfile entire_file_utilities(std::size_t n);
/// All value in the first transmitted chunk (the file tail).
UtilityProfile first_chunk_utilities(std::size_t n);
UtilityProfile random_monotone_utilities(std::size_t n, std::mt19937_64& rng);

struct GameConfig {
    std::size_t n = 0;
    Money price = 0;           // F_p
    Money buyer_value = 0;     // F_v
    Money seller_cost = 0;     // F_c
    Money seller_deposit = 0;  // D_S
    Money buyer_deposit = 0;   // D_B
    UtilityProfile utilities;
};

/// Enforces F_c <= F_p <= F_v; a trade outside that range never forms.
void validate_config(const GameConfig& config);

enum class NodeKind {
    SellerSend,           // S_k: send or withhold chunk k
    BuyerAfterSend,       // B'_k: chunk k arrived
    BuyerAfterNoSend,     // B''_k: chunk k withheld
    SellerDisputeSent,    // seller answers a report filed after sending
    SellerDisputeUnsent,  // seller answers a report filed after withholding
    SellerFalseAckChoice, // seller saw an ack for an undelivered chunk
    BuyerFalseAckProve,   // buyer challenged over the false ack
    Terminal,
};

enum class GameAction {
    Send,
    Withhold,
    Ack,
    Report,
    StaySilent,
    Prove,
    Concede,
    FalseAck,
    ReportFalseAck,
    IgnoreFalseAck,
};

const char* to_string(NodeKind k);
const char* to_string(GameAction a);

struct GameNode {
    NodeKind kind = NodeKind::Terminal;
    Party actor = Party::Seller;
    std::size_t k = 0;     // chunk index in play
    std::size_t missed = 0;  // falsely acknowledged chunks so far (full tree)

    struct Edge {
        GameAction action;
        bool honest;  // the protocol-following move at this node
        std::size_t child;
    };
    std::vector<Edge> edges;  // empty for terminals

    // Terminal payload: table row plus total payoffs (contract + utility).
    Transition transition;
    Rational buyer_payoff;
    Rational seller_payoff;
};

struct GameTree {
    GameConfig config;
    std::vector<GameNode> nodes;  // children precede parents
    std::size_t root = 0;
    // Decision-node lookup by (kind, k, missed).
    std::map<std::tuple<NodeKind, std::size_t, std::size_t>, std::size_t> index;
};

/// Linear-size tree without the false-acknowledgment branch.
GameTree build_pruned_tree(const GameConfig& config);

/// Tree including the false-ack branch; buyer_can_prove models a buyer who
/// already possesses the disputed block. Guarded to n <= 6.
GameTree build_full_tree(const GameConfig& config, bool buyer_can_prove);

struct EquilibriumResult {
    bool honest_is_spe = false;
    Rational buyer_root_value;
    Rational seller_root_value;
    std::vector<std::pair<Rational, Rational>> values;  // per node (buyer, seller)
    std::vector<std::optional<GameAction>> best_action;  // per decision node
    std::optional<std::size_t> first_deviation;  // honest-path node whose best move deviates
};

/// Exact-rational backwards induction; ties break toward the honest action,
/// then toward the first-listed edge.
EquilibriumResult backwards_induction(const GameTree& tree);

/// Renders per-node actions and values for reporting.
std::string equilibrium_report(const GameTree& tree, const EquilibriumResult& result);

/// Samples `trials` random monotone profiles plus the two extremes, sets
/// D_S = D_B = F_p, and checks honest behavior is the equilibrium for all.
bool deposits_guarantee_honesty(std::size_t n, Money price, Money buyer_value, Money seller_cost, int trials,
                    std::uint64_t seed = 1);

struct EconomicSecurity {
    bool single_chunk_safe = false;   // crafted one-chunk second preimage unprofitable
    bool corrupt_chunk_safe = false;  // corrupting one chunk unprofitable
};

EconomicSecurity economic_security(Money cost_preimage, Money price, Money corruption_gain,
                                   Money seller_cost);

}  // namespace fairex
