#include "fairex/game.hpp"

#include <algorithm>
#include <sstream>

namespace fairex {

const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::SellerSend: return "S";
        case NodeKind::BuyerAfterSend: return "B'";
        case NodeKind::BuyerAfterNoSend: return "B''";
        case NodeKind::SellerDisputeSent: return "D'";
        case NodeKind::SellerDisputeUnsent: return "D''";
        case NodeKind::SellerFalseAckChoice: return "SR";
        case NodeKind::BuyerFalseAckProve: return "BP";
        case NodeKind::Terminal: return "leaf";
    }
    return "?";
}

const char* to_string(GameAction a) {
    switch (a) {
        case GameAction::Send: return "send";
        case GameAction::Withhold: return "withhold";
        case GameAction::Ack: return "ack";
        case GameAction::Report: return "report";
        case GameAction::StaySilent: return "stay-silent";
        case GameAction::Prove: return "prove";
        case GameAction::Concede: return "concede";
        case GameAction::FalseAck: return "false-ack";
        case GameAction::ReportFalseAck: return "report-false-ack";
        case GameAction::IgnoreFalseAck: return "ignore-false-ack";
    }
    return "?";
}

void validate_profile(const UtilityProfile& profile) {
    if (profile.buyer.size() != profile.n + 1 || profile.seller.size() != profile.n + 1) {
        throw GameError("utility profile must cover 0..n");
    }
    if (profile.buyer.front() != 0 || profile.buyer.back() != 1) {
        throw GameError("buyer utility must run from 0 to 1");
    }
    if (profile.seller.front() != 1 || profile.seller.back() != 0) {
        throw GameError("seller utility must run from 1 to 0");
    }
    for (std::size_t i = 0; i + 1 <= profile.n; ++i) {
        if (profile.buyer[i] > profile.buyer[i + 1]) throw GameError("buyer utility not monotone");
        if (profile.seller[i] < profile.seller[i + 1]) {
            throw GameError("seller utility not monotone");
        }
        if (profile.buyer[i] < 0 || profile.buyer[i] > 1 || profile.seller[i] < 0 ||
            profile.seller[i] > 1) {
            throw GameError("utility outside [0,1]");
        }
    }
}

UtilityProfile linear_utilities(std::size_t n) {
    UtilityProfile p;
    p.n = n;
    for (std::size_t i = 0; i <= n; ++i) {
        p.buyer.emplace_back(static_cast<long long>(i), static_cast<long long>(n));
        p.seller.emplace_back(static_cast<long long>(n - i), static_cast<long long>(n));
    }
    return p;
}

UtilityProfile entire_file_utilities(std::size_t n) {
    UtilityProfile p;
    p.n = n;
    for (std::size_t i = 0; i <= n; ++i) {
        p.buyer.emplace_back(i == n ? 1 : 0);
        p.seller.emplace_back(i == n ? 0 : 1);
    }
    return p;
}

UtilityProfile first_chunk_utilities(std::size_t n) {
    UtilityProfile p;
    p.n = n;
    for (std::size_t i = 0; i <= n; ++i) {
        p.buyer.emplace_back(i >= 1 ? 1 : 0);
        p.seller.emplace_back(i >= 1 ? 0 : 1);
    }
    return p;
}

UtilityProfile random_monotone_utilities(std::size_t n, std::mt19937_64& rng) {
    constexpr long long kScale = 1000;
    std::uniform_int_distribution<long long> dist(0, kScale);
    std::vector<long long> b(n + 1), s(n + 1);
    for (std::size_t i = 1; i < n; ++i) {
        b[i] = dist(rng);
        s[i] = dist(rng);
    }
    b[0] = 0;
    b[n] = kScale;
    s[0] = kScale;
    s[n] = 0;
    std::sort(b.begin(), b.end());
    std::sort(s.begin(), s.end(), std::greater<>());
    UtilityProfile p;
    p.n = n;
    for (std::size_t i = 0; i <= n; ++i) {
        p.buyer.emplace_back(b[i], kScale);
        p.seller.emplace_back(s[i], kScale);
    }
    return p;
}

void validate_config(const GameConfig& config) {
    if (config.n == 0) throw GameError("game needs at least one chunk");
    if (!(config.seller_cost <= config.price && config.price <= config.buyer_value)) {
        throw GameError("trade requires F_c <= F_p <= F_v");
    }
    if (config.seller_deposit < 0 || config.buyer_deposit < 0) {
        throw GameError("deposits must be non-negative");
    }
    if (config.utilities.n != config.n) throw GameError("utility profile size mismatch");
    validate_profile(config.utilities);
}

namespace {

PayoutParams contract_params(const GameConfig& c) {
    return {c.n, c.price, c.seller_deposit, c.buyer_deposit};
}

class TreeBuilder {
public:
    TreeBuilder(const GameConfig& config, bool with_false_ack, bool buyer_can_prove)
        : config_(config), with_false_ack_(with_false_ack), buyer_can_prove_(buyer_can_prove) {
        tree_.config = config;
    }

    GameTree build() {
        tree_.root = seller_node(config_.n, 0);
        return std::move(tree_);
    }

private:
    std::size_t add_node(GameNode node) {
        tree_.nodes.push_back(std::move(node));
        const std::size_t id = tree_.nodes.size() - 1;
        const GameNode& n = tree_.nodes[id];
        if (n.kind != NodeKind::Terminal) {
            tree_.index[{n.kind, n.k, n.missed}] = id;
        }
        return id;
    }

    std::size_t terminal(TransitionKind kind, std::size_t k, std::size_t missed) {
        GameNode node;
        node.kind = NodeKind::Terminal;
        node.k = k;
        node.missed = missed;
        node.transition = Transition{kind, kind == TransitionKind::HonestComplete ? 0 : k};
        const auto [buyer_sc, seller_sc] = settle_rational(node.transition, contract_params(config_));
        const std::size_t table_t = transferred_chunks(node.transition, config_.n);
        if (missed > table_t) throw GameError("missed chunks exceed transferred chunks");
        const std::size_t t = table_t - missed;  // chunks the buyer actually holds
        node.buyer_payoff = buyer_sc + config_.utilities.buyer[t] * Rational(config_.buyer_value);
        node.seller_payoff =
            seller_sc + config_.utilities.seller[t] * Rational(config_.seller_cost);
        return add_node(std::move(node));
    }

    std::size_t memoized(NodeKind kind, std::size_t k, std::size_t missed,
                         std::size_t (TreeBuilder::*make)(std::size_t, std::size_t)) {
        auto it = memo_.find({kind, k, missed});
        if (it != memo_.end()) return it->second;
        const std::size_t id = (this->*make)(k, missed);
        memo_[{kind, k, missed}] = id;
        return id;
    }

    std::size_t seller_node(std::size_t k, std::size_t missed) {
        return memoized(NodeKind::SellerSend, k, missed, &TreeBuilder::make_seller);
    }

    std::size_t make_seller(std::size_t k, std::size_t missed) {
        const std::size_t sent = buyer_after_send(k, missed);
        const std::size_t withheld = buyer_after_no_send(k, missed);
        GameNode node;
        node.kind = NodeKind::SellerSend;
        node.actor = Party::Seller;
        node.k = k;
        node.missed = missed;
        node.edges = {{GameAction::Send, true, sent}, {GameAction::Withhold, false, withheld}};
        return add_node(std::move(node));
    }

    std::size_t buyer_after_send(std::size_t k, std::size_t missed) {
        return memoized(NodeKind::BuyerAfterSend, k, missed, &TreeBuilder::make_buyer_after_send);
    }

    std::size_t make_buyer_after_send(std::size_t k, std::size_t missed) {
        const std::size_t next =
            k == 1 ? terminal(TransitionKind::HonestComplete, 0, missed) : seller_node(k - 1, missed);
        const std::size_t dispute = dispute_node(NodeKind::SellerDisputeSent, k, missed);
        const std::size_t silent = terminal(TransitionKind::SentBuyerTimeout, k, missed);
        GameNode node;
        node.kind = NodeKind::BuyerAfterSend;
        node.actor = Party::Buyer;
        node.k = k;
        node.missed = missed;
        node.edges = {{GameAction::Ack, true, next},
                      {GameAction::Report, false, dispute},
                      {GameAction::StaySilent, false, silent}};
        return add_node(std::move(node));
    }

    std::size_t buyer_after_no_send(std::size_t k, std::size_t missed) {
        return memoized(NodeKind::BuyerAfterNoSend, k, missed,
                        &TreeBuilder::make_buyer_after_no_send);
    }

    std::size_t make_buyer_after_no_send(std::size_t k, std::size_t missed) {
        const std::size_t dispute = dispute_node(NodeKind::SellerDisputeUnsent, k, missed);
        const std::size_t silent = terminal(TransitionKind::UnsentBuyerTimeout, k, missed);
        GameNode node;
        node.kind = NodeKind::BuyerAfterNoSend;
        node.actor = Party::Buyer;
        node.k = k;
        node.missed = missed;
        node.edges = {{GameAction::Report, false, dispute},
                      {GameAction::StaySilent, false, silent}};
        if (with_false_ack_) {
            node.edges.push_back({GameAction::FalseAck, false, false_ack_node(k, missed)});
        }
        return add_node(std::move(node));
    }

    std::size_t dispute_node(NodeKind kind, std::size_t k, std::size_t missed) {
        auto it = memo_.find({kind, k, missed});
        if (it != memo_.end()) return it->second;
        const bool sent = kind == NodeKind::SellerDisputeSent;
        const std::size_t proved = terminal(sent ? TransitionKind::SentReportedProved
                                                 : TransitionKind::UnsentReportedProved,
                                            k, missed);
        const std::size_t conceded = terminal(sent ? TransitionKind::SentReportedTimeout
                                                   : TransitionKind::UnsentReportedTimeout,
                                              k, missed);
        GameNode node;
        node.kind = kind;
        node.actor = Party::Seller;
        node.k = k;
        node.missed = missed;
        node.edges = {{GameAction::Prove, false, proved}, {GameAction::Concede, false, conceded}};
        const std::size_t id = add_node(std::move(node));
        memo_[{kind, k, missed}] = id;
        return id;
    }

    std::size_t false_ack_node(std::size_t k, std::size_t missed) {
        auto it = memo_.find({NodeKind::SellerFalseAckChoice, k, missed});
        if (it != memo_.end()) return it->second;
        // The chunk was never delivered; the ack covers it anyway.
        const std::size_t challenged = buyer_prove_node(k, missed);
        const std::size_t ignored = k == 1
                                        ? terminal(TransitionKind::HonestComplete, 0, missed + 1)
                                        : seller_node(k - 1, missed + 1);
        GameNode node;
        node.kind = NodeKind::SellerFalseAckChoice;
        node.actor = Party::Seller;
        node.k = k;
        node.missed = missed;
        node.edges = {{GameAction::ReportFalseAck, false, challenged},
                      {GameAction::IgnoreFalseAck, false, ignored}};
        const std::size_t id = add_node(std::move(node));
        memo_[{NodeKind::SellerFalseAckChoice, k, missed}] = id;
        return id;
    }

    std::size_t buyer_prove_node(std::size_t k, std::size_t missed) {
        auto it = memo_.find({NodeKind::BuyerFalseAckProve, k, missed});
        if (it != memo_.end()) return it->second;
        const std::size_t silent = terminal(TransitionKind::FalseAckBuyerTimeout, k, missed);
        GameNode node;
        node.kind = NodeKind::BuyerFalseAckProve;
        node.actor = Party::Buyer;
        node.k = k;
        node.missed = missed;
        if (buyer_can_prove_) {
            node.edges.push_back(
                {GameAction::Prove, false, terminal(TransitionKind::FalseAckBuyerProved, k, missed)});
        }
        node.edges.push_back({GameAction::StaySilent, false, silent});
        const std::size_t id = add_node(std::move(node));
        memo_[{NodeKind::BuyerFalseAckProve, k, missed}] = id;
        return id;
    }

    GameConfig config_;
    bool with_false_ack_;
    bool buyer_can_prove_;
    GameTree tree_;
    std::map<std::tuple<NodeKind, std::size_t, std::size_t>, std::size_t> memo_;
};

}  // namespace

GameTree build_pruned_tree(const GameConfig& config) {
    validate_config(config);
    return TreeBuilder(config, false, false).build();
}

GameTree build_full_tree(const GameConfig& config, bool buyer_can_prove) {
    validate_config(config);
    if (config.n > 6) throw GameError("full tree guarded to n <= 6");
    return TreeBuilder(config, true, buyer_can_prove).build();
}

EquilibriumResult backwards_induction(const GameTree& tree) {
    EquilibriumResult result;
    result.values.resize(tree.nodes.size());
    result.best_action.resize(tree.nodes.size());

    // Children precede parents, so one forward pass folds the tree.
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const GameNode& node = tree.nodes[id];
        if (node.kind == NodeKind::Terminal) {
            result.values[id] = {node.buyer_payoff, node.seller_payoff};
            continue;
        }
        if (node.edges.empty()) throw GameError("decision node without moves");
        const GameNode::Edge* best = nullptr;
        for (const auto& edge : node.edges) {
            if (!best) {
                best = &edge;
                continue;
            }
            const Rational& candidate = node.actor == Party::Buyer
                                            ? result.values[edge.child].first
                                            : result.values[edge.child].second;
            const Rational& incumbent = node.actor == Party::Buyer
                                            ? result.values[best->child].first
                                            : result.values[best->child].second;
            if (candidate > incumbent || (candidate == incumbent && edge.honest)) {
                best = &edge;
            }
        }
        result.values[id] = result.values[best->child];
        result.best_action[id] = best->action;
    }

    result.buyer_root_value = result.values[tree.root].first;
    result.seller_root_value = result.values[tree.root].second;

    // Honest play is the equilibrium iff following best actions from the
    // root walks the send/ack ladder down to the clean completion leaf.
    result.honest_is_spe = true;
    std::size_t at = tree.root;
    while (tree.nodes[at].kind != NodeKind::Terminal) {
        const GameNode& node = tree.nodes[at];
        const GameAction chosen = *result.best_action[at];
        const GameNode::Edge* taken = nullptr;
        bool has_honest = false;
        for (const auto& edge : node.edges) {
            if (edge.action == chosen) taken = &edge;
            has_honest = has_honest || edge.honest;
        }
        if (has_honest && !taken->honest) {
            result.honest_is_spe = false;
            result.first_deviation = at;
            break;
        }
        if (!has_honest) break;  // off the protocol path; nothing honest to follow
        at = taken->child;
    }
    if (result.honest_is_spe &&
        !(tree.nodes[at].kind == NodeKind::Terminal &&
          tree.nodes[at].transition.kind == TransitionKind::HonestComplete)) {
        result.honest_is_spe = false;
        result.first_deviation = at;
    }
    return result;
}

std::string equilibrium_report(const GameTree& tree, const EquilibriumResult& result) {
    std::ostringstream out;
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const GameNode& node = tree.nodes[id];
        if (node.kind == NodeKind::Terminal) continue;
        out << to_string(node.kind) << "_" << node.k;
        if (node.missed > 0) out << "(missed=" << node.missed << ")";
        out << " actor=" << to_string(node.actor)
            << " best=" << to_string(*result.best_action[id])
            << " buyer=" << result.values[id].first.str()
            << " seller=" << result.values[id].second.str() << "\n";
    }
    out << "root buyer=" << result.buyer_root_value.str()
        << " seller=" << result.seller_root_value.str() << "\n";
    out << "honest_is_spe=" << (result.honest_is_spe ? "true" : "false") << "\n";
    return out.str();
}

bool deposits_guarantee_honesty(std::size_t n, Money price, Money buyer_value, Money seller_cost, int trials,
                    std::uint64_t seed) {
    if (!(seller_cost <= price && price <= buyer_value)) {
        throw GameError("trade requires F_c <= F_p <= F_v");
    }
    std::mt19937_64 rng(seed);
    std::vector<UtilityProfile> profiles;
    profiles.push_back(entire_file_utilities(n));
    profiles.push_back(first_chunk_utilities(n));
    profiles.push_back(linear_utilities(n));
    for (int i = 0; i < trials; ++i) profiles.push_back(random_monotone_utilities(n, rng));

    for (const auto& profile : profiles) {
        GameConfig config{n, price, buyer_value, seller_cost, price, price, profile};
        const auto result = backwards_induction(build_pruned_tree(config));
        if (!result.honest_is_spe) return false;
    }
    return true;
}

EconomicSecurity economic_security(Money cost_preimage, Money price, Money corruption_gain,
                                   Money seller_cost) {
    if (cost_preimage < 0 || price < 0 || corruption_gain < 0 || seller_cost < 0) {
        throw GameError("economic security inputs must be non-negative");
    }
    EconomicSecurity out;
    out.single_chunk_safe = cost_preimage > price;
    out.corrupt_chunk_safe = cost_preimage > price + corruption_gain + seller_cost;
    return out;
}

}  // namespace fairex
