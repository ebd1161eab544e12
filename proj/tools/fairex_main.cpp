#include "fairex/arbiter.hpp"
#include "fairex/game.hpp"
#include "fairex/hashchain.hpp"
#include "fairex/simnet.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using json = nlohmann::ordered_json;

std::string read_file_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    const std::string text = read_file_text(path);
    return {text.begin(), text.end()};
}

int cmd_verify(const std::string& path, const std::string& fingerprint_hex,
               std::size_t chunk_len) {
    const auto bytes = read_file_bytes(path);
    const auto expected = fairex::ChainingValue::from_hex(fingerprint_hex);
    const auto padded = fairex::pad_message(bytes);
    const auto plan = fairex::partition_chunks(padded.blocks.size(), chunk_len);
    const auto hashes = fairex::compute_intermediate_hashes(padded, plan);

    std::cout << "file: " << path << " (" << bytes.size() << " bytes, " << padded.blocks.size()
              << " blocks, " << plan.n << " chunks of " << chunk_len << ")\n";
    for (std::size_t k = 1; k <= plan.n; ++k) {
        std::cout << "H_" << k << "^c = " << hashes[k].to_hex() << "\n";
    }
    const bool ok = hashes.back() == expected;
    std::cout << "fingerprint " << (ok ? "matches" : "MISMATCH") << ": " << hashes.back().to_hex()
              << "\n";
    return ok ? 0 : 1;
}

int cmd_payout_table(std::size_t n, std::size_t k, fairex::Money fp, fairex::Money ds,
                     fairex::Money db) {
    using fairex::TransitionKind;
    const fairex::PayoutParams params{n, fp, ds, db};
    std::cout << "n=" << n << " k=" << k << " F_p=" << fp << " D_S=" << ds << " D_B=" << db
              << " escrow=" << fp + ds + db << "\n";
    for (auto kind : {TransitionKind::HonestComplete, TransitionKind::SentReportedProved,
                      TransitionKind::SentReportedTimeout, TransitionKind::SentBuyerTimeout,
                      TransitionKind::UnsentReportedProved, TransitionKind::UnsentReportedTimeout,
                      TransitionKind::UnsentBuyerTimeout, TransitionKind::FalseAckBuyerTimeout,
                      TransitionKind::FalseAckBuyerProved}) {
        const fairex::Transition t{kind, kind == TransitionKind::HonestComplete ? 0 : k};
        const auto payout = fairex::settle_table(t, params);
        std::cout << to_string(kind) << ": buyer=" << payout.to_buyer
                  << " seller=" << payout.to_seller << " burned=" << payout.burned << "\n";
    }
    return 0;
}

fairex::GameConfig game_config_from_json(const std::string& text) {
    const json j = json::parse(text);
    fairex::GameConfig config;
    config.n = j.at("n").get<std::size_t>();
    config.price = j.at("price").get<fairex::Money>();
    config.buyer_value = j.at("buyer_value").get<fairex::Money>();
    config.seller_cost = j.at("seller_cost").get<fairex::Money>();
    config.seller_deposit = j.value("seller_deposit", config.price);
    config.buyer_deposit = j.value("buyer_deposit", config.price);
    const auto kind = fairex::utility_kind_from_string(j.value("utility", "linear"));
    config.utilities = fairex::utilities_for(kind, config.n);
    return config;
}

int cmd_analyze(const std::string& path) {
    const auto config = game_config_from_json(read_file_text(path));
    const auto tree = fairex::build_pruned_tree(config);
    const auto result = fairex::backwards_induction(tree);
    std::cout << fairex::equilibrium_report(tree, result);
    if (!result.honest_is_spe && result.first_deviation) {
        const auto& node = tree.nodes[*result.first_deviation];
        std::cout << "first deviation at " << to_string(node.kind) << "_" << node.k << " by "
                  << to_string(node.actor) << ": " << to_string(*result.best_action[*result.first_deviation])
                  << "\n";
    }
    return result.honest_is_spe ? 0 : 1;
}

int run_exchange(const std::string& path, const std::string& trace_path, bool want_multiparty) {
    const auto scenario = fairex::scenario_from_json(read_file_text(path));
    if (want_multiparty && scenario.z < 2) {
        std::cerr << "multiparty expects a scenario with segments >= 2\n";
        return 2;
    }
    const auto trace = fairex::run_scenario(scenario);
    for (const auto& outcome : trace.outcomes) {
        std::cout << "segment " << outcome.segment << ": " << to_string(outcome.transition.kind);
        if (outcome.transition.kind != fairex::TransitionKind::HonestComplete) {
            std::cout << " (k=" << outcome.transition.k << ")";
        }
        std::cout << " buyer=" << outcome.payout.to_buyer << " seller=" << outcome.payout.to_seller
                  << " burned=" << outcome.payout.burned << " tx=" << outcome.tx_count << "\n";
    }
    std::cout << "total: buyer=" << trace.total.to_buyer << " seller=" << trace.total.to_seller
              << " burned=" << trace.total.burned << " tx_count=" << trace.tx_count
              << " buyer_tx_count=" << trace.buyer_tx_count << "\n";
    if (trace.completed) {
        std::cout << "transfer completed, reassembled fingerprint " << trace.checksum << "\n";
    } else {
        std::cout << "transfer did not complete\n";
    }
    if (!trace_path.empty()) {
        std::ofstream out(trace_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + trace_path);
        out << fairex::trace_to_jsonl(trace);
        std::cout << "trace written to " << trace_path << "\n";
    }
    return trace.outcomes.empty() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fair data exchange toolkit"};
    app.require_subcommand(1);

    auto* verify = app.add_subcommand("verify", "check a file against a fingerprint");
    std::string verify_path, verify_fp;
    std::size_t verify_cl = 4;
    verify->add_option("file", verify_path, "file to hash")->required();
    verify->add_option("fingerprint", verify_fp, "expected fingerprint, lowercase hex")->required();
    verify->add_option("--chunk-len", verify_cl, "blocks per chunk");

    auto* exchange = app.add_subcommand("exchange", "simulate a single-seller exchange");
    std::string exchange_path, exchange_trace;
    exchange->add_option("scenario", exchange_path, "scenario JSON file")->required();
    exchange->add_option("--trace", exchange_trace, "write the machine trace here");

    auto* multiparty = app.add_subcommand("multiparty", "simulate a multi-seller exchange");
    std::string multi_path, multi_trace;
    multiparty->add_option("scenario", multi_path, "scenario JSON file")->required();
    multiparty->add_option("--trace", multi_trace, "write the machine trace here");

    auto* analyze = app.add_subcommand("analyze", "solve the exchange game for a config");
    std::string analyze_path;
    analyze->add_option("config", analyze_path, "game config JSON file")->required();

    auto* table = app.add_subcommand("payout-table", "print the settlement table rows");
    std::size_t tbl_n = 4, tbl_k = 2;
    fairex::Money tbl_fp = 100, tbl_ds = 100, tbl_db = 100;
    table->add_option("--n", tbl_n, "chunk count");
    table->add_option("--k", tbl_k, "disputed chunk");
    table->add_option("--fp", tbl_fp, "file price");
    table->add_option("--ds", tbl_ds, "seller deposit");
    table->add_option("--db", tbl_db, "buyer deposit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*verify) return cmd_verify(verify_path, verify_fp, verify_cl);
        if (*exchange) return run_exchange(exchange_path, exchange_trace, false);
        if (*multiparty) return run_exchange(multi_path, multi_trace, true);
        if (*analyze) return cmd_analyze(analyze_path);
        if (*table) return cmd_payout_table(tbl_n, tbl_k, tbl_fp, tbl_ds, tbl_db);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
