#include "fairex/simnet.hpp"

#include <json.hpp>

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

namespace fairex {

using json = nlohmann::ordered_json;

const char* to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::Honest: return "honest";
        case StrategyKind::AbortAtChunk: return "abort-at-chunk";
        case StrategyKind::WrongChunkAt: return "wrong-chunk-at";
        case StrategyKind::OutOfOrderAt: return "out-of-order-at";
        case StrategyKind::FalseReportAt: return "false-report-at";
        case StrategyKind::NoAckAt: return "no-ack-at";
        case StrategyKind::FalseAckAt: return "false-ack-at";
        case StrategyKind::SellerFalseReportAt: return "seller-false-report-at";
        case StrategyKind::OfflineAt: return "offline-at";
    }
    return "?";
}

StrategyKind strategy_kind_from_string(const std::string& name) {
    for (auto kind : {StrategyKind::Honest, StrategyKind::AbortAtChunk, StrategyKind::WrongChunkAt,
                      StrategyKind::OutOfOrderAt, StrategyKind::FalseReportAt, StrategyKind::NoAckAt,
                      StrategyKind::FalseAckAt, StrategyKind::SellerFalseReportAt,
                      StrategyKind::OfflineAt}) {
        if (name == to_string(kind)) return kind;
    }
    throw SimError("unknown strategy: " + name);
}

const char* to_string(UtilityKind k) {
    switch (k) {
        case UtilityKind::Linear: return "linear";
        case UtilityKind::EntireFile: return "entire-file";
        case UtilityKind::FirstChunk: return "first-chunk";
    }
    return "?";
}

UtilityKind utility_kind_from_string(const std::string& name) {
    for (auto kind : {UtilityKind::Linear, UtilityKind::EntireFile, UtilityKind::FirstChunk}) {
        if (name == to_string(kind)) return kind;
    }
    throw SimError("unknown utility profile: " + name);
}

UtilityProfile utilities_for(UtilityKind kind, std::size_t n) {
    switch (kind) {
        case UtilityKind::Linear: return linear_utilities(n);
        case UtilityKind::EntireFile: return entire_file_utilities(n);
        case UtilityKind::FirstChunk: return first_chunk_utilities(n);
    }
    throw SimError("unknown utility profile");
}

void validate_scenario(const Scenario& scenario) {
    if (scenario.file_bytes.empty() && scenario.file_len == 0) {
        throw SimError("scenario needs file bytes or a generated length");
    }
    if (scenario.chunk_len == 0) throw SimError("chunk_len must be positive");
    if (scenario.z == 0) throw SimError("segment count must be positive");
    if (scenario.price <= 0) throw SimError("price must be positive");
    if (scenario.max_timeout < 5) throw SimError("max_timeout too small for message round trips");
    if (!scenario.seller_strategies.empty() && scenario.seller_strategies.size() != scenario.z) {
        throw SimError("one seller strategy per seller");
    }
}

std::vector<std::uint8_t> scenario_file(const Scenario& scenario) {
    if (!scenario.file_bytes.empty()) return scenario.file_bytes;
    std::mt19937_64 rng(scenario.file_seed);
    std::vector<std::uint8_t> bytes(scenario.file_len);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    return bytes;
}

namespace {

Money default_deposit(Money configured, Money price) {
    return configured < 0 ? price : configured;
}

std::string strategy_label(Party party, const Strategy& s) {
    std::ostringstream out;
    out << to_string(party) << ":" << to_string(s.kind);
    if (s.kind == StrategyKind::OfflineAt) {
        out << "(t=" << s.at_time << ")";
    } else if (s.kind != StrategyKind::Honest) {
        out << "(k=" << s.k << ")";
    }
    return out.str();
}

json strategy_to_json(const Strategy& s) {
    json j;
    j["kind"] = to_string(s.kind);
    if (s.kind == StrategyKind::OfflineAt) {
        j["time"] = s.at_time;
    } else if (s.kind != StrategyKind::Honest) {
        j["k"] = s.k;
    }
    return j;
}

Strategy strategy_from_json(const json& j) {
    Strategy s;
    s.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("k")) s.k = j.at("k").get<std::size_t>();
    if (j.contains("time")) s.at_time = j.at("time").get<Tick>();
    return s;
}

std::string bytes_to_hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

std::vector<std::uint8_t> hex_to_bytes(const std::string& hex) {
    if (hex.size() % 2 != 0) throw SimError("hex string has odd length");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw SimError("invalid hex digit");
    };
    std::vector<std::uint8_t> out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    }
    return out;
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
    const json j = json::parse(text);
    Scenario s;
    const auto& file = j.at("file");
    if (file.contains("hex")) {
        s.file_bytes = hex_to_bytes(file.at("hex").get<std::string>());
    } else {
        s.file_seed = file.at("seed").get<std::uint64_t>();
        s.file_len = file.at("length").get<std::size_t>();
    }
    const auto& geometry = j.at("geometry");
    s.chunk_len = geometry.at("chunk_len").get<std::size_t>();
    if (geometry.contains("segments")) s.z = geometry.at("segments").get<std::size_t>();
    const auto& econ = j.at("economics");
    s.price = econ.at("price").get<Money>();
    s.buyer_value = econ.value("buyer_value", s.price);
    s.seller_cost = econ.value("seller_cost", Money{0});
    s.seller_deposit = econ.value("seller_deposit", Money{-1});
    s.buyer_deposit = econ.value("buyer_deposit", Money{-1});
    s.max_timeout = econ.value("max_timeout", kDefaultMaxTimeout);
    if (j.contains("buyer_strategy")) s.buyer_strategy = strategy_from_json(j.at("buyer_strategy"));
    if (j.contains("seller_strategies")) {
        for (const auto& item : j.at("seller_strategies")) {
            s.seller_strategies.push_back(strategy_from_json(item));
        }
    }
    if (j.contains("utility")) {
        s.utility = utility_kind_from_string(j.at("utility").get<std::string>());
    }
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    validate_scenario(s);
    return s;
}

std::string scenario_to_json(const Scenario& s) {
    json j;
    if (!s.file_bytes.empty()) {
        j["file"] = {{"hex", bytes_to_hex(s.file_bytes)}};
    } else {
        j["file"] = {{"seed", s.file_seed}, {"length", s.file_len}};
    }
    j["geometry"] = {{"chunk_len", s.chunk_len}, {"segments", s.z}};
    j["economics"] = {{"price", s.price},
                      {"buyer_value", s.buyer_value},
                      {"seller_cost", s.seller_cost},
                      {"seller_deposit", s.seller_deposit},
                      {"buyer_deposit", s.buyer_deposit},
                      {"max_timeout", s.max_timeout}};
    j["buyer_strategy"] = strategy_to_json(s.buyer_strategy);
    j["seller_strategies"] = json::array();
    for (const auto& strat : s.seller_strategies) {
        j["seller_strategies"].push_back(strategy_to_json(strat));
    }
    j["utility"] = to_string(s.utility);
    j["seed"] = s.seed;
    return j.dump(2);
}

std::string trace_to_jsonl(const Trace& trace) {
    std::ostringstream out;
    for (const auto& event : trace.events) {
        json j;
        j["t"] = event.time;
        j["actor"] = event.actor;
        j["action"] = event.action;
        j["detail"] = event.detail;
        j["session"] = event.session;
        out << j.dump() << "\n";
    }
    json summary;
    summary["payout"] = {{"buyer", trace.total.to_buyer},
                         {"seller", trace.total.to_seller},
                         {"burned", trace.total.burned}};
    summary["tx_count"] = trace.tx_count;
    summary["buyer_tx_count"] = trace.buyer_tx_count;
    summary["completed"] = trace.completed;
    summary["checksum"] = trace.checksum;
    summary["outcomes"] = json::array();
    for (const auto& o : trace.outcomes) {
        summary["outcomes"].push_back({{"segment", o.segment},
                                       {"transition", to_string(o.transition.kind)},
                                       {"k", o.transition.k},
                                       {"buyer", o.payout.to_buyer},
                                       {"seller", o.payout.to_seller},
                                       {"burned", o.payout.burned},
                                       {"tx", o.tx_count}});
    }
    json line;
    line["summary"] = summary;
    out << line.dump() << "\n";
    return out.str();
}

namespace {

/// One buyer/seller exchange over one segment (the whole file when z = 1).
struct ExchangeThread {
    std::size_t index = 0;  // 0-based segment index
    SellerContext seller_ctx;
    SellerState seller_state;
    BuyerContext buyer_ctx;
    BuyerState buyer_state;
    Strategy seller_strategy;
    KeyPair seller_key;
    SessionId session = 0;
    std::set<std::size_t> delivered;  // chunks actually sent intact, in order
    std::size_t withheld = 0;         // abort chunk, 0 when unused
    bool buyer_silent = false;
    bool transfer_done = false;
    std::optional<Acknowledgment> final_ack;  // buyer's A_1 for this segment
};

struct SimEvent {
    Tick time = 0;
    std::uint64_t seq = 0;
    enum class Kind {
        SellerStart,
        DeliverChunk,
        DeliverAck,
        NoticeSeller,
        NoticeBuyer,
        SellerPatience,
        BuyerPatience,
        DeadlineCheck,
        SellerFallback,
        BuyerRedeem,
    } kind = Kind::SellerStart;
    std::size_t thread = 0;
    TransferMsg msg;
    Acknowledgment ack;
    ArbiterNotice notice;
    std::size_t marker = 0;  // waiting-progress marker for patience events
};

struct EventOrder {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
        return std::tie(a.time, a.seq) > std::tie(b.time, b.seq);
    }
};

class Simulation {
public:
    explicit Simulation(const Scenario& scenario) : scenario_(scenario) {
        validate_scenario(scenario);
    }

    Trace run() {
        setup();
        while (!queue_.empty()) {
            SimEvent event = queue_.top();
            queue_.pop();
            process(event);
        }
        finish();
        return std::move(trace_);
    }

private:
    // --- plumbing ---------------------------------------------------------

    void schedule(SimEvent event, Tick time) {
        event.time = time;
        event.seq = next_seq_++;
        queue_.push(std::move(event));
    }

    void record(Tick time, const std::string& actor, const std::string& action,
                const std::string& detail, std::size_t thread) {
        const Session& s = arbiter_.session(threads_[thread].session);
        trace_.events.push_back({time, actor, action, detail, to_string(s.status)});
    }

    std::string seller_name(std::size_t thread) const {
        if (threads_.size() == 1) return "seller";
        return "seller-" + std::to_string(thread + 1);
    }

    bool party_online(Party party, std::size_t thread, Tick now) const {
        const Strategy& s = party == Party::Buyer ? scenario_.buyer_strategy
                                                  : threads_[thread].seller_strategy;
        return s.kind != StrategyKind::OfflineAt || now < s.at_time;
    }

    // --- setup ------------------------------------------------------------

    void setup() {
        const auto bytes = scenario_file(scenario_);
        padded_ = pad_message(bytes);
        buyer_key_ = KeyPair::from_seed(scenario_.seed * 2 + 1);

        const Money ds = default_deposit(scenario_.seller_deposit, scenario_.price);
        const Money db = default_deposit(scenario_.buyer_deposit, scenario_.price);
        const std::size_t z = scenario_.z;

        std::vector<std::size_t> sizes =
            segment_sizes(padded_.blocks.size(), z, scenario_.chunk_len);
        std::vector<ChainingValue> seg_hashes =
            segment_fingerprint(padded_, z, scenario_.chunk_len);

        std::vector<SellerOffer> offers;
        std::vector<SignedRequest> confirmations;
        std::size_t pos = 0;
        for (std::size_t q = 1; q <= z; ++q) {
            ExchangeThread th;
            th.index = q - 1;
            th.seller_key = KeyPair::from_seed(scenario_.seed * 100 + q);
            th.seller_strategy = scenario_.seller_strategies.empty()
                                     ? Strategy{}
                                     : scenario_.seller_strategies[q - 1];

            ExchangeParams params;
            params.fingerprint = seg_hashes[q - 1];
            params.chain_start = q == 1 ? iv() : seg_hashes[q - 2];
            params.m = sizes[q - 1];
            params.chunk_len = scenario_.chunk_len;
            params.n = (params.m + scenario_.chunk_len - 1) / scenario_.chunk_len;
            params.price = scenario_.price / static_cast<Money>(z);
            params.seller_deposit = ds / static_cast<Money>(z);
            params.buyer_deposit = db / static_cast<Money>(z);
            params.max_timeout = scenario_.max_timeout;
            params.buyer_key = buyer_key_.pub;
            params.seller_key = th.seller_key.pub;

            std::vector<Block> blocks(padded_.blocks.begin() + static_cast<std::ptrdiff_t>(pos),
                                      padded_.blocks.begin() +
                                          static_cast<std::ptrdiff_t>(pos + sizes[q - 1]));
            pos += sizes[q - 1];
            th.seller_ctx = make_seller_context(params, std::move(blocks));
            th.buyer_ctx = make_buyer_context(params, buyer_key_);
            th.buyer_state = make_buyer_state(th.buyer_ctx);
            threads_.push_back(std::move(th));
            offers.push_back({threads_.back().seller_key.pub, q, threads_.back().seller_ctx.hashes});
        }

        if (z == 1) {
            ExchangeThread& th = threads_[0];
            th.session = arbiter_.set_parameters_and_pay(th.seller_ctx.params, ds,
                                                         th.seller_ctx.hashes, 0);
            record(0, "seller", "set-parameters-and-pay",
                   describe(arbiter_.session(th.session)), 0);
            arbiter_.accept_parameters_and_pay(th.session, scenario_.price + db, 0);
            buyer_calls_ += 1;
            record(0, "buyer", "accept-parameters-and-pay",
                   describe(arbiter_.session(th.session)), 0);
        } else {
            if (scenario_.price % static_cast<Money>(z) != 0 ||
                ds % static_cast<Money>(z) != 0 || db % static_cast<Money>(z) != 0) {
                throw SimError("multiparty price and deposits must divide by z");
            }
            for (std::size_t q = 1; q <= z; ++q) {
                arbiter_.credit(threads_[q - 1].seller_key.pub, ds / static_cast<Money>(z));
                trace_.events.push_back({0, seller_name(q - 1), "serve",
                                         "deposit=" + std::to_string(ds / static_cast<Money>(z)),
                                         "await-buyer"});
            }
            std::vector<ChainingValue> fingerprint = seg_hashes;
            for (std::size_t q = 1; q <= z; ++q) {
                auto request = make_segment_request(buyer_key_.pub,
                                                    threads_[q - 1].seller_key.pub, fingerprint, q);
                confirmations.push_back(sign_request(threads_[q - 1].seller_key, request));
            }
            auto handshake = make_handshake(confirmations, scheme_);
            trade_ = open_multiparty(arbiter_, handshake, scheme_, scenario_.chunk_len, sizes,
                                     offers, scenario_.price, ds, db, scenario_.max_timeout, 0);
            buyer_calls_ += 1;  // the combined open call
            for (std::size_t q = 1; q <= z; ++q) {
                threads_[q - 1].session = trade_->sessions[q - 1];
                record(0, "buyer", "open-multiparty",
                       describe(arbiter_.session(threads_[q - 1].session)), q - 1);
            }
        }

        for (std::size_t i = 0; i < threads_.size(); ++i) {
            SimEvent start;
            start.kind = SimEvent::Kind::SellerStart;
            start.thread = i;
            schedule(start, 1);
            // The buyer waits for chunk n from the setup step onwards.
            SimEvent patience;
            patience.kind = SimEvent::Kind::BuyerPatience;
            patience.thread = i;
            patience.marker = threads_[i].buyer_ctx.params.n;
            schedule(patience, scenario_.max_timeout);
        }
    }

    // --- seller side ------------------------------------------------------

    void step_seller(std::size_t thread, const SellerEvent& event, Tick now) {
        ExchangeThread& th = threads_[thread];
        if (!party_online(Party::Seller, thread, now)) return;
        auto [state, actions] = seller_step(th.seller_state, event, th.seller_ctx);

        // A seller that lies about a missing acknowledgment does so right
        // after the targeted acknowledgment arrived, instead of progressing.
        const Strategy& strat = th.seller_strategy;
        if (strat.kind == StrategyKind::SellerFalseReportAt) {
            if (const auto* got = std::get_if<AckReceivedEvent>(&event);
                got && got->ack.k == strat.k && state.acks.contains(strat.k)) {
                actions.clear();
                std::optional<Acknowledgment> evidence;
                if (auto it = state.acks.find(strat.k + 1); it != state.acks.end()) {
                    evidence = it->second;
                }
                actions.push_back(
                    ReportAction{strat.k, DisputeKind::MissingAck, evidence, true});
                state.phase = Phase::Disputed;
            }
        }

        th.seller_state = std::move(state);
        for (auto& action : actions) apply_seller_action(thread, action, now);
    }

    void apply_seller_action(std::size_t thread, ProtocolAction& action, Tick now) {
        ExchangeThread& th = threads_[thread];
        const Strategy& strat = th.seller_strategy;

        if (auto* send = std::get_if<SendChunkAction>(&action)) {
            TransferMsg msg = send->msg;
            if (strat.kind == StrategyKind::AbortAtChunk && msg.k == strat.k) {
                th.withheld = msg.k;
                record(now, seller_name(thread), "withhold-chunk", "k=" + std::to_string(msg.k),
                       thread);
                schedule_seller_patience(thread, msg.k, now);
                return;
            }
            if (strat.kind == StrategyKind::WrongChunkAt && msg.k == strat.k) {
                msg.blocks.front()[0] ^= 0x01;
                record(now, seller_name(thread), "send-corrupt-chunk",
                       "k=" + std::to_string(msg.k), thread);
            } else if (strat.kind == StrategyKind::OutOfOrderAt && msg.k == strat.k) {
                const std::size_t other = msg.k >= 2 ? msg.k - 1 : th.seller_ctx.params.n;
                const auto& r = th.seller_ctx.plan.range(other);
                msg.k = other;
                msg.blocks.assign(
                    th.seller_ctx.blocks.begin() + static_cast<std::ptrdiff_t>(r.begin),
                    th.seller_ctx.blocks.begin() + static_cast<std::ptrdiff_t>(r.end));
                msg.h_prev = th.seller_ctx.hashes[other - 1];
                record(now, seller_name(thread), "send-out-of-order",
                       "k=" + std::to_string(other), thread);
            } else {
                th.delivered.insert(msg.k);
                record(now, seller_name(thread), "send-chunk", "k=" + std::to_string(msg.k),
                       thread);
            }
            SimEvent deliver;
            deliver.kind = SimEvent::Kind::DeliverChunk;
            deliver.thread = thread;
            deliver.msg = std::move(msg);
            schedule(deliver, now + 1);
            schedule_seller_patience(thread, send->msg.k, now);
            return;
        }

        if (auto* report = std::get_if<ReportAction>(&action)) {
            // Ground truth for the sent/unsent row split.
            bool delivered = report->chunk_delivered;
            if (report->kind == DisputeKind::MissingAck && th.withheld == report->k) {
                delivered = false;
            }
            call_report(thread, Party::Seller, report->k, report->kind, report->evidence,
                        delivered, now);
            return;
        }

        if (auto* prove = std::get_if<ProveAction>(&action)) {
            call_prove(thread, Party::Seller, *prove, now);
            return;
        }

        if (auto* finalize = std::get_if<FinalizeAction>(&action)) {
            if (threads_.size() > 1) {
                // The buyer redeems multiparty trades; keep a fallback in case
                // it never does.
                SimEvent fallback;
                fallback.kind = SimEvent::Kind::SellerFallback;
                fallback.thread = thread;
                fallback.ack = finalize->final_ack;
                schedule(fallback, now + scenario_.max_timeout);
                return;
            }
            try {
                arbiter_.finalize(th.session, finalize->final_ack, now);
                record(now, seller_name(thread), "finalize",
                       describe(arbiter_.session(th.session)), thread);
                on_settled(thread, now);
            } catch (const ArbiterError& e) {
                record(now, seller_name(thread), "finalize-rejected", e.what(), thread);
            }
            return;
        }
    }

    void schedule_seller_patience(std::size_t thread, std::size_t marker, Tick now) {
        SimEvent patience;
        patience.kind = SimEvent::Kind::SellerPatience;
        patience.thread = thread;
        patience.marker = marker;
        schedule(patience, now + scenario_.max_timeout);
    }

    // --- buyer side -------------------------------------------------------

    void step_buyer(std::size_t thread, const BuyerEvent& event, Tick now) {
        ExchangeThread& th = threads_[thread];
        if (!party_online(Party::Buyer, thread, now) || th.buyer_silent) return;
        auto [state, actions] = buyer_step(th.buyer_state, event, th.buyer_ctx);
        th.buyer_state = std::move(state);
        for (auto& action : actions) apply_buyer_action(thread, action, now);
        if (th.buyer_state.phase == Phase::Done && !th.transfer_done) {
            th.transfer_done = true;
            maybe_redeem(now);
        }
    }

    void apply_buyer_action(std::size_t thread, ProtocolAction& action, Tick now) {
        ExchangeThread& th = threads_[thread];
        const Strategy& strat = scenario_.buyer_strategy;

        if (auto* send = std::get_if<SendAckAction>(&action)) {
            const std::size_t k = send->ack.k;
            if (strat.kind == StrategyKind::NoAckAt && k == strat.k) {
                th.buyer_silent = true;
                record(now, "buyer", "swallow-ack", "k=" + std::to_string(k), thread);
                return;
            }
            if (strat.kind == StrategyKind::FalseAckAt && k == strat.k + 1) {
                // Skip ahead: acknowledge the still-undelivered chunk instead.
                auto ack = make_ack(buyer_key_, th.buyer_ctx.params.fingerprint, strat.k,
                                    th.buyer_ctx.params.seller_key);
                th.buyer_silent = true;
                record(now, "buyer", "false-ack", "k=" + std::to_string(strat.k), thread);
                SimEvent deliver;
                deliver.kind = SimEvent::Kind::DeliverAck;
                deliver.thread = thread;
                deliver.ack = std::move(ack);
                schedule(deliver, now + 1);
                return;
            }
            if (strat.kind == StrategyKind::FalseReportAt && k == strat.k) {
                // The chunk verified fine; report it anyway (ground truth: delivered).
                record(now, "buyer", "false-report", "k=" + std::to_string(k), thread);
                call_report(thread, Party::Buyer, k, DisputeKind::SellerMisbehavior, {}, true,
                            now);
                th.buyer_state.phase = Phase::Disputed;
                return;
            }
            if (k == 1) th.final_ack = send->ack;
            record(now, "buyer", "send-ack", "k=" + std::to_string(k), thread);
            SimEvent deliver;
            deliver.kind = SimEvent::Kind::DeliverAck;
            deliver.thread = thread;
            deliver.ack = send->ack;
            schedule(deliver, now + 1);
            if (k > 1) schedule_buyer_patience(thread, k - 1, now);
            return;
        }

        if (auto* report = std::get_if<ReportAction>(&action)) {
            if (strat.kind == StrategyKind::FalseAckAt && report->k == strat.k) {
                // Acknowledge the missing chunk instead of reporting it.
                auto ack = make_ack(buyer_key_, th.buyer_ctx.params.fingerprint, report->k,
                                    th.buyer_ctx.params.seller_key);
                th.buyer_silent = true;
                record(now, "buyer", "false-ack", "k=" + std::to_string(report->k), thread);
                SimEvent deliver;
                deliver.kind = SimEvent::Kind::DeliverAck;
                deliver.thread = thread;
                deliver.ack = std::move(ack);
                schedule(deliver, now + 1);
                return;
            }
            call_report(thread, Party::Buyer, report->k, report->kind, report->evidence,
                        report->chunk_delivered, now);
            return;
        }

        if (auto* prove = std::get_if<ProveAction>(&action)) {
            call_prove(thread, Party::Buyer, *prove, now);
            return;
        }
    }

    void schedule_buyer_patience(std::size_t thread, std::size_t marker, Tick now) {
        SimEvent patience;
        patience.kind = SimEvent::Kind::BuyerPatience;
        patience.thread = thread;
        patience.marker = marker;
        schedule(patience, now + scenario_.max_timeout);
    }

    // --- arbiter calls ----------------------------------------------------

    void call_report(std::size_t thread, Party by, std::size_t k, DisputeKind kind,
                     const std::optional<Acknowledgment>& evidence, bool delivered, Tick now) {
        ExchangeThread& th = threads_[thread];
        const std::string actor = by == Party::Buyer ? "buyer" : seller_name(thread);
        try {
            arbiter_.report(th.session, by, k, kind, evidence, delivered, now);
        } catch (const ArbiterError& e) {
            record(now, actor, "report-rejected", e.what(), thread);
            return;
        }
        if (by == Party::Buyer) buyer_calls_ += 1;
        record(now, actor, "report",
               std::string(to_string(kind)) + " k=" + std::to_string(k) + " " +
                   describe(arbiter_.session(th.session)),
               thread);
        ArbiterNotice notice{ArbiterNotice::What::DisputeOpened, kind, by, k};
        send_notices(thread, notice, now);
        SimEvent deadline;
        deadline.kind = SimEvent::Kind::DeadlineCheck;
        deadline.thread = thread;
        schedule(deadline, now + scenario_.max_timeout);
    }

    void call_prove(std::size_t thread, Party by, const ProveAction& prove, Tick now) {
        ExchangeThread& th = threads_[thread];
        const std::string actor = by == Party::Buyer ? "buyer" : seller_name(thread);
        try {
            arbiter_.prove(th.session, by, prove.h, prove.block, now);
        } catch (const ArbiterError& e) {
            record(now, actor, "prove-rejected", e.what(), thread);
            return;
        }
        if (by == Party::Buyer) buyer_calls_ += 1;
        record(now, actor, "prove",
               "k=" + std::to_string(prove.k) + " " + describe(arbiter_.session(th.session)),
               thread);
        on_settled(thread, now);
    }

    void send_notices(std::size_t thread, const ArbiterNotice& notice, Tick now) {
        SimEvent to_seller;
        to_seller.kind = SimEvent::Kind::NoticeSeller;
        to_seller.thread = thread;
        to_seller.notice = notice;
        schedule(to_seller, now + 1);
        SimEvent to_buyer;
        to_buyer.kind = SimEvent::Kind::NoticeBuyer;
        to_buyer.thread = thread;
        to_buyer.notice = notice;
        schedule(to_buyer, now + 1);
    }

    void on_settled(std::size_t thread, Tick now) {
        ExchangeThread& th = threads_[thread];
        if (!outcome_recorded_.insert(thread).second) return;
        const Session& s = arbiter_.session(th.session);
        trace_.outcomes.push_back(
            {th.index + 1, *s.transition, *s.payout, s.tx_count});
        ArbiterNotice notice{ArbiterNotice::What::Settled, DisputeKind::SellerMisbehavior,
                             Party::Buyer, 0};
        send_notices(thread, notice, now);
        maybe_redeem(now);
    }

    void maybe_redeem(Tick now) {
        if (threads_.size() == 1 || !trade_ || redeem_scheduled_) return;
        for (const auto& th : threads_) {
            const auto status = arbiter_.session(th.session).status;
            const bool resolved = th.transfer_done || status != SessionStatus::Active;
            if (!resolved) return;
        }
        redeem_scheduled_ = true;
        SimEvent redeem;
        redeem.kind = SimEvent::Kind::BuyerRedeem;
        schedule(redeem, now + 1);
    }

    // --- event dispatch ----------------------------------------------------

    void process(const SimEvent& event) {
        const Tick now = event.time;
        switch (event.kind) {
            case SimEvent::Kind::SellerStart:
                step_seller(event.thread, StartEvent{}, now);
                return;
            case SimEvent::Kind::DeliverChunk: {
                if (!party_online(Party::Buyer, event.thread, now)) return;
                ExchangeThread& th = threads_[event.thread];
                if (th.buyer_silent || th.buyer_state.phase != Phase::Transferring) return;
                record(now, "buyer", "receive-chunk", "k=" + std::to_string(event.msg.k),
                       event.thread);
                step_buyer(event.thread, TransferReceivedEvent{event.msg}, now);
                return;
            }
            case SimEvent::Kind::DeliverAck: {
                if (!party_online(Party::Seller, event.thread, now)) return;
                ExchangeThread& th = threads_[event.thread];
                if (th.seller_state.phase != Phase::AwaitingAck) return;
                // An acknowledgment for a chunk that was never delivered is
                // the false-ack case; the rational seller claims it at once.
                if (!th.delivered.contains(event.ack.k) &&
                    verify_ack(th.seller_ctx.params.buyer_key, event.ack,
                               th.seller_ctx.params.fingerprint, event.ack.k,
                               th.seller_ctx.params.seller_key)) {
                    th.seller_state.phase = Phase::Disputed;
                    call_report(event.thread, Party::Seller, event.ack.k, DisputeKind::FalseAck,
                                event.ack, false, now);
                    return;
                }
                record(now, seller_name(event.thread), "receive-ack",
                       "k=" + std::to_string(event.ack.k), event.thread);
                step_seller(event.thread, AckReceivedEvent{event.ack}, now);
                return;
            }
            case SimEvent::Kind::NoticeSeller:
                step_seller(event.thread, ArbiterUpdateEvent{event.notice}, now);
                return;
            case SimEvent::Kind::NoticeBuyer:
                step_buyer(event.thread, ArbiterUpdateEvent{event.notice}, now);
                return;
            case SimEvent::Kind::SellerPatience: {
                ExchangeThread& th = threads_[event.thread];
                if (arbiter_.session(th.session).status != SessionStatus::Active) return;
                if (th.seller_state.phase != Phase::AwaitingAck ||
                    th.seller_state.next_k != event.marker) {
                    return;
                }
                step_seller(event.thread, TimeoutEvent{}, now);
                return;
            }
            case SimEvent::Kind::BuyerPatience: {
                ExchangeThread& th = threads_[event.thread];
                if (arbiter_.session(th.session).status != SessionStatus::Active) return;
                if (th.buyer_state.phase != Phase::Transferring ||
                    th.buyer_state.next_k != event.marker) {
                    return;
                }
                step_buyer(event.thread, TimeoutEvent{}, now);
                return;
            }
            case SimEvent::Kind::DeadlineCheck: {
                ExchangeThread& th = threads_[event.thread];
                if (arbiter_.session(th.session).status != SessionStatus::DisputeOpen) return;
                try {
                    arbiter_.timeout(th.session, now);
                } catch (const ArbiterError& e) {
                    record(now, "arbiter", "timeout-rejected", e.what(), event.thread);
                    return;
                }
                record(now, "arbiter", "timeout", describe(arbiter_.session(th.session)),
                       event.thread);
                on_settled(event.thread, now);
                return;
            }
            case SimEvent::Kind::SellerFallback: {
                ExchangeThread& th = threads_[event.thread];
                if (arbiter_.session(th.session).status != SessionStatus::Active) return;
                if (!party_online(Party::Seller, event.thread, now)) return;
                try {
                    arbiter_.finalize(th.session, event.ack, now);
                } catch (const ArbiterError& e) {
                    record(now, seller_name(event.thread), "finalize-rejected", e.what(),
                           event.thread);
                    return;
                }
                record(now, seller_name(event.thread), "finalize",
                       describe(arbiter_.session(th.session)), event.thread);
                on_settled(event.thread, now);
                return;
            }
            case SimEvent::Kind::BuyerRedeem: {
                if (!trade_ || !party_online(Party::Buyer, 0, now)) return;
                std::vector<std::optional<Acknowledgment>> acks;
                for (const auto& th : threads_) acks.push_back(th.final_ack);
                redeem_multiparty(arbiter_, *trade_, acks, now);
                buyer_calls_ += 1;
                for (std::size_t i = 0; i < threads_.size(); ++i) {
                    const Session& s = arbiter_.session(threads_[i].session);
                    if (s.status == SessionStatus::Settled &&
                        s.transition->kind == TransitionKind::HonestComplete &&
                        outcome_recorded_.insert(i).second) {
                        record(now, "buyer", "redeem", describe(s), i);
                        trace_.outcomes.push_back(
                            {threads_[i].index + 1, *s.transition, *s.payout, s.tx_count});
                        ArbiterNotice notice{ArbiterNotice::What::Settled,
                                             DisputeKind::SellerMisbehavior, Party::Buyer, 0};
                        send_notices(i, notice, now);
                    }
                }
                return;
            }
        }
    }

    // --- wrap-up ------------------------------------------------------------

    void finish() {
        for (const auto& outcome : trace_.outcomes) {
            trace_.total.to_buyer += outcome.payout.to_buyer;
            trace_.total.to_seller += outcome.payout.to_seller;
            trace_.total.burned += outcome.payout.burned;
            trace_.tx_count += outcome.tx_count;
        }
        trace_.buyer_tx_count = buyer_calls_;
        trace_.completed =
            std::all_of(threads_.begin(), threads_.end(),
                        [](const ExchangeThread& th) { return th.transfer_done; });
        if (trace_.completed) {
            std::vector<std::uint8_t> bytes;
            std::vector<Block> blocks;
            for (const auto& th : threads_) {
                for (std::size_t k = 1; k <= th.buyer_ctx.params.n; ++k) {
                    const auto& part = th.buyer_state.received.at(k);
                    blocks.insert(blocks.end(), part.begin(), part.end());
                }
            }
            bytes = strip_padding(blocks);
            trace_.checksum = fingerprint(bytes).to_hex();
        }
    }

    Scenario scenario_;
    PaddedFile padded_;
    KeyPair buyer_key_;
    Arbiter arbiter_;
    ConcatAggregate scheme_;
    std::optional<MultipartyTrade> trade_;
    bool redeem_scheduled_ = false;
    int buyer_calls_ = 0;
    std::set<std::size_t> outcome_recorded_;
    std::vector<ExchangeThread> threads_;
    std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> queue_;
    std::uint64_t next_seq_ = 0;
    Trace trace_;
};

}  // namespace

Trace run_scenario(const Scenario& scenario) {
    return Simulation(scenario).run();
}

std::pair<Rational, Rational> terminal_totals(const Transition& transition, const Payout& payout,
                                              const UtilityProfile& utilities, Money buyer_value,
                                              Money seller_cost) {
    const std::size_t t = transferred_chunks(transition, utilities.n);
    return {Rational(payout.to_buyer) + utilities.buyer[t] * Rational(buyer_value),
            Rational(payout.to_seller) + utilities.seller[t] * Rational(seller_cost)};
}

MatrixSummary run_matrix(const std::vector<Scenario>& scenarios) {
    MatrixSummary summary;
    for (const auto& scenario : scenarios) {
        if (scenario.z != 1) throw SimError("matrix runs cover single-seller scenarios");
        Trace trace = run_scenario(scenario);
        if (trace.outcomes.empty()) throw SimError("scenario did not settle");
        const auto& outcome = trace.outcomes.front();

        MatrixRow row;
        row.transition = outcome.transition;
        row.payout = outcome.payout;

        const bool buyer_deviates = scenario.buyer_strategy.kind != StrategyKind::Honest;
        const bool seller_deviates =
            !scenario.seller_strategies.empty() &&
            scenario.seller_strategies.front().kind != StrategyKind::Honest;
        if (buyer_deviates) {
            row.deviator = Party::Buyer;
            row.label = strategy_label(Party::Buyer, scenario.buyer_strategy);
        } else if (seller_deviates) {
            row.deviator = Party::Seller;
            row.label = strategy_label(Party::Seller, scenario.seller_strategies.front());
        } else {
            row.label = "honest";
        }

        const std::size_t n = (pad_message(scenario_file(scenario)).blocks.size() +
                               scenario.chunk_len - 1) /
                              scenario.chunk_len;
        const auto utilities = utilities_for(scenario.utility, n);
        const auto totals = terminal_totals(outcome.transition, outcome.payout, utilities,
                                            scenario.buyer_value, scenario.seller_cost);

        if (row.deviator) {
            Scenario honest = scenario;
            honest.buyer_strategy = Strategy{};
            honest.seller_strategies.assign(scenario.z, Strategy{});
            Trace base = run_scenario(honest);
            if (base.outcomes.empty()) throw SimError("honest baseline did not settle");
            const auto base_totals =
                terminal_totals(base.outcomes.front().transition, base.outcomes.front().payout,
                                utilities, scenario.buyer_value, scenario.seller_cost);
            row.deviator_total = *row.deviator == Party::Buyer ? totals.first : totals.second;
            row.honest_total =
                *row.deviator == Party::Buyer ? base_totals.first : base_totals.second;
            row.outperforms = row.deviator_total > row.honest_total;
            summary.any_profitable_deviation |= row.outperforms;
        } else {
            row.deviator_total = totals.first;
            row.honest_total = totals.first;
        }
        summary.rows.push_back(std::move(row));
    }
    return summary;
}

std::string matrix_to_string(const MatrixSummary& summary) {
    std::ostringstream out;
    for (const auto& row : summary.rows) {
        out << row.label << ": " << to_string(row.transition.kind);
        if (row.transition.kind != TransitionKind::HonestComplete) {
            out << "(k=" << row.transition.k << ")";
        }
        out << " payout buyer=" << row.payout.to_buyer << " seller=" << row.payout.to_seller
            << " burned=" << row.payout.burned;
        if (row.deviator) {
            out << " | deviator " << to_string(*row.deviator) << " total "
                << to_double(row.deviator_total) << " vs honest " << to_double(row.honest_total)
                << (row.outperforms ? "  ** PROFITABLE DEVIATION **" : "");
        }
        out << "\n";
    }
    if (summary.rows.empty()) out << "(no scenarios)\n";
    return out.str();
}

}  // namespace fairex
