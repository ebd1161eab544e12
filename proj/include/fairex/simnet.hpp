#pragma once

#include "fairex/arbiter.hpp"
#include "fairex/game.hpp"
#include "fairex/multiparty.hpp"
#include "fairex/protocol.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fairex {

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class StrategyKind {
    Honest,
    AbortAtChunk,         // stop sending at chunk k, prove if challenged
    WrongChunkAt,         // deliver a corrupted chunk k
    OutOfOrderAt,         // deliver a valid chunk under the wrong index at k
    FalseReportAt,        // buyer reports despite a valid chunk k
    NoAckAt,              // buyer swallows the acknowledgment of chunk k
    FalseAckAt,           // buyer acknowledges the undelivered chunk k
    SellerFalseReportAt,  // seller claims A_k never arrived although it did
    OfflineAt,            // party vanishes at a fixed logical time
};

const char* to_string(StrategyKind k);
StrategyKind strategy_kind_from_string(const std::string& name);

struct Strategy {
    StrategyKind kind = StrategyKind::Honest;
    std::size_t k = 0;  // chunk parameter
    Tick at_time = 0;   // OfflineAt parameter
};

enum class UtilityKind { Linear, EntireFile, FirstChunk };

const char* to_string(UtilityKind k);
UtilityKind utility_kind_from_string(const std::string& name);

UtilityProfile utilities_for(UtilityKind kind, std::size_t n);

/// Deterministic simulation input. The file is either given inline or
/// generated from (file_seed, file_len).
struct Scenario {
    std::vector<std::uint8_t> file_bytes;
    std::uint64_t file_seed = 1;
    std::size_t file_len = 0;
    std::size_t chunk_len = 1;
    std::size_t z = 1;  // seller count / segment count
    Money price = 0;
    Money buyer_value = 0;   // F_v
    Money seller_cost = 0;   // F_c
    Money seller_deposit = -1;  // -1: default to price
    Money buyer_deposit = -1;
    Tick max_timeout = kDefaultMaxTimeout;
    Strategy buyer_strategy;
    std::vector<Strategy> seller_strategies;  // one per seller; empty = honest
    std::uint64_t seed = 1;
    UtilityKind utility = UtilityKind::Linear;
};

void validate_scenario(const Scenario& scenario);
std::vector<std::uint8_t> scenario_file(const Scenario& scenario);

/// JSON schema documented in the README.
Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& scenario);

struct TraceEvent {
    Tick time = 0;
    std::string actor;
    std::string action;
    std::string detail;
    std::string session;  // arbiter status snapshot
};

struct SessionOutcome {
    std::size_t segment = 1;
    Transition transition;
    Payout payout;
    int tx_count = 0;
};

struct Trace {
    std::vector<TraceEvent> events;
    std::vector<SessionOutcome> outcomes;
    Payout total;
    int tx_count = 0;        // summed over sessions
    int buyer_tx_count = 0;  // multiparty trade-level buyer calls
    bool completed = false;  // buyer reassembled the file
    std::string checksum;    // fingerprint of the reassembled bytes
};

/// Line-delimited records: one JSON object per event, then one summary object.
std::string trace_to_jsonl(const Trace& trace);

Trace run_scenario(const Scenario& scenario);

/// Gross end-of-game totals (contract payout plus relative utility value)
/// for both parties at a terminal.
std::pair<Rational, Rational> terminal_totals(const Transition& transition, const Payout& payout,
                                              const UtilityProfile& utilities, Money buyer_value,
                                              Money seller_cost);

struct MatrixRow {
    std::string label;
    std::optional<Party> deviator;
    Transition transition;
    Payout payout;
    Rational deviator_total;  // gross utility of the deviating party
    Rational honest_total;    // same party under the all-honest baseline
    bool outperforms = false;
};

struct MatrixSummary {
    std::vector<MatrixRow> rows;
    bool any_profitable_deviation = false;
};

/// Runs each scenario and compares the deviator's outcome against the
/// all-honest baseline with the same economics.
MatrixSummary run_matrix(const std::vector<Scenario>& scenarios);

std::string matrix_to_string(const MatrixSummary& summary);

}  // namespace fairex
