// Evaluation output: per-node CSV rows, nearest-rank percentile aggregates,
// and the deadline success fraction. Nodes that never complete a phase keep
// an empty CSV field and are excluded from percentiles but included in the
// success-fraction denominator.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "das/simnet.hpp"

namespace das {

inline constexpr std::uint32_t kCsvRounds = 8;  // per-round columns emitted

struct NodeCsvRow {
    std::uint32_t node = 0;
    bool dead = false;
    std::int64_t time_to_seeding_us = -1;        // -1: never
    std::int64_t time_to_consolidation_us = -1;
    std::int64_t time_to_sampling_us = -1;
    std::uint64_t seed_cells = 0;
    std::uint64_t duplicate_cells = 0;
    std::uint64_t reconstructed_cells = 0;
    std::uint64_t queries_sent = 0;
    std::uint64_t replies_sent = 0;
    std::uint64_t buffered_queries = 0;
    std::uint64_t msgs_sent = 0;
    std::uint64_t msgs_received = 0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t bytes_received = 0;
    std::uint64_t f0_cons = 0;
    std::uint64_t f0_samp = 0;
    std::uint32_t rounds_executed = 0;
    std::uint64_t round_requested[kCsvRounds] = {};
    std::uint32_t round_replies_in[kCsvRounds] = {};
    std::uint32_t round_replies_after[kCsvRounds] = {};
    std::uint64_t round_missing_end[kCsvRounds] = {};  // cons + samp combined

    bool operator==(const NodeCsvRow&) const = default;
};

std::vector<NodeCsvRow> node_rows(const SlotResult& result);
std::string write_node_csv(const std::vector<NodeCsvRow>& rows);
std::vector<NodeCsvRow> parse_node_csv(const std::string& csv);

struct PhaseAggregate {
    std::uint32_t completed = 0;
    double p50_ms = -1, p90_ms = -1, p99_ms = -1, max_ms = -1;
};

struct ScenarioAggregates {
    std::uint32_t nodes = 0;
    std::uint32_t live_nodes = 0;
    double success_fraction = 0;  // sampling done by deadline, over live nodes
    PhaseAggregate seeding;
    PhaseAggregate consolidation;
    PhaseAggregate sampling;
    double mean_msgs_per_node = 0;       // sent + received, live nodes
    double mean_bytes_per_node = 0;
    double max_bytes_per_node = 0;
    std::uint64_t builder_bytes = 0;
    // Mean cumulative fetch coverage at the end of rounds 1..kCsvRounds,
    // over live nodes with a nonempty fetch set.
    double coverage_by_round[kCsvRounds] = {};

    // Fraction of live nodes whose sampling fetch terminated without
    // completing: the unavailability verdicts.
    double unavailable_fraction = 0;
};

ScenarioAggregates compute_aggregates(const SlotResult& result, std::int64_t deadline_us);

// Nearest-rank percentile over an unsorted sample; -1 on empty input.
double percentile_nearest_rank(std::vector<double> values, double pct);

std::string write_aggregate_csv_header();
std::string write_aggregate_csv_row(const std::string& label, const ScenarioAggregates& agg);

}  // namespace das
