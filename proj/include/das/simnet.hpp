// Deterministic discrete-event simulator: virtual clock in integer
// microseconds, synthetic or file-based latency matrix, independent packet
// loss, per-sender FIFO bandwidth queues, and fault injection (dead nodes,
// incomplete views). One slot per run; identical (config, seed) gives
// identical events and metrics.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "das/node.hpp"
#include "das/protocol.hpp"
#include "das/rng.hpp"

namespace das {

struct LatencyParams {
    double min_rtt_ms = 8.0;
    double mean_rtt_ms = 64.0;
    double max_rtt_ms = 438.0;
};

// Symmetric vertex-to-vertex one-way latencies.
class LatencyModel {
public:
    // Pairwise RTTs drawn from a scaled Beta(1, b) pinned to the requested
    // mean, with the extreme draws anchored to the exact min/max targets.
    static LatencyModel synthesize(const LatencyParams& params, std::uint32_t vertices,
                                   DetRng& rng);

    // Plain-text CSV, row i column j = RTT in ms between vertices i and j.
    static LatencyModel from_rtt_csv(const std::string& csv_text);

    std::uint32_t vertex_count() const { return vertices_; }
    std::int64_t one_way_us(std::uint32_t a, std::uint32_t b) const {
        return one_way_us_[static_cast<std::size_t>(a) * vertices_ + b];
    }
    double rtt_ms(std::uint32_t a, std::uint32_t b) const {
        return static_cast<double>(one_way_us(a, b)) * 2.0 / 1000.0;
    }

    struct Stats {
        double min_rtt_ms = 0, mean_rtt_ms = 0, max_rtt_ms = 0;
    };
    Stats stats() const;  // over off-diagonal pairs

    // Mean RTT from each vertex to all others; builder placement input.
    std::vector<double> per_vertex_mean_rtt() const;

private:
    LatencyModel(std::uint32_t vertices, std::vector<std::int32_t> one_way_us)
        : vertices_(vertices), one_way_us_(std::move(one_way_us)) {}

    std::uint32_t vertices_;
    std::vector<std::int32_t> one_way_us_;
};

// Per-sender FIFO serialization: a message occupies the uplink for
// bits/capacity before it enters the wire.
struct TransmitQueue {
    std::int64_t busy_until_us = 0;

    std::int64_t enqueue(std::int64_t now_us, std::uint64_t bytes, std::uint64_t bps) {
        const std::int64_t start = std::max(now_us, busy_until_us);
        busy_until_us = start + serialization_us(bytes, bps);
        return busy_until_us;
    }

    static std::int64_t serialization_us(std::uint64_t bytes, std::uint64_t bps) {
        const std::uint64_t bits = bytes * 8;
        return static_cast<std::int64_t>((bits * 1'000'000 + bps - 1) / bps);
    }
};

struct ScenarioConfig {
    std::uint32_t node_count = 1000;
    GridParams grid;
    AssignmentParams assignment;
    SeedingPolicy policy;
    std::uint32_t samples = 0;  // 0: derived from sample_target_fp
    double sample_target_fp = 1e-9;

    double loss_rate = 0.03;
    std::uint64_t node_bandwidth_bps = 25'000'000;
    std::uint64_t builder_bandwidth_bps = 10'000'000'000;

    LatencyParams latency;
    std::uint32_t vertices = 0;  // 0: node_count + 1
    std::string latency_csv;     // inline CSV text; overrides synthesis when set

    double dead_fraction = 0.0;
    double out_of_view_fraction = 0.0;

    FetchSchedule schedule = default_schedule();
    std::string schedule_kind = "adaptive";  // config echo only

    std::int64_t trigger_us = 400'000;
    std::int64_t slot_deadline_us = 4'000'000;
    std::int64_t horizon_us = 12'000'000;

    bool withhold_max_pattern = false;

    std::uint64_t seed = 1;

    std::uint32_t effective_samples() const;
    void validate() const;
};

struct NodeMetrics {
    bool dead = false;
    std::uint64_t msgs_sent = 0;
    std::uint64_t msgs_received = 0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t bytes_received = 0;
    NodeProtocolMetrics proto;
};

struct BuilderMetrics {
    std::uint64_t msgs_sent = 0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t seed_cells_sent = 0;   // with redundancy multiplicity
    std::uint64_t unseeded_cells = 0;    // lines without any known holder
    std::int64_t send_complete_us = 0;   // uplink drained
};

struct NetworkCounters {
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped = 0;
    std::uint64_t in_flight_at_end = 0;
};

struct SlotResult {
    std::vector<NodeMetrics> nodes;
    BuilderMetrics builder;
    NetworkCounters network;
    std::uint32_t samples_per_node = 0;
};

// Executes one slot: seeding at t=0 through the builder's uplink, then the
// node state machines drive consolidation and sampling until the event queue
// drains or the horizon passes.
SlotResult run_slot(const ScenarioConfig& config);

}  // namespace das
