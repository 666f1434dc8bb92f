#include "das/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace das {

std::vector<NodeCsvRow> node_rows(const SlotResult& result) {
    std::vector<NodeCsvRow> rows;
    rows.reserve(result.nodes.size());
    for (std::uint32_t i = 0; i < result.nodes.size(); ++i) {
        const NodeMetrics& m = result.nodes[i];
        NodeCsvRow r;
        r.node = i;
        r.dead = m.dead;
        r.time_to_seeding_us = m.proto.time_to_seeding_us;
        r.time_to_consolidation_us = m.proto.time_to_consolidation_us;
        r.time_to_sampling_us = m.proto.time_to_sampling_us;
        r.seed_cells = m.proto.seed_cells;
        r.duplicate_cells = m.proto.duplicate_cells;
        r.reconstructed_cells = m.proto.reconstructed_cells;
        r.queries_sent = m.proto.queries_sent;
        r.replies_sent = m.proto.replies_sent;
        r.buffered_queries = m.proto.buffered_queries;
        r.msgs_sent = m.msgs_sent;
        r.msgs_received = m.msgs_received;
        r.bytes_sent = m.bytes_sent;
        r.bytes_received = m.bytes_received;
        r.f0_cons = m.proto.f0_cons;
        r.f0_samp = m.proto.f0_samp;
        r.rounds_executed = m.proto.rounds_executed;
        const std::uint64_t total_missing = m.proto.f0_cons + m.proto.f0_samp;
        for (std::uint32_t j = 0; j < kCsvRounds; ++j) {
            if (j < m.proto.rounds.size()) {
                const NodeRoundStats& rs = m.proto.rounds[j];
                r.round_requested[j] = rs.cells_requested;
                r.round_replies_in[j] = rs.replies_in;
                r.round_replies_after[j] = rs.replies_after;
                r.round_missing_end[j] = rs.cons_missing_end + rs.samp_missing_end;
            } else if (!m.proto.rounds.empty()) {
                // Fetch ended earlier; missing stays at its final value.
                const NodeRoundStats& last = m.proto.rounds.back();
                r.round_missing_end[j] = last.cons_missing_end + last.samp_missing_end;
            } else {
                r.round_missing_end[j] = total_missing;
            }
        }
        rows.push_back(r);
    }
    return rows;
}

namespace {

void append_time(std::string& out, std::int64_t us) {
    if (us < 0) return;  // empty field: phase never completed
    out += std::to_string(us);
}

std::int64_t parse_time(const std::string& field) {
    if (field.empty()) return -1;
    return std::stoll(field);
}

}  // namespace

std::string write_node_csv(const std::vector<NodeCsvRow>& rows) {
    std::string out =
        "node,dead,time_to_seeding_us,time_to_consolidation_us,time_to_sampling_us,"
        "seed_cells,duplicate_cells,reconstructed_cells,queries_sent,replies_sent,"
        "buffered_queries,msgs_sent,msgs_received,bytes_sent,bytes_received,"
        "f0_cons,f0_samp,rounds_executed";
    for (std::uint32_t j = 1; j <= kCsvRounds; ++j) {
        out += ",requested_r" + std::to_string(j);
        out += ",replies_in_r" + std::to_string(j);
        out += ",replies_after_r" + std::to_string(j);
        out += ",missing_end_r" + std::to_string(j);
    }
    out += "\n";
    for (const NodeCsvRow& r : rows) {
        out += std::to_string(r.node);
        out += r.dead ? ",1," : ",0,";
        append_time(out, r.time_to_seeding_us);
        out += ',';
        append_time(out, r.time_to_consolidation_us);
        out += ',';
        append_time(out, r.time_to_sampling_us);
        out += ',' + std::to_string(r.seed_cells);
        out += ',' + std::to_string(r.duplicate_cells);
        out += ',' + std::to_string(r.reconstructed_cells);
        out += ',' + std::to_string(r.queries_sent);
        out += ',' + std::to_string(r.replies_sent);
        out += ',' + std::to_string(r.buffered_queries);
        out += ',' + std::to_string(r.msgs_sent);
        out += ',' + std::to_string(r.msgs_received);
        out += ',' + std::to_string(r.bytes_sent);
        out += ',' + std::to_string(r.bytes_received);
        out += ',' + std::to_string(r.f0_cons);
        out += ',' + std::to_string(r.f0_samp);
        out += ',' + std::to_string(r.rounds_executed);
        for (std::uint32_t j = 0; j < kCsvRounds; ++j) {
            out += ',' + std::to_string(r.round_requested[j]);
            out += ',' + std::to_string(r.round_replies_in[j]);
            out += ',' + std::to_string(r.round_replies_after[j]);
            out += ',' + std::to_string(r.round_missing_end[j]);
        }
        out += '\n';
    }
    return out;
}

std::vector<NodeCsvRow> parse_node_csv(const std::string& csv) {
    std::vector<NodeCsvRow> rows;
    std::istringstream in(csv);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        // Trailing empty fields are dropped by getline; pad.
        while (fields.size() < 18 + 4 * kCsvRounds) fields.emplace_back();
        NodeCsvRow r;
        std::size_t f = 0;
        r.node = static_cast<std::uint32_t>(std::stoul(fields[f++]));
        r.dead = fields[f++] == "1";
        r.time_to_seeding_us = parse_time(fields[f++]);
        r.time_to_consolidation_us = parse_time(fields[f++]);
        r.time_to_sampling_us = parse_time(fields[f++]);
        r.seed_cells = std::stoull(fields[f++]);
        r.duplicate_cells = std::stoull(fields[f++]);
        r.reconstructed_cells = std::stoull(fields[f++]);
        r.queries_sent = std::stoull(fields[f++]);
        r.replies_sent = std::stoull(fields[f++]);
        r.buffered_queries = std::stoull(fields[f++]);
        r.msgs_sent = std::stoull(fields[f++]);
        r.msgs_received = std::stoull(fields[f++]);
        r.bytes_sent = std::stoull(fields[f++]);
        r.bytes_received = std::stoull(fields[f++]);
        r.f0_cons = std::stoull(fields[f++]);
        r.f0_samp = std::stoull(fields[f++]);
        r.rounds_executed = static_cast<std::uint32_t>(std::stoul(fields[f++]));
        for (std::uint32_t j = 0; j < kCsvRounds; ++j) {
            r.round_requested[j] = std::stoull(fields[f++]);
            r.round_replies_in[j] = static_cast<std::uint32_t>(std::stoul(fields[f++]));
            r.round_replies_after[j] = static_cast<std::uint32_t>(std::stoul(fields[f++]));
            r.round_missing_end[j] = std::stoull(fields[f++]);
        }
        rows.push_back(r);
    }
    return rows;
}

double percentile_nearest_rank(std::vector<double> values, double pct) {
    if (values.empty()) return -1;
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil(pct / 100.0 * static_cast<double>(values.size())));
    return values[std::max<std::size_t>(rank, 1) - 1];
}

namespace {

PhaseAggregate phase_aggregate(const std::vector<double>& times_ms) {
    PhaseAggregate a;
    a.completed = static_cast<std::uint32_t>(times_ms.size());
    if (times_ms.empty()) return a;
    a.p50_ms = percentile_nearest_rank(times_ms, 50);
    a.p90_ms = percentile_nearest_rank(times_ms, 90);
    a.p99_ms = percentile_nearest_rank(times_ms, 99);
    a.max_ms = *std::max_element(times_ms.begin(), times_ms.end());
    return a;
}

}  // namespace

ScenarioAggregates compute_aggregates(const SlotResult& result, std::int64_t deadline_us) {
    ScenarioAggregates agg;
    agg.nodes = static_cast<std::uint32_t>(result.nodes.size());
    agg.builder_bytes = result.builder.bytes_sent;

    std::vector<double> seeding, consolidation, sampling;
    std::uint32_t success = 0;
    std::uint32_t unavailable = 0;
    double msgs_sum = 0, bytes_sum = 0, bytes_max = 0;
    double coverage_sum[kCsvRounds] = {};
    std::uint32_t coverage_nodes = 0;

    for (const NodeMetrics& m : result.nodes) {
        if (m.dead) continue;
        ++agg.live_nodes;
        const NodeProtocolMetrics& p = m.proto;
        if (p.time_to_seeding_us >= 0) seeding.push_back(p.time_to_seeding_us / 1000.0);
        if (p.time_to_consolidation_us >= 0) {
            consolidation.push_back(p.time_to_consolidation_us / 1000.0);
        }
        if (p.time_to_sampling_us >= 0) sampling.push_back(p.time_to_sampling_us / 1000.0);
        if (p.time_to_sampling_us >= 0 && p.time_to_sampling_us <= deadline_us) ++success;
        if (!p.sampling_complete()) ++unavailable;
        msgs_sum += static_cast<double>(m.msgs_sent + m.msgs_received);
        const double bytes = static_cast<double>(m.bytes_sent + m.bytes_received);
        bytes_sum += bytes;
        bytes_max = std::max(bytes_max, bytes);

        const std::uint64_t f0 = p.f0_cons + p.f0_samp;
        if (f0 > 0 && p.rounds_executed > 0) {
            ++coverage_nodes;
            for (std::uint32_t j = 0; j < kCsvRounds; ++j) {
                std::uint64_t missing;
                if (j < p.rounds.size()) {
                    missing = p.rounds[j].cons_missing_end + p.rounds[j].samp_missing_end;
                } else if (!p.rounds.empty()) {
                    missing = p.rounds.back().cons_missing_end + p.rounds.back().samp_missing_end;
                } else {
                    missing = f0;
                }
                coverage_sum[j] +=
                    static_cast<double>(f0 - std::min(missing, f0)) / static_cast<double>(f0);
            }
        }
    }

    agg.seeding = phase_aggregate(seeding);
    agg.consolidation = phase_aggregate(consolidation);
    agg.sampling = phase_aggregate(sampling);
    if (agg.live_nodes > 0) {
        agg.success_fraction = static_cast<double>(success) / agg.live_nodes;
        agg.unavailable_fraction = static_cast<double>(unavailable) / agg.live_nodes;
        agg.mean_msgs_per_node = msgs_sum / agg.live_nodes;
        agg.mean_bytes_per_node = bytes_sum / agg.live_nodes;
        agg.max_bytes_per_node = bytes_max;
    }
    for (std::uint32_t j = 0; j < kCsvRounds; ++j) {
        agg.coverage_by_round[j] =
            coverage_nodes > 0 ? coverage_sum[j] / coverage_nodes : 0.0;
    }
    return agg;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::string write_aggregate_csv_header() {
    std::string out = "label,nodes,live_nodes,success_fraction,unavailable_fraction,"
                      "seeding_p50_ms,seeding_p99_ms,seeding_max_ms,"
                      "consolidation_p50_ms,consolidation_p99_ms,consolidation_max_ms,"
                      "sampling_p50_ms,sampling_p90_ms,sampling_p99_ms,sampling_max_ms,"
                      "mean_msgs_per_node,mean_bytes_per_node,max_bytes_per_node,builder_bytes";
    for (std::uint32_t j = 1; j <= kCsvRounds; ++j) out += ",coverage_r" + std::to_string(j);
    out += "\n";
    return out;
}

std::string write_aggregate_csv_row(const std::string& label, const ScenarioAggregates& agg) {
    std::string out = label;
    out += ',' + std::to_string(agg.nodes);
    out += ',' + std::to_string(agg.live_nodes);
    out += ',' + fmt_double(agg.success_fraction);
    out += ',' + fmt_double(agg.unavailable_fraction);
    out += ',' + fmt_double(agg.seeding.p50_ms);
    out += ',' + fmt_double(agg.seeding.p99_ms);
    out += ',' + fmt_double(agg.seeding.max_ms);
    out += ',' + fmt_double(agg.consolidation.p50_ms);
    out += ',' + fmt_double(agg.consolidation.p99_ms);
    out += ',' + fmt_double(agg.consolidation.max_ms);
    out += ',' + fmt_double(agg.sampling.p50_ms);
    out += ',' + fmt_double(agg.sampling.p90_ms);
    out += ',' + fmt_double(agg.sampling.p99_ms);
    out += ',' + fmt_double(agg.sampling.max_ms);
    out += ',' + fmt_double(agg.mean_msgs_per_node);
    out += ',' + fmt_double(agg.mean_bytes_per_node);
    out += ',' + fmt_double(agg.max_bytes_per_node);
    out += ',' + std::to_string(agg.builder_bytes);
    for (std::uint32_t j = 0; j < kCsvRounds; ++j) {
        out += ',' + fmt_double(agg.coverage_by_round[j]);
    }
    out += '\n';
    return out;
}

}  // namespace das
