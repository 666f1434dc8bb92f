#include "das/scenario.hpp"

#include <future>
#include <stdexcept>

#include <json.hpp>

namespace das {

namespace {

using nlohmann::json;

PolicyKind policy_from_string(const std::string& s) {
    if (s == "minimal") return PolicyKind::Minimal;
    if (s == "single") return PolicyKind::Single;
    if (s == "redundant") return PolicyKind::Redundant;
    throw std::invalid_argument("config: unknown policy '" + s + "'");
}

std::string policy_to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::Minimal: return "minimal";
        case PolicyKind::Single: return "single";
        case PolicyKind::Redundant: return "redundant";
    }
    return "?";
}

void apply_schedule_kind(ScenarioConfig& c, const std::string& kind) {
    if (kind == "adaptive") {
        c.schedule = default_schedule();
    } else if (kind == "constant") {
        c.schedule = constant_schedule();
    } else {
        throw std::invalid_argument("config: unknown schedule kind '" + kind + "'");
    }
    c.schedule_kind = kind;
}

}  // namespace

ScenarioConfig parse_scenario_json(const std::string& json_text) {
    json j = json::parse(json_text);
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    ScenarioConfig c;

    static const char* known[] = {
        "node_count",       "grid_k",
        "cell_payload_bytes", "proof_bytes",      "rows_per_node",  "cols_per_node",
        "policy",           "redundancy_k",      "samples",        "sample_target_fp",
        "loss_rate",        "node_bandwidth_bps", "builder_bandwidth_bps",
        "latency",          "dead_fraction",     "out_of_view_fraction",
        "schedule",         "trigger_ms",        "slot_deadline_ms", "horizon_ms",
        "withhold_max_pattern", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) throw std::invalid_argument("config: unknown key '" + it.key() + "'");
    }

    c.node_count = j.value("node_count", c.node_count);
    c.grid.k = j.value("grid_k", c.grid.k);
    c.grid.cell_payload_bytes = j.value("cell_payload_bytes", c.grid.cell_payload_bytes);
    c.grid.proof_bytes = j.value("proof_bytes", c.grid.proof_bytes);
    c.assignment.rows_per_node = j.value("rows_per_node", c.assignment.rows_per_node);
    c.assignment.cols_per_node = j.value("cols_per_node", c.assignment.cols_per_node);
    if (j.contains("policy")) c.policy.kind = policy_from_string(j["policy"].get<std::string>());
    c.policy.redundancy_k = j.value("redundancy_k", c.policy.redundancy_k);
    c.samples = j.value("samples", c.samples);
    c.sample_target_fp = j.value("sample_target_fp", c.sample_target_fp);
    c.loss_rate = j.value("loss_rate", c.loss_rate);
    c.node_bandwidth_bps = j.value("node_bandwidth_bps", c.node_bandwidth_bps);
    c.builder_bandwidth_bps = j.value("builder_bandwidth_bps", c.builder_bandwidth_bps);
    if (j.contains("latency")) {
        const json& l = j["latency"];
        c.latency.min_rtt_ms = l.value("min_rtt_ms", c.latency.min_rtt_ms);
        c.latency.mean_rtt_ms = l.value("mean_rtt_ms", c.latency.mean_rtt_ms);
        c.latency.max_rtt_ms = l.value("max_rtt_ms", c.latency.max_rtt_ms);
        c.vertices = l.value("vertices", c.vertices);
        c.latency_csv = l.value("csv", c.latency_csv);
    }
    c.dead_fraction = j.value("dead_fraction", c.dead_fraction);
    c.out_of_view_fraction = j.value("out_of_view_fraction", c.out_of_view_fraction);
    if (j.contains("schedule")) {
        const json& s = j["schedule"];
        apply_schedule_kind(c, s.value("kind", std::string("adaptive")));
        if (s.contains("timeouts_ms")) {
            c.schedule.timeouts_us.clear();
            for (double v : s["timeouts_ms"].get<std::vector<double>>()) {
                c.schedule.timeouts_us.push_back(static_cast<std::int64_t>(v * 1000));
            }
            c.schedule_kind = "custom";
        }
        if (s.contains("redundancy")) {
            c.schedule.redundancy = s["redundancy"].get<std::vector<std::uint32_t>>();
            c.schedule_kind = "custom";
        }
        c.schedule.cb_boost = s.value("cb_boost", c.schedule.cb_boost);
        c.schedule.max_rounds = s.value("max_rounds", c.schedule.max_rounds);
    }
    c.trigger_us = static_cast<std::int64_t>(j.value("trigger_ms", 400.0) * 1000);
    c.slot_deadline_us = static_cast<std::int64_t>(j.value("slot_deadline_ms", 4000.0) * 1000);
    c.horizon_us = static_cast<std::int64_t>(j.value("horizon_ms", 12000.0) * 1000);
    c.withhold_max_pattern = j.value("withhold_max_pattern", c.withhold_max_pattern);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

std::string scenario_to_json(const ScenarioConfig& c) {
    json j;
    j["node_count"] = c.node_count;
    j["grid_k"] = c.grid.k;
    j["cell_payload_bytes"] = c.grid.cell_payload_bytes;
    j["proof_bytes"] = c.grid.proof_bytes;
    j["rows_per_node"] = c.assignment.rows_per_node;
    j["cols_per_node"] = c.assignment.cols_per_node;
    j["policy"] = policy_to_string(c.policy.kind);
    j["redundancy_k"] = c.policy.redundancy_k;
    j["samples"] = c.samples;
    j["sample_target_fp"] = c.sample_target_fp;
    j["loss_rate"] = c.loss_rate;
    j["node_bandwidth_bps"] = c.node_bandwidth_bps;
    j["builder_bandwidth_bps"] = c.builder_bandwidth_bps;
    j["latency"] = {{"min_rtt_ms", c.latency.min_rtt_ms},
                    {"mean_rtt_ms", c.latency.mean_rtt_ms},
                    {"max_rtt_ms", c.latency.max_rtt_ms},
                    {"vertices", c.vertices}};
    j["dead_fraction"] = c.dead_fraction;
    j["out_of_view_fraction"] = c.out_of_view_fraction;
    j["schedule"] = {{"kind", c.schedule_kind},
                     {"cb_boost", c.schedule.cb_boost},
                     {"max_rounds", c.schedule.max_rounds}};
    j["trigger_ms"] = c.trigger_us / 1000.0;
    j["slot_deadline_ms"] = c.slot_deadline_us / 1000.0;
    j["horizon_ms"] = c.horizon_us / 1000.0;
    j["withhold_max_pattern"] = c.withhold_max_pattern;
    j["seed"] = c.seed;
    return j.dump(2);
}

void apply_sweep_param(ScenarioConfig& c, const std::string& name, const std::string& value) {
    if (name == "node_count") {
        c.node_count = static_cast<std::uint32_t>(std::stoul(value));
    } else if (name == "dead_fraction") {
        c.dead_fraction = std::stod(value);
    } else if (name == "out_of_view_fraction") {
        c.out_of_view_fraction = std::stod(value);
    } else if (name == "loss_rate") {
        c.loss_rate = std::stod(value);
    } else if (name == "redundancy_k") {
        c.policy.redundancy_k = static_cast<std::uint32_t>(std::stoul(value));
    } else if (name == "policy") {
        c.policy.kind = policy_from_string(value);
    } else if (name == "grid_k") {
        c.grid.k = static_cast<std::uint32_t>(std::stoul(value));
    } else if (name == "samples") {
        c.samples = static_cast<std::uint32_t>(std::stoul(value));
    } else if (name == "seed") {
        c.seed = std::stoull(value);
    } else if (name == "schedule") {
        apply_schedule_kind(c, value);
    } else {
        throw std::invalid_argument("sweep: unknown parameter '" + name + "'");
    }
    c.validate();
}

std::vector<SweepRow> run_sweep(const ScenarioConfig& base, const std::string& param,
                                const std::vector<std::string>& values) {
    std::vector<std::future<ScenarioAggregates>> futures;
    futures.reserve(values.size());
    for (const std::string& v : values) {
        ScenarioConfig c = base;
        apply_sweep_param(c, param, v);
        futures.push_back(std::async(std::launch::async, [c]() {
            SlotResult r = run_slot(c);
            return compute_aggregates(r, c.slot_deadline_us);
        }));
    }
    std::vector<SweepRow> rows;
    rows.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        rows.push_back(SweepRow{values[i], futures[i].get()});
    }
    return rows;
}

}  // namespace das
