// Scenario configuration text format (JSON) and parameter sweeps.

#pragma once

#include <string>
#include <vector>

#include "das/metrics.hpp"
#include "das/simnet.hpp"

namespace das {

// Parses a scenario config. Every key is optional; unknown keys are
// rejected. See README for the documented key set.
ScenarioConfig parse_scenario_json(const std::string& json_text);

std::string scenario_to_json(const ScenarioConfig& config);

// Applies one sweep parameter. Recognized: node_count, dead_fraction,
// out_of_view_fraction, loss_rate, redundancy_k, policy, grid_k, samples,
// seed, schedule.
void apply_sweep_param(ScenarioConfig& config, const std::string& name,
                       const std::string& value);

struct SweepRow {
    std::string value;
    ScenarioAggregates aggregates;
};

// Runs the scenario once per value, in parallel. Each run gets the same base
// seed; results are deterministic per (config, value).
std::vector<SweepRow> run_sweep(const ScenarioConfig& base, const std::string& param,
                                const std::vector<std::string>& values);

}  // namespace das
