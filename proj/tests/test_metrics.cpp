#include <doctest.h>

#include "das/metrics.hpp"
#include "das/scenario.hpp"

using namespace das;

TEST_CASE("nearest-rank percentiles") {
    std::vector<double> v{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    CHECK(percentile_nearest_rank(v, 50) == 50);
    CHECK(percentile_nearest_rank(v, 90) == 90);
    CHECK(percentile_nearest_rank(v, 99) == 100);
    CHECK(percentile_nearest_rank(v, 100) == 100);
    CHECK(percentile_nearest_rank({42}, 50) == 42);
    CHECK(percentile_nearest_rank({}, 50) == -1);
    // Unsorted input is fine.
    CHECK(percentile_nearest_rank({3, 1, 2}, 50) == 2);
}

TEST_CASE("node CSV round-trips exactly") {
    ScenarioConfig c;
    c.node_count = 30;
    c.grid.k = 16;
    c.assignment = {2, 2};
    c.policy = {PolicyKind::Redundant, 3};
    c.samples = 8;
    c.loss_rate = 0.1;
    c.dead_fraction = 0.1;
    c.latency = {5, 30, 100};
    c.seed = 11;
    SlotResult r = run_slot(c);
    std::vector<NodeCsvRow> rows = node_rows(r);
    const std::string csv = write_node_csv(rows);
    std::vector<NodeCsvRow> parsed = parse_node_csv(csv);
    REQUIRE(parsed.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(parsed[i] == rows[i]);
    }
    // Absent phases appear as empty fields, not sentinels like -1.
    CHECK(csv.find("-1") == std::string::npos);
}

TEST_CASE("aggregates are recomputable from the per-node rows") {
    ScenarioConfig c;
    c.node_count = 50;
    c.grid.k = 16;
    c.assignment = {2, 2};
    c.samples = 10;
    c.loss_rate = 0.05;
    c.latency = {5, 30, 100};
    c.seed = 4;
    SlotResult r = run_slot(c);
    ScenarioAggregates agg = compute_aggregates(r, c.slot_deadline_us);

    std::vector<NodeCsvRow> rows = parse_node_csv(write_node_csv(node_rows(r)));
    std::vector<double> sampling_ms;
    std::uint32_t live = 0, success = 0;
    for (const NodeCsvRow& row : rows) {
        if (row.dead) continue;
        ++live;
        if (row.time_to_sampling_us >= 0) {
            sampling_ms.push_back(row.time_to_sampling_us / 1000.0);
            if (row.time_to_sampling_us <= c.slot_deadline_us) ++success;
        }
    }
    CHECK(agg.live_nodes == live);
    CHECK(agg.success_fraction == doctest::Approx(double(success) / live));
    CHECK(agg.sampling.p50_ms == percentile_nearest_rank(sampling_ms, 50));
    CHECK(agg.sampling.p99_ms == percentile_nearest_rank(sampling_ms, 99));
}

TEST_CASE("scenario JSON round-trip and validation") {
    const std::string text = R"({
        "node_count": 64,
        "grid_k": 16,
        "rows_per_node": 2,
        "cols_per_node": 2,
        "policy": "single",
        "loss_rate": 0.01,
        "latency": {"min_rtt_ms": 5, "mean_rtt_ms": 20, "max_rtt_ms": 90},
        "schedule": {"kind": "constant"},
        "seed": 99
    })";
    ScenarioConfig c = parse_scenario_json(text);
    CHECK(c.node_count == 64);
    CHECK(c.grid.k == 16);
    CHECK(c.policy.kind == PolicyKind::Single);
    CHECK(c.schedule_kind == "constant");
    CHECK(c.schedule.redundancy_k(5) == 1);
    CHECK(c.seed == 99);

    // Echo parses back to the same scenario.
    ScenarioConfig echo = parse_scenario_json(scenario_to_json(c));
    CHECK(echo.node_count == c.node_count);
    CHECK(echo.schedule_kind == c.schedule_kind);
    CHECK(echo.seed == c.seed);

    CHECK_THROWS(parse_scenario_json(R"({"nodecount": 10})"));
    CHECK_THROWS(parse_scenario_json(R"({"loss_rate": 7})"));
    CHECK_THROWS(parse_scenario_json(R"({"policy": "carrier-pigeon"})"));
}

TEST_CASE("sweep applies parameters and returns one row per value") {
    ScenarioConfig base;
    base.node_count = 30;
    base.grid.k = 16;
    base.assignment = {2, 2};
    base.samples = 6;
    base.loss_rate = 0.0;
    base.latency = {5, 10, 30};
    base.seed = 6;
    auto rows = run_sweep(base, "dead_fraction", {"0", "0.5"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].value == "0");
    CHECK(rows[1].value == "0.5");
    CHECK(rows[0].aggregates.live_nodes == 30);
    CHECK(rows[1].aggregates.live_nodes == 15);

    ScenarioConfig c = base;
    CHECK_THROWS_AS(apply_sweep_param(c, "warp_factor", "9"), std::invalid_argument);
    apply_sweep_param(c, "policy", "minimal");
    CHECK(c.policy.kind == PolicyKind::Minimal);
}

TEST_CASE("aggregate CSV has one column per header field") {
    ScenarioAggregates agg;
    const std::string header = write_aggregate_csv_header();
    const std::string row = write_aggregate_csv_row("x", agg);
    CHECK(std::count(header.begin(), header.end(), ',') ==
          std::count(row.begin(), row.end(), ','));
}
