// CLI front-end: scenario execution, parameter sweeps, and the analytical
// subcommands (fp-bound, min-samples, policy-volume).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "das/availability.hpp"
#include "das/metrics.hpp"
#include "das/scenario.hpp"
#include "das/simnet.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

das::ScenarioConfig load_config(const std::string& path, std::uint64_t seed_override,
                                bool has_seed) {
    das::ScenarioConfig config =
        path.empty() ? das::ScenarioConfig{} : das::parse_scenario_json(read_file(path));
    if (has_seed) config.seed = seed_override;
    config.validate();
    return config;
}

std::vector<std::string> split_values(const std::string& csv) {
    std::vector<std::string> values;
    std::istringstream in(csv);
    std::string v;
    while (std::getline(in, v, ',')) {
        if (!v.empty()) values.push_back(v);
    }
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blob dissemination and availability-sampling simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool has_seed = false;

    auto* simulate = app.add_subcommand("simulate", "Run one slot and write metrics CSVs");
    simulate->add_option("--config", config_path, "Scenario config (JSON)");
    simulate->add_option("--out", out_dir, "Output directory");
    simulate->add_option("--seed", seed, "Seed override")->each([&](const std::string&) {
        has_seed = true;
    });

    std::string sweep_param;
    std::string sweep_values;
    std::string sweep_out;
    auto* sweep = app.add_subcommand("sweep", "Run a scenario across parameter values");
    sweep->add_option("--config", config_path, "Scenario config (JSON)");
    sweep->add_option("--param", sweep_param, "Config key to vary")->required();
    sweep->add_option("--values", sweep_values, "Comma-separated values")->required();
    sweep->add_option("--out", sweep_out, "Aggregate CSV path (default: stdout)");
    sweep->add_option("--seed", seed, "Seed override")->each([&](const std::string&) {
        has_seed = true;
    });

    std::uint32_t opt_s = 73;
    std::uint32_t opt_k = 256;
    auto* fp = app.add_subcommand("fp-bound", "False-positive bound for s samples");
    fp->add_option("--s", opt_s, "Samples per node");
    fp->add_option("--k", opt_k, "Original matrix dimension (n = 2k)");

    double opt_target = 1e-9;
    auto* ms = app.add_subcommand("min-samples", "Smallest s meeting a false-positive target");
    ms->add_option("--target", opt_target, "Target false-positive probability");
    ms->add_option("--k", opt_k, "Original matrix dimension (n = 2k)");

    std::string opt_policy = "redundant";
    std::uint32_t opt_redundancy = 8;
    auto* pv = app.add_subcommand("policy-volume", "Outgoing byte budget of a seeding policy");
    pv->add_option("--policy", opt_policy, "minimal | single | redundant");
    pv->add_option("--redundancy", opt_redundancy, "Copies per parcel (redundant)");
    pv->add_option("--k", opt_k, "Original matrix dimension (n = 2k)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) {
            das::ScenarioConfig config = load_config(config_path, seed, has_seed);
            das::SlotResult result = das::run_slot(config);
            das::ScenarioAggregates agg =
                das::compute_aggregates(result, config.slot_deadline_us);
            std::filesystem::create_directories(out_dir);
            write_file(out_dir + "/nodes.csv", das::write_node_csv(das::node_rows(result)));
            write_file(out_dir + "/aggregate.csv",
                       das::write_aggregate_csv_header() +
                           das::write_aggregate_csv_row("run", agg));
            write_file(out_dir + "/config.json", das::scenario_to_json(config));
            std::printf("nodes=%u live=%u samples=%u deadline_success=%.4f\n", agg.nodes,
                        agg.live_nodes, result.samples_per_node, agg.success_fraction);
        } else if (sweep->parsed()) {
            das::ScenarioConfig config = load_config(config_path, seed, has_seed);
            std::vector<std::string> values = split_values(sweep_values);
            if (values.empty()) throw std::invalid_argument("sweep: no values given");
            std::vector<das::SweepRow> rows = das::run_sweep(config, sweep_param, values);
            std::string csv = das::write_aggregate_csv_header();
            for (const das::SweepRow& row : rows) {
                csv += das::write_aggregate_csv_row(sweep_param + "=" + row.value,
                                                    row.aggregates);
            }
            if (sweep_out.empty()) {
                std::fputs(csv.c_str(), stdout);
            } else {
                write_file(sweep_out, csv);
            }
        } else if (fp->parsed()) {
            das::GridParams grid;
            grid.k = opt_k;
            std::printf("%.6e\n", das::false_positive_bound({opt_s, grid}));
        } else if (ms->parsed()) {
            das::GridParams grid;
            grid.k = opt_k;
            std::printf("%u\n", das::min_samples_for(opt_target, grid));
        } else if (pv->parsed()) {
            das::GridParams grid;
            grid.k = opt_k;
            das::SeedingPolicy policy;
            policy.redundancy_k = opt_redundancy;
            if (opt_policy == "minimal") {
                policy.kind = das::PolicyKind::Minimal;
            } else if (opt_policy == "single") {
                policy.kind = das::PolicyKind::Single;
            } else if (opt_policy == "redundant") {
                policy.kind = das::PolicyKind::Redundant;
            } else {
                throw std::invalid_argument("unknown policy '" + opt_policy + "'");
            }
            std::printf("%llu\n",
                        static_cast<unsigned long long>(das::policy_volume_bytes(policy, grid)));
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
