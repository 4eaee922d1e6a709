// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "prefixpack/attention.hpp"
#include "prefixpack/error.hpp"
#include "prefixpack/pack_scheduler.hpp"
#include "prefixpack/scenario.hpp"
#include "prefixpack/serialization.hpp"
#include "prefixpack/tensor_dump.hpp"

using namespace prefixpack;

namespace {

constexpr int kExitError = 1;
constexpr int kExitInvalidSpec = 2;
constexpr int kExitVerifyFailed = 3;
constexpr int kExitInfeasible = 4;

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::kInvalidSpec: return kExitInvalidSpec;
        case ErrorCode::kNoFeasibleConfig:
        case ErrorCode::kEmptyFeasibleSet: return kExitInfeasible;
        default: return kExitError;
    }
}

HardwareModel hardware_from(const std::string& path) {
    if (!path.empty()) return load_hardware(path);
    if (const char* env = std::getenv("PREFIXPACK_HW_PROFILE"); env != nullptr && *env != '\0') {
        return load_hardware(env);
    }
    return load_hardware(default_profile_path("a100.json"));
}

RegisterUsageTable registers_from(const std::string& path, int head_dim) {
    return path.empty() ? synthetic_register_table(head_dim) : load_json<RegisterUsageTable>(path);
}

void print_census(const BlockTable& table, const WorkloadSpec& spec) {
    const auto min_bytes = theoretical_min_kv_bytes(table, spec);
    const auto qc_bytes = account_traffic(baseline_query_centric(table), spec).kv_bytes;
    std::cout << "queries:                  " << table.num_queries() << '\n'
              << "distinct blocks:          " << distinct_block_count(table) << '\n'
              << "distinct kv tokens:       " << distinct_kv_tokens(table) << '\n'
              << "theoretical min kv bytes: " << min_bytes << '\n'
              << "query-centric kv bytes:   " << qc_bytes << '\n'
              << "redundancy ratio:         " << std::fixed << std::setprecision(4)
              << static_cast<double>(qc_bytes) / static_cast<double>(min_bytes) << '\n';
}

int cmd_gen(const std::string& spec_path, std::uint64_t seed, const std::string& out) {
    const WorkloadSpec spec = load_json<WorkloadSpec>(spec_path);
    const BlockTable table = generate_workload(spec, seed);
    write_file_atomic(out, Json(table).dump() + "\n");
    print_census(table, spec);
    return 0;
}

void print_rows(const ScenarioResult& result) {
    std::cout << std::left << std::setw(20) << "strategy" << std::right << std::setw(16) << "kv_bytes"
              << std::setw(16) << "interm_bytes" << std::setw(16) << "makespan_ns" << std::setw(10) << "I_mem"
              << std::setw(10) << "I_exe" << std::setw(8) << "packs" << std::setw(10) << "verified" << '\n';
    for (const auto& r : result.results) {
        std::cout << std::left << std::setw(20) << strategy_name(r.strategy) << std::right << std::setw(16)
                  << r.traffic.kv_bytes << std::setw(16) << r.traffic.intermediate_bytes << std::setw(16)
                  << std::fixed << std::setprecision(1) << r.sim.makespan << std::setw(10) << std::setprecision(4)
                  << r.sim.mem_waste << std::setw(10) << r.sim.exec_bubble << std::setw(8) << r.pack_count
                  << std::setw(10) << (r.verified ? (*r.verified ? "yes" : "NO") : "-") << '\n';
    }
}

int cmd_run(const std::string& scenario_path, bool verify) {
    ScenarioConfig cfg = load_scenario(scenario_path);
    cfg.verify = cfg.verify || verify;
    const ScenarioResult result = run_scenario(cfg);
    if (!result.all_verified()) {
        print_rows(result);
        std::cerr << "verification failed; no report written\n";
        return kExitVerifyFailed;
    }
    write_scenario_outputs(cfg, result);
    print_rows(result);
    return 0;
}

std::vector<std::int64_t> parse_values(const std::string& list) {
    std::vector<std::int64_t> values;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            values.push_back(std::stoll(item));
        } catch (const std::exception&) {
            throw Error(ErrorCode::kInvalidArgument, "bad sweep value '" + item + "'");
        }
    }
    return values;
}

int cmd_sweep(const std::string& scenario_path, const std::string& axis, const std::string& values,
              const std::string& out) {
    const ScenarioConfig cfg = load_scenario(scenario_path);
    const SweepResult result = run_sweep(cfg, parse_sweep_axis(axis), parse_values(values));
    if (!result.all_verified) {
        std::cerr << "verification failed at one or more sweep points\n";
        return kExitVerifyFailed;
    }
    if (out.empty()) {
        std::cout << result.csv;
    } else {
        write_file_atomic(out, result.csv);
    }
    return 0;
}

int cmd_verify(const std::string& workload_path, const std::string& strategy, const std::string& partition_path,
               std::uint64_t seed, double tol, bool fp32, const std::string& hw_path, const std::string& dump) {
    const Json j = read_json_file(workload_path);
    WorkloadSpec spec;
    BlockTable table;
    try {
        if (j.contains("rows")) {
            table = j.get<BlockTable>();
            spec.block_size = table.block_size;
        } else {
            spec = j.get<WorkloadSpec>();
            table = generate_workload(spec, seed);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, workload_path + ": " + e.what());
    }
    table.validate();

    std::vector<AttentionUnit> units;
    if (!partition_path.empty()) {
        units = units_of(load_json<Partition>(partition_path));
    } else {
        const HardwareModel hw = hardware_from(hw_path);
        const TileContext tiles = TileContext::build(hw, synthetic_register_table(spec.head_dim), spec);
        units = units_of(plan_strategy(parse_strategy(strategy), table, tiles).tasks);
    }

    const AttentionShape shape = AttentionShape::from(spec);
    const KvStore store(table, shape, seed);
    const Matrix<double> q = random_queries(table.num_queries(), shape, seed);
    const Matrix<double> ref = reference_attention(table, store, q, shape);
    const Matrix<double> out = run_packed_attention(
        table, units, store, q, shape, fp32 ? IntermediatePrecision::kFloat32 : IntermediatePrecision::kDouble);
    const double err = max_relative_error(out, ref, shape);
    if (!dump.empty()) {
        write_tensor_dump(dump, {named_tensor("q", q), named_tensor("packed_out", out), named_tensor("reference_out", ref)});
    }
    std::cout << "units: " << units.size() << "  max relative error: " << std::scientific << std::setprecision(3)
              << err << "  tolerance: " << tol << '\n';
    if (err > tol) {
        std::cout << "FAIL\n";
        return kExitVerifyFailed;
    }
    std::cout << "PASS\n";
    return 0;
}

int cmd_pack(const std::string& table_path, const std::string& strategy, const std::string& out) {
    const BlockTable table = load_json<BlockTable>(table_path);
    Partition p;
    if (strategy == "naive") {
        p = naive_partition(table);
    } else if (strategy == "query_centric") {
        p = baseline_query_centric(table);
    } else if (strategy == "pat") {
        p = heuristic_partition(table);
    } else {
        throw Error(ErrorCode::kInvalidArgument, "pack supports pat, naive and query_centric");
    }
    const std::string text = Json(p).dump() + "\n";
    if (out.empty()) {
        std::cout << text;
    } else {
        write_file_atomic(out, text);
        std::cout << p.packs.size() << " packs\n";
    }
    return 0;
}

int cmd_tiles(const std::string& hw_path, const std::string& regs_path, const std::string& spec_path,
              const std::string& out) {
    const HardwareModel hw = hardware_from(hw_path);
    WorkloadSpec spec;
    if (!spec_path.empty()) spec = load_json<WorkloadSpec>(spec_path);
    const TileContext tiles = TileContext::build(hw, registers_from(regs_path, spec.head_dim), spec);
    Json trees = Json::array();
    for (const auto& [m, tree] : tiles.selector.trees()) trees.push_back(tree);
    const Json doc{{"hardware", hw.name}, {"feasible", tiles.feasible}, {"n_trees", std::move(trees)}};
    if (out.empty()) {
        std::cout << doc.dump(2) << '\n';
    } else {
        write_file_atomic(out, doc.dump(2) + "\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prefixpack: prefix-aware decode-attention packing, tiling and simulation"};
    app.require_subcommand(1);

    std::string spec_path, out, scenario, axis, values, workload, strategy = "pat", partition, hw_path, regs_path, dump;
    std::uint64_t seed = 0;
    double tol = 1e-10;
    bool verify = false;
    bool fp32 = false;

    auto* gen = app.add_subcommand("gen", "Generate a block table from a (B, L) workload spec");
    gen->add_option("--spec", spec_path, "Workload spec JSON")->required();
    gen->add_option("--seed", seed, "Block-id seed");
    gen->add_option("--out", out, "Output block-table JSON")->required();

    auto* run = app.add_subcommand("run", "Run every strategy of a scenario and write the report");
    run->add_option("--scenario", scenario, "Scenario JSON")->required();
    run->add_flag("--verify", verify, "Check packed attention against full attention");

    auto* sweep = app.add_subcommand("sweep", "Repeat a scenario across a parameter grid");
    sweep->add_option("--scenario", scenario, "Scenario JSON")->required();
    sweep->add_option("--axis", axis, "batch | prefix_len | kv_len | fanout")->required();
    sweep->add_option("--values", values, "Comma-separated grid values")->required();
    sweep->add_option("--out", out, "Output CSV (stdout when omitted)");

    auto* ver = app.add_subcommand("verify", "Compare packed attention with full attention");
    ver->add_option("--workload", workload, "Workload spec or block-table JSON")->required();
    ver->add_option("--strategy", strategy, "Strategy producing the tasks");
    ver->add_option("--partition", partition, "Partition JSON to verify instead of a strategy");
    ver->add_option("--seed", seed, "Seed for block ids and tensors");
    ver->add_option("--tol", tol, "Maximum relative error");
    ver->add_flag("--fp32-intermediates", fp32, "Round-trip split partials through float");
    ver->add_option("--hardware", hw_path, "Hardware profile JSON");
    ver->add_option("--dump", dump, "Write Q and outputs as a binary tensor dump");

    auto* pack = app.add_subcommand("pack", "Pack a block table into a partition");
    pack->add_option("--table", spec_path, "Block-table JSON")->required();
    pack->add_option("--strategy", strategy, "pat | naive | query_centric");
    pack->add_option("--out", out, "Output partition JSON (stdout when omitted)");

    auto* tiles = app.add_subcommand("tiles", "Solve the feasible tile set and calibrate n decision trees");
    tiles->add_option("--hardware", hw_path, "Hardware profile JSON");
    tiles->add_option("--registers", regs_path, "Register usage JSON (synthetic when omitted)");
    tiles->add_option("--spec", spec_path, "Workload spec for head and dtype sizes");
    tiles->add_option("--out", out, "Output JSON (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen(spec_path, seed, out);
        if (*run) return cmd_run(scenario, verify);
        if (*sweep) return cmd_sweep(scenario, axis, values, out);
        if (*ver) return cmd_verify(workload, strategy, partition, seed, tol, fp32, hw_path, dump);
        if (*pack) return cmd_pack(spec_path, strategy, out);
        if (*tiles) return cmd_tiles(hw_path, regs_path, spec_path, out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
