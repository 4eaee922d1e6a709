// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefixpack/serialization.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "prefixpack/error.hpp"

namespace prefixpack {

void to_json(Json& j, const WorkloadSpec& spec) {
    j = Json{{"B", spec.level_counts},
             {"L", spec.level_lengths},
             {"block_size", spec.block_size},
             {"heads", {{"q", spec.num_heads}, {"kv", spec.num_kv_heads}, {"dim", spec.head_dim}}},
             {"dtype_bytes", {{"kv", spec.kv_dtype_bytes}, {"intermediate", spec.intermediate_dtype_bytes}}}};
}

void from_json(const Json& j, WorkloadSpec& spec) {
    spec = WorkloadSpec{};
    j.at("B").get_to(spec.level_counts);
    j.at("L").get_to(spec.level_lengths);
    spec.block_size = j.value("block_size", spec.block_size);
    if (j.contains("heads")) {
        const auto& h = j.at("heads");
        spec.num_heads = h.value("q", spec.num_heads);
        spec.num_kv_heads = h.value("kv", spec.num_kv_heads);
        spec.head_dim = h.value("dim", spec.head_dim);
    }
    if (j.contains("dtype_bytes")) {
        const auto& b = j.at("dtype_bytes");
        spec.kv_dtype_bytes = b.value("kv", spec.kv_dtype_bytes);
        spec.intermediate_dtype_bytes = b.value("intermediate", spec.intermediate_dtype_bytes);
    }
}

void to_json(Json& j, const BlockTable& table) {
    j = Json{{"block_size", table.block_size},
             {"rows", table.rows},
             {"valid_tokens_last_block", table.valid_tokens_last_block}};
}

void from_json(const Json& j, BlockTable& table) {
    table = BlockTable{};
    table.block_size = j.value("block_size", table.block_size);
    j.at("rows").get_to(table.rows);
    if (j.contains("valid_tokens_last_block")) {
        j.at("valid_tokens_last_block").get_to(table.valid_tokens_last_block);
    } else {
        table.valid_tokens_last_block.assign(table.rows.size(), table.block_size);
    }
}

void to_json(Json& j, const Partition& partition) {
    Json packs = Json::array();
    for (const auto& p : partition.packs) {
        packs.push_back({{"queries", p.query_ids}, {"blocks", p.block_ids}, {"kv_len", p.kv_len}});
    }
    j = Json{{"packs", std::move(packs)}, {"fingerprint", partition.source_fingerprint}};
}

void from_json(const Json& j, Partition& partition) {
    partition = Partition{};
    for (const auto& p : j.at("packs")) {
        CtaPack pack;
        p.at("queries").get_to(pack.query_ids);
        p.at("blocks").get_to(pack.block_ids);
        p.at("kv_len").get_to(pack.kv_len);
        partition.packs.push_back(std::move(pack));
    }
    partition.source_fingerprint = j.value("fingerprint", std::string{});
    mark_partials(partition);
}

void to_json(Json& j, const HardwareModel& hw) {
    j = Json{{"name", hw.name},
             {"num_sms", hw.num_sms},
             {"smem_per_sm", hw.smem_per_sm},
             {"smem_per_cta", hw.smem_per_cta},
             {"reg_per_thread_limit", hw.reg_per_thread_limit},
             {"reg_file_per_sm", hw.reg_file_per_sm},
             {"bandwidth_bytes_per_ns", hw.bandwidth},
             {"inherent_latency_ns", hw.inherent_latency},
             {"tensor_fma_per_ns_per_sm", hw.tensor_throughput},
             {"l2_bytes", hw.l2_bytes}};
}

void from_json(const Json& j, HardwareModel& hw) {
    hw = HardwareModel{};
    hw.name = j.value("name", hw.name);
    j.at("num_sms").get_to(hw.num_sms);
    j.at("smem_per_sm").get_to(hw.smem_per_sm);
    j.at("smem_per_cta").get_to(hw.smem_per_cta);
    j.at("reg_per_thread_limit").get_to(hw.reg_per_thread_limit);
    j.at("reg_file_per_sm").get_to(hw.reg_file_per_sm);
    j.at("bandwidth_bytes_per_ns").get_to(hw.bandwidth);
    j.at("inherent_latency_ns").get_to(hw.inherent_latency);
    j.at("tensor_fma_per_ns_per_sm").get_to(hw.tensor_throughput);
    hw.l2_bytes = j.value("l2_bytes", hw.l2_bytes);
}

void to_json(Json& j, const RegisterUsageTable& regs) {
    Json entries = Json::array();
    for (const auto& [key, u] : regs.entries()) {
        entries.push_back({{"m", key.first},
                           {"n", key.second},
                           {"regs_per_thread", u.regs_per_thread},
                           {"regs_per_cta", u.regs_per_cta},
                           {"threads_per_cta", u.threads_per_cta}});
    }
    j = Json{{"synthetic", regs.synthetic}, {"entries", std::move(entries)}};
}

void from_json(const Json& j, RegisterUsageTable& regs) {
    regs = RegisterUsageTable{};
    regs.synthetic = j.value("synthetic", false);
    for (const auto& e : j.at("entries")) {
        RegisterUsage u;
        e.at("regs_per_thread").get_to(u.regs_per_thread);
        e.at("regs_per_cta").get_to(u.regs_per_cta);
        e.at("threads_per_cta").get_to(u.threads_per_cta);
        regs.set(e.at("m").get<int>(), e.at("n").get<int>(), u);
    }
}

void to_json(Json& j, const FeasibleSet& fs) {
    Json accepted = Json::array();
    for (const auto& c : fs.accepted) accepted.push_back({{"m", c.m}, {"n", c.n}, {"C", c.concurrency}});
    Json rejected = Json::array();
    for (const auto& r : fs.rejected) {
        rejected.push_back({{"m", r.m},
                            {"n", r.n},
                            {"violated", static_cast<int>(r.violated)},
                            {"label", std::string(constraint_label(r.violated))}});
    }
    j = Json{{"accepted", std::move(accepted)}, {"rejected", std::move(rejected)}};
}

void from_json(const Json& j, FeasibleSet& fs) {
    fs = FeasibleSet{};
    for (const auto& c : j.at("accepted")) {
        fs.accepted.push_back({c.at("m").get<int>(), c.at("n").get<int>(), c.at("C").get<int>()});
    }
    for (const auto& r : j.at("rejected")) {
        const int v = r.at("violated").get<int>();
        PREFIXPACK_CHECK(v >= 1 && v <= 3, ErrorCode::kParse, "violated constraint must be 1, 2 or 3");
        fs.rejected.push_back({r.at("m").get<int>(), r.at("n").get<int>(), static_cast<Constraint>(v)});
    }
}

void to_json(Json& j, const KvTileTree& tree) {
    Json bps = Json::array();
    for (const auto& [kv, n] : tree.breakpoints) bps.push_back({{"max_kv_len", kv}, {"n", n}});
    j = Json{{"m", tree.m}, {"breakpoints", std::move(bps)}};
}

void from_json(const Json& j, KvTileTree& tree) {
    tree = KvTileTree{};
    j.at("m").get_to(tree.m);
    for (const auto& bp : j.at("breakpoints")) {
        tree.breakpoints.emplace_back(bp.at("max_kv_len").get<std::int64_t>(), bp.at("n").get<int>());
    }
}

void to_json(Json& j, const SimReport& report) {
    Json streams = Json::array();
    for (const auto& [id, span] : report.stream_spans) {
        streams.push_back({{"stream", id}, {"start_ns", span.start}, {"end_ns", span.end}});
    }
    j = Json{{"makespan_ns", report.makespan},
             {"kv_bytes_loaded", report.kv_bytes_loaded},
             {"intermediate_bytes", report.intermediate_bytes},
             {"mem_waste", report.mem_waste},
             {"exec_bubble", report.exec_bubble},
             {"busy_slot_time_ns", report.busy_slot_time},
             {"streams", std::move(streams)}};
}

std::string sim_report_csv(const SimReport& report, const std::vector<CtaTask>& tasks) {
    std::ostringstream os;
    os.precision(17);
    os << "task,head,stream,sm,start_ns,end_ns,m,n,q,kv_len,split_index,split_of\n";
    for (const auto& tr : report.traces) {
        const CtaTask& t = tasks.at(tr.task);
        os << tr.task << ',' << tr.head << ',' << tr.stream_id << ',' << tr.sm << ',' << tr.start << ',' << tr.end << ','
           << t.cfg.m << ',' << t.cfg.n << ',' << t.q << ',' << t.kv_len << ',' << t.split_index << ','
           << t.split_of << '\n';
    }
    return os.str();
}

Json read_json_file(const std::string& path) {
    std::ifstream is(path);
    PREFIXPACK_CHECK(is.good(), ErrorCode::kIo, "cannot open " + path);
    try {
        return Json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, path + ": " + e.what());
    }
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        PREFIXPACK_CHECK(os.good(), ErrorCode::kIo, "cannot open " + tmp.string());
        os << content;
        os.flush();
        if (!os.good()) {
            os.close();
            std::filesystem::remove(tmp);
            throw Error(ErrorCode::kIo, "failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, target);
}

}  // namespace prefixpack
