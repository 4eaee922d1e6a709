// Copyright (C) 2026 The PrefixPack Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefixpack/exec_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <queue>
#include <set>
#include <tuple>
#include <unordered_map>

#include "prefixpack/error.hpp"

namespace prefixpack {

namespace {

std::int64_t kv_bytes_per_token(const WorkloadSpec& spec) {
    return static_cast<std::int64_t>(spec.head_dim) * spec.kv_dtype_bytes * 2 * spec.num_kv_heads;
}

std::int64_t partial_bytes(const WorkloadSpec& spec) {
    // Partial write plus merge read: weighted sum, running max and exp-sum per query head.
    return 2LL * (spec.head_dim + 2) * spec.intermediate_dtype_bytes * spec.num_heads;
}

std::int64_t model_partial_bytes(const WorkloadSpec& spec) {
    return 2LL * spec.head_dim * spec.intermediate_dtype_bytes;
}

template <typename Units>
TrafficReport account(const std::vector<Units>& units, const WorkloadSpec& spec) {
    std::unordered_map<QueryId, int> appearances;
    for (const auto& u : units) {
        for (QueryId q : u.queries()) ++appearances[q];
    }
    TrafficReport r;
    for (const auto& u : units) {
        r.kv_bytes += u.kv_len() * kv_bytes_per_token(spec);
        r.model_kv_bytes += u.kv_len() * spec.head_dim * spec.kv_dtype_bytes;
        std::int64_t split = 0;
        for (QueryId q : u.queries()) split += appearances[q] > 1 ? 1 : 0;
        r.intermediate_bytes += split * partial_bytes(spec);
        r.model_intermediate_bytes += split * model_partial_bytes(spec);
    }
    r.total_bytes = r.kv_bytes + r.intermediate_bytes;
    r.model_total_bytes = r.model_kv_bytes + r.model_intermediate_bytes;
    return r;
}

struct PackUnit {
    const CtaPack* p;
    const std::vector<QueryId>& queries() const { return p->query_ids; }
    std::int64_t kv_len() const { return p->kv_len; }
};

struct TaskUnit {
    const CtaTask* t;
    const std::vector<QueryId>& queries() const { return t->pack->query_ids; }
    std::int64_t kv_len() const { return t->kv_len; }
};

std::int64_t tile_count(const CtaTask& t) { return (t.kv_len + t.cfg.n - 1) / t.cfg.n; }

// A CTA covers one kv head and the query heads of its group.
double tile_bytes(const CtaTask& t, const WorkloadSpec& spec) {
    return static_cast<double>(t.cfg.n) * spec.head_dim * spec.kv_dtype_bytes * 2;
}

double compute_tile_ns(const CtaTask& t, const HardwareModel& hw, const WorkloadSpec& spec) {
    const double group = static_cast<double>(spec.num_heads) / spec.num_kv_heads;
    return 2.0 * t.cfg.m * t.cfg.n * spec.head_dim * group / hw.tensor_throughput;
}

}  // namespace

TrafficReport account_traffic(const Partition& partition, const WorkloadSpec& spec) {
    std::vector<PackUnit> units;
    units.reserve(partition.packs.size());
    for (const auto& p : partition.packs) units.push_back({&p});
    return account(units, spec);
}

TrafficReport account_task_traffic(const std::vector<CtaTask>& tasks, const WorkloadSpec& spec) {
    std::vector<TaskUnit> units;
    units.reserve(tasks.size());
    for (const auto& t : tasks) units.push_back({&t});
    return account(units, spec);
}

std::int64_t theoretical_min_kv_bytes(const BlockTable& table, const WorkloadSpec& spec) {
    return distinct_kv_tokens(table) * kv_bytes_per_token(spec);
}

std::int64_t theoretical_min_model_bytes(const BlockTable& table, const WorkloadSpec& spec) {
    return distinct_kv_tokens(table) * spec.head_dim * spec.kv_dtype_bytes;
}

Partition split_oversized_packs(const Partition& partition, int max_queries) {
    PREFIXPACK_CHECK(max_queries >= 1, ErrorCode::kInvalidArgument, "max_queries must be positive");
    Partition out;
    out.source_fingerprint = partition.source_fingerprint;
    for (const auto& pack : partition.packs) {
        const int q = pack.q();
        if (q <= max_queries) {
            out.packs.push_back(pack);
            continue;
        }
        const int groups = split_query_count(q, max_queries);
        const int base = q / groups;
        const int extra = q % groups;
        auto it = pack.query_ids.begin();
        for (int g = 0; g < groups; ++g) {
            const int size = base + (g < extra ? 1 : 0);
            CtaPack part = pack;
            part.query_ids.assign(it, it + size);
            it += size;
            out.packs.push_back(std::move(part));
        }
    }
    mark_partials(out);
    return out;
}

namespace {

CtaTask task_for(const Partition& partition, std::size_t index, const TileConfig& cfg) {
    const CtaPack& pack = partition.packs[index];
    PREFIXPACK_CHECK(pack.q() >= 1 && pack.kv_len >= 1, ErrorCode::kInvalidArgument,
                     "pack " + std::to_string(index) + " is empty");
    PREFIXPACK_CHECK(pack.q() <= cfg.m, ErrorCode::kInvalidArgument,
                     "pack " + std::to_string(index) + " holds more queries than its tile rows");
    CtaTask t;
    t.pack = std::make_shared<const CtaPack>(pack);
    t.pack_index = index;
    t.cfg = cfg;
    t.kv_len = pack.kv_len;
    t.q = pack.q();
    return t;
}

}  // namespace

std::vector<CtaTask> make_tasks(const Partition& partition, const TileSelector& selector) {
    std::vector<CtaTask> tasks;
    tasks.reserve(partition.packs.size());
    for (std::size_t i = 0; i < partition.packs.size(); ++i) {
        const CtaPack& pack = partition.packs[i];
        tasks.push_back(task_for(partition, i, selector.select(pack.q(), pack.kv_len)));
    }
    return tasks;
}

std::vector<CtaTask> make_tasks(const Partition& partition, const TileConfig& fixed) {
    std::vector<CtaTask> tasks;
    tasks.reserve(partition.packs.size());
    for (std::size_t i = 0; i < partition.packs.size(); ++i) {
        tasks.push_back(task_for(partition, i, fixed));
    }
    return tasks;
}

std::vector<CtaTask> split_long_kv(const std::vector<CtaTask>& tasks, int block_size) {
    PREFIXPACK_CHECK(block_size >= 1, ErrorCode::kInvalidArgument, "block_size must be positive");
    if (tasks.empty()) return {};
    std::int64_t total = 0;
    for (const auto& t : tasks) total += t.kv_len;
    const auto count = static_cast<std::int64_t>(tasks.size());

    std::vector<CtaTask> out;
    for (const auto& t : tasks) {
        // kv_len > mean, in integers: kv_len * count > total.
        if (t.kv_len * count <= total) {
            out.push_back(t);
            continue;
        }
        const std::int64_t blocks = (t.kv_len + block_size - 1) / block_size;
        const std::int64_t k = std::min(blocks, (t.kv_len * count + total - 1) / total);
        const std::int64_t base = blocks / k;
        const std::int64_t extra = blocks % k;
        std::int64_t block = 0;
        for (std::int64_t j = 0; j < k; ++j) {
            const std::int64_t nb = base + (j < extra ? 1 : 0);
            const std::int64_t begin = block * block_size;
            const std::int64_t end = std::min((block + nb) * block_size, t.kv_len);
            block += nb;
            CtaTask part = t;
            part.token_begin = t.token_begin + begin;
            part.kv_len = end - begin;
            part.split_index = static_cast<int>(j);
            part.split_of = static_cast<int>(k);
            out.push_back(std::move(part));
        }
    }
    return out;
}

std::map<int, std::vector<CtaTask>> assign_streams(std::vector<CtaTask>& tasks) {
    std::set<std::pair<int, int>> configs;
    for (const auto& t : tasks) configs.insert({t.cfg.m, t.cfg.n});
    std::map<std::pair<int, int>, int> id_of;
    for (const auto& c : configs) id_of.emplace(c, static_cast<int>(id_of.size()));

    std::map<int, std::vector<CtaTask>> streams;
    for (auto& t : tasks) {
        t.stream_id = id_of.at({t.cfg.m, t.cfg.n});
        streams[t.stream_id].push_back(t);
    }
    return streams;
}

std::vector<TaskTrace> SimReport::sm_timeline(int sm) const {
    std::vector<TaskTrace> out;
    for (const auto& tr : traces) {
        if (tr.sm == sm) out.push_back(tr);
    }
    std::sort(out.begin(), out.end(), [](const TaskTrace& a, const TaskTrace& b) {
        return std::tie(a.start, a.task, a.head) < std::tie(b.start, b.task, b.head);
    });
    return out;
}

double isolated_latency(const CtaTask& task, const HardwareModel& hw, const WorkloadSpec& spec) {
    const double mem = tile_bytes(task, spec) / hw.bandwidth;
    return hw.inherent_latency +
           static_cast<double>(tile_count(task)) * std::max(mem, compute_tile_ns(task, hw, spec));
}

namespace {

// Processor-sharing bandwidth: every active loader receives B / k. `delivered` integrates
// the per-loader rate, so a tile that started loading when delivered == v0 with b bytes
// finishes when delivered reaches v0 + b regardless of how k changes in between.
class Engine {
public:
    Engine(const std::vector<CtaTask>& tasks, const HardwareModel& hw, const WorkloadSpec& spec,
           const SimOptions& options)
        : m_tasks(tasks), m_hw(hw), m_spec(spec), m_options(options),
          m_heads(static_cast<std::size_t>(std::max(spec.num_kv_heads, 1))) {}

    SimReport run();

private:
    const CtaTask& task_of(std::size_t cta) const { return m_tasks[cta / m_heads]; }

    enum class Kind { kRampDone, kComputeDone };

    struct TimedEvent {
        double time;
        int stream;
        std::size_t task;
        Kind kind;
        bool operator>(const TimedEvent& o) const {
            return std::tie(time, stream, task, kind) > std::tie(o.time, o.stream, o.task, o.kind);
        }
    };

    struct LoadEvent {
        double delivered;
        int stream;
        std::size_t task;
        bool operator>(const LoadEvent& o) const {
            return std::tie(delivered, stream, task) > std::tie(o.delivered, o.stream, o.task);
        }
    };

    struct Running {
        std::int64_t tiles_left = 0;
        bool mem_done = false;
        bool compute_done = false;
    };

    void dispatch();
    bool try_start(std::size_t task);
    void start_tile(std::size_t task);
    void on_part_done(std::size_t task);
    void finish(std::size_t task);

    const std::vector<CtaTask>& m_tasks;
    const HardwareModel& m_hw;
    const WorkloadSpec& m_spec;
    SimOptions m_options;
    std::size_t m_heads;

    std::int64_t m_units = 1;
    std::vector<std::int64_t> m_free;
    std::vector<std::int64_t> m_weight;
    std::map<int, std::deque<std::size_t>> m_pending;
    std::map<int, std::size_t> m_outstanding;
    std::vector<Running> m_running;
    std::priority_queue<TimedEvent, std::vector<TimedEvent>, std::greater<>> m_timed;
    std::priority_queue<LoadEvent, std::vector<LoadEvent>, std::greater<>> m_loads;
    double m_now = 0.0;
    double m_delivered = 0.0;
    std::int64_t m_loaders = 0;
    SimReport m_report;
};

bool Engine::try_start(std::size_t task) {
    const std::int64_t w = m_weight[task];
    int best = -1;
    for (int sm = 0; sm < static_cast<int>(m_free.size()); ++sm) {
        if (m_free[sm] >= w && (best < 0 || m_free[sm] > m_free[best])) best = sm;
    }
    if (best < 0) return false;
    m_free[best] -= w;
    TaskTrace& tr = m_report.traces[task];
    tr.sm = best;
    tr.start = m_now;
    m_running[task].tiles_left = tile_count(task_of(task));
    m_timed.push({m_now + m_hw.inherent_latency, task_of(task).stream_id, task, Kind::kRampDone});
    return true;
}

void Engine::dispatch() {
    for (auto& [stream, queue] : m_pending) {
        if (m_options.serial_streams) {
            // Later streams wait until every earlier stream has drained.
            bool blocked = false;
            for (const auto& [other, left] : m_outstanding) {
                if (other < stream && left > 0) blocked = true;
            }
            if (blocked) break;
        }
        while (!queue.empty() && try_start(queue.front())) queue.pop_front();
    }
}

void Engine::start_tile(std::size_t task) {
    const CtaTask& t = task_of(task);
    Running& r = m_running[task];
    r.mem_done = false;
    r.compute_done = false;
    m_loads.push({m_delivered + tile_bytes(t, m_spec), t.stream_id, task});
    ++m_loaders;
    m_timed.push({m_now + compute_tile_ns(t, m_hw, m_spec), t.stream_id, task, Kind::kComputeDone});
}

void Engine::on_part_done(std::size_t task) {
    Running& r = m_running[task];
    if (!(r.mem_done && r.compute_done)) return;
    if (--r.tiles_left > 0) {
        start_tile(task);
    } else {
        finish(task);
    }
}

void Engine::finish(std::size_t task) {
    TaskTrace& tr = m_report.traces[task];
    tr.end = m_now;
    m_free[tr.sm] += m_weight[task];
    --m_outstanding[task_of(task).stream_id];
    StreamSpan& span = m_report.stream_spans[tr.stream_id];
    span.end = std::max(span.end, tr.end);
}

SimReport Engine::run() {
    const std::size_t n = m_tasks.size() * m_heads;
    m_report.traces.resize(n);
    if (n == 0) return m_report;
    m_hw.validate();
    PREFIXPACK_CHECK(m_spec.num_kv_heads >= 1 && m_spec.num_heads % m_spec.num_kv_heads == 0,
                     ErrorCode::kInvalidSpec, "heads must be a positive multiple of kv heads");

    for (const auto& t : m_tasks) {
        PREFIXPACK_CHECK(t.cfg.concurrency >= 1, ErrorCode::kNoFeasibleConfig,
                         "task with (m=" + std::to_string(t.cfg.m) + ", n=" + std::to_string(t.cfg.n) +
                             ") has no resident concurrency");
        PREFIXPACK_CHECK(t.q >= 1 && t.q <= t.cfg.m, ErrorCode::kInvalidArgument,
                         "task query count must be in [1, m]");
        PREFIXPACK_CHECK(t.kv_len >= 1 && t.cfg.n >= 1, ErrorCode::kInvalidArgument,
                         "task needs a non-empty KV span");
        m_units = std::lcm(m_units, static_cast<std::int64_t>(t.cfg.concurrency));
    }
    m_free.assign(static_cast<std::size_t>(m_hw.num_sms), m_units);
    m_weight.resize(n);
    m_running.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const CtaTask& t = task_of(i);
        m_weight[i] = m_units / t.cfg.concurrency;
        m_pending[t.stream_id].push_back(i);
        ++m_outstanding[t.stream_id];
        m_report.traces[i].task = i / m_heads;
        m_report.traces[i].head = static_cast<int>(i % m_heads);
        m_report.traces[i].stream_id = t.stream_id;
    }

    dispatch();
    std::size_t done = 0;
    while (!m_timed.empty() || !m_loads.empty()) {
        double next = m_timed.empty() ? INFINITY : m_timed.top().time;
        if (!m_loads.empty()) {
            const double per_loader = m_hw.bandwidth / static_cast<double>(m_loaders);
            next = std::min(next, m_now + std::max(0.0, m_loads.top().delivered - m_delivered) / per_loader);
        }
        if (m_loaders > 0) {
            m_delivered += (next - m_now) * m_hw.bandwidth / static_cast<double>(m_loaders);
        }
        m_now = next;

        const double time_eps = 1e-9 * std::max(1.0, std::abs(m_now));
        const double byte_eps = 1e-9 * std::max(1.0, std::abs(m_delivered));
        std::vector<std::size_t> touched;
        while (!m_loads.empty() && m_loads.top().delivered <= m_delivered + byte_eps) {
            const std::size_t task = m_loads.top().task;
            m_loads.pop();
            --m_loaders;
            m_running[task].mem_done = true;
            touched.push_back(task);
        }
        while (!m_timed.empty() && m_timed.top().time <= m_now + time_eps) {
            const TimedEvent ev = m_timed.top();
            m_timed.pop();
            if (ev.kind == Kind::kRampDone) {
                start_tile(ev.task);
            } else {
                m_running[ev.task].compute_done = true;
                touched.push_back(ev.task);
            }
        }
        std::sort(touched.begin(), touched.end(), [&](std::size_t a, std::size_t b) {
            return std::tie(task_of(a).stream_id, a) < std::tie(task_of(b).stream_id, b);
        });
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
        for (std::size_t task : touched) {
            const std::int64_t before = m_running[task].tiles_left;
            on_part_done(task);
            if (before == 1 && m_running[task].tiles_left == 0) ++done;
        }
        dispatch();
    }
    PREFIXPACK_CHECK(done == n, ErrorCode::kNoFeasibleConfig, "simulation stalled with undispatched tasks");

    double first_start = INFINITY;
    double weighted_waste = 0.0;
    double total_duration = 0.0;
    double busy_units = 0.0;
    std::map<int, double> stream_starts;
    for (std::size_t i = 0; i < n; ++i) {
        const TaskTrace& tr = m_report.traces[i];
        const CtaTask& t = task_of(i);
        const double dur = tr.end - tr.start;
        first_start = std::min(first_start, tr.start);
        m_report.makespan = std::max(m_report.makespan, tr.end);
        total_duration += dur;
        weighted_waste += dur * static_cast<double>(t.cfg.m - t.q) / t.cfg.m;
        busy_units += dur * static_cast<double>(m_weight[i]);
        auto [it, inserted] = stream_starts.emplace(t.stream_id, tr.start);
        if (!inserted) it->second = std::min(it->second, tr.start);
    }
    for (const auto& [stream, start] : stream_starts) m_report.stream_spans[stream].start = start;
    const TrafficReport traffic = account_task_traffic(m_tasks, m_spec);
    m_report.kv_bytes_loaded = traffic.kv_bytes;
    m_report.intermediate_bytes = traffic.intermediate_bytes;
    m_report.mem_waste = total_duration > 0.0 ? weighted_waste / total_duration : 0.0;
    m_report.busy_slot_time = busy_units / static_cast<double>(m_units);
    const double window = m_report.makespan - first_start;
    const double capacity = window * static_cast<double>(m_hw.num_sms) * static_cast<double>(m_units);
    m_report.exec_bubble = capacity > 0.0 ? std::clamp(1.0 - busy_units / capacity, 0.0, 1.0) : 0.0;
    return m_report;
}

}  // namespace

SimReport simulate(const std::vector<CtaTask>& tasks, const HardwareModel& hw,
                   const WorkloadSpec& spec, const SimOptions& options) {
    return Engine(tasks, hw, spec, options).run();
}

}  // namespace prefixpack
