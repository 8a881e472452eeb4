#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <tuple>

#include "schedrl/sim.hpp"

namespace schedrl {

enum class BaselineKind : std::uint8_t { Fcfs, Sjf, Rr };

inline std::string_view to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::Fcfs: return "fcfs";
        case BaselineKind::Sjf: return "sjf";
        case BaselineKind::Rr: return "rr";
    }
    return "?";
}

struct BaselinePolicy {
    BaselineKind kind = BaselineKind::Fcfs;
    int rr_quantum = 8;

    static BaselinePolicy fcfs() { return {BaselineKind::Fcfs, 8}; }
    static BaselinePolicy sjf() { return {BaselineKind::Sjf, 8}; }
    static BaselinePolicy rr(int quantum = 8) { return {BaselineKind::Rr, quantum}; }
};

/// Picks an action for the classical policies. Stateless: round robin relies
/// on the simulator's FIFO re-enqueue. Only candidate slots that can be
/// dispatched right now are considered; with none, returns the boost action,
/// which is a no-op on an empty queue.
///
///  - FCFS: minimum (arrival, id), longest quantum.
///  - SJF:  minimum (remaining cpu_work, arrival, id), longest quantum.
///  - RR:   first dispatchable slot in queue order, `rr_quantum`.
inline int decide(const BaselinePolicy& policy, const SystemState& s, const ActionSpace& space) {
    const int max_qi = space.num_quanta() - 1;
    const int slots = static_cast<int>(s.window.size());
    if (s.pool.free_cores == 0) return space.boost_action();
    if (policy.kind == BaselineKind::Rr) {
        const int qi = space.quantum_index_of(policy.rr_quantum);
        for (int k = 0; k < slots; ++k)
            if (can_dispatch_slot(s, k)) return space.dispatch_action(k, qi);
        return space.boost_action();
    }

    int best_slot = -1;
    std::tuple<std::int64_t, std::int64_t, std::int64_t> best_key{};
    for (int k = 0; k < slots; ++k) {
        if (!can_dispatch_slot(s, k)) continue;
        const int task = s.candidate(k);
        const auto& t = s.tasks[static_cast<std::size_t>(task)];
        const auto primary =
            policy.kind == BaselineKind::Sjf ? s.runtime[static_cast<std::size_t>(task)].cpu_remaining : t.arrival;
        const std::tuple<std::int64_t, std::int64_t, std::int64_t> key{primary, t.arrival, t.id};
        if (best_slot < 0 || key < best_key) {
            best_slot = k;
            best_key = key;
        }
    }
    return best_slot < 0 ? space.boost_action() : space.dispatch_action(best_slot, max_qi);
}

/// Any scheduling rule over the simulator interface. It sees the state
/// directly; observations are not encoded.
using PolicyFn = std::function<int(const Environment&)>;

inline PolicyFn as_policy(BaselinePolicy p) {
    return [p](const Environment& env) { return decide(p, env.state(), env.action_space()); };
}

/// Drives reset/step to the end of the episode and returns its metrics.
/// `keep`, if given, is reused (rebuilt first if its config differs) and is
/// left holding the final state.
inline MetricsReport run_episode(const PolicyFn& policy, const Workload& workload, const EnvConfig& config,
                                 Environment* keep = nullptr) {
    std::optional<Environment> local;
    Environment& env = keep ? *keep : local.emplace(config);
    if (keep && !(keep->base_config() == config)) env = Environment(config);
    env.restart(workload);
    while (!env.done()) env.apply(policy(env));
    return env.finalize_metrics();
}

inline MetricsReport run_policy(const BaselinePolicy& policy, const Workload& workload, const EnvConfig& config,
                                Environment* keep = nullptr) {
    std::optional<Environment> local;
    Environment& env = keep ? *keep : local.emplace(config);
    if (keep && !(keep->base_config() == config)) env = Environment(config);
    if (policy.kind == BaselineKind::Rr) env.action_space().quantum_index_of(policy.rr_quantum);
    const auto p = policy;
    env.restart(workload);
    while (!env.done()) env.apply(decide(p, env.state(), env.action_space()));
    return env.finalize_metrics();
}

}  // namespace schedrl
