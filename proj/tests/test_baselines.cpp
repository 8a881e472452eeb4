#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "reference_sim.hpp"
#include "schedrl/baselines.hpp"

using namespace schedrl;

namespace {

TaskSpec cpu_task(std::int64_t id, std::int64_t arrival, std::int64_t work) {
    TaskSpec t;
    t.id = id;
    t.arrival = arrival;
    t.cpu_work = work;
    return t;
}

/// A(arr 0, work 5), B(arr 1, work 3), C(arr 2, work 1).
Workload abc() { return Workload{{cpu_task(0, 0, 5), cpu_task(1, 1, 3), cpu_task(2, 2, 1)}}; }

std::vector<std::int64_t> finishes(const BaselinePolicy& p, const Workload& w, MetricsReport* m = nullptr) {
    Environment env;
    const auto report = run_policy(p, w, EnvConfig{}, &env);
    if (m) *m = report;
    std::vector<std::int64_t> out;
    for (const auto& r : env.task_records()) out.push_back(r.finish);
    return out;
}

struct Decision {
    std::vector<int> ready;
    int task;
};

/// Runs `policy` and records, for every dispatch, the ready queue just before it.
std::vector<Decision> dispatch_log(const BaselinePolicy& policy, const Workload& w, const EnvConfig& c) {
    Environment env(c);
    env.reset(w);
    std::vector<Decision> log;
    while (!env.done()) {
        const std::vector<int> ready(env.state().ready.begin(), env.state().ready.end());
        const int a = decide(policy, env.state(), env.action_space());
        const int task = a == env.action_space().boost_action() ? -1 : env.state().candidate(env.action_space().decode(a).slot);
        env.apply(a);
        if (task >= 0) log.push_back({ready, task});
    }
    return log;
}

}  // namespace

TEST(HandTrace, Fcfs) {
    MetricsReport m;
    EXPECT_EQ(finishes(BaselinePolicy::fcfs(), abc(), &m), (std::vector<std::int64_t>{5, 8, 9}));
    EXPECT_DOUBLE_EQ(m.mean_completion_ms, 19.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.mean_response_ms, 10.0 / 3.0);
}

TEST(HandTrace, Sjf) {
    MetricsReport m;
    EXPECT_EQ(finishes(BaselinePolicy::sjf(), abc(), &m), (std::vector<std::int64_t>{5, 9, 6}));
    EXPECT_DOUBLE_EQ(m.mean_completion_ms, 17.0 / 3.0);
}

TEST(HandTrace, RoundRobinQuantumTwo) {
    MetricsReport m;
    EXPECT_EQ(finishes(BaselinePolicy::rr(2), abc(), &m), (std::vector<std::int64_t>{9, 8, 5}));
    EXPECT_DOUBLE_EQ(m.mean_completion_ms, 19.0 / 3.0);
}

TEST(RunPolicy, EmptyWorkload) {
    const auto m = run_policy(BaselinePolicy::sjf(), Workload{}, EnvConfig{});
    EXPECT_EQ(m.n_total, 0);
    EXPECT_EQ(m.throughput_tps, 0.0);
}

TEST(RunPolicy, Deterministic) {
    const auto w = generate(WorkloadConfig::for_load(LoadLevel::Heavy, 3));
    for (auto p : {BaselinePolicy::fcfs(), BaselinePolicy::sjf(), BaselinePolicy::rr()})
        EXPECT_EQ(run_policy(p, w, EnvConfig{}), run_policy(p, w, EnvConfig{}));
}

TEST(RunPolicy, RrQuantumMustBeInQuanta) {
    EXPECT_THROW(run_policy(BaselinePolicy::rr(5), abc(), EnvConfig{}), ConfigError);
}

TEST(RunPolicy, KeptEnvironmentRebuiltOnConfigChange) {
    EnvConfig two;
    two.cpu_cores = 2;
    Environment env;
    run_policy(BaselinePolicy::fcfs(), abc(), two, &env);
    EXPECT_EQ(env.state().pool.cpu_cores, 2);
}

TEST(Decide, NoDispatchGivesNoOp) {
    Environment env;
    env.reset(Workload{{cpu_task(0, 4, 2)}});
    for (auto p : {BaselinePolicy::fcfs(), BaselinePolicy::sjf(), BaselinePolicy::rr()})
        EXPECT_EQ(decide(p, env.state(), env.action_space()), env.action_space().boost_action());
}

TEST(Properties, FcfsDispatchesInArrivalOrder) {
    auto wc = WorkloadConfig::for_load(LoadLevel::Heavy, 12);
    wc.n_tasks = 300;
    // Ample memory, so no task is held back from the window.
    EnvConfig c;
    c.mem_capacity = 100000;
    const auto w = generate(wc);
    std::vector<int> first;
    std::set<int> seen;
    for (const auto& d : dispatch_log(BaselinePolicy::fcfs(), w, c))
        if (seen.insert(d.task).second) first.push_back(d.task);
    EXPECT_TRUE(std::is_sorted(first.begin(), first.end()));
}

TEST(Properties, SjfPicksShortestReady) {
    // A window as wide as any queue, so every ready task is a candidate.
    EnvConfig c;
    c.window = 400;
    c.mem_capacity = 100000;
    auto wc = WorkloadConfig::for_load(LoadLevel::Heavy, 5);
    wc.n_tasks = 400;
    const auto w = generate(wc);
    Environment env(c);
    env.reset(w);
    const auto policy = BaselinePolicy::sjf();
    int checked = 0;
    while (!env.done()) {
        const int a = decide(policy, env.state(), env.action_space());
        if (a != env.action_space().boost_action()) {
            const auto& s = env.state();
            const int chosen = s.candidate(env.action_space().decode(a).slot);
            for (int t : s.ready)
                ASSERT_LE(s.runtime[static_cast<std::size_t>(chosen)].cpu_remaining,
                          s.runtime[static_cast<std::size_t>(t)].cpu_remaining);
            ++checked;
        }
        env.apply(a);
    }
    EXPECT_GT(checked, 400);
}

TEST(Properties, RoundRobinFairness) {
    auto wc = WorkloadConfig::for_load(LoadLevel::Heavy, 7);
    wc.n_tasks = 200;
    const auto log = dispatch_log(BaselinePolicy::rr(2), generate(wc), EnvConfig{});
    int intervals = 0;
    for (std::size_t i = 0; i < log.size(); ++i) {
        const int task = log[i].task;
        std::size_t j = i + 1;
        while (j < log.size() && log[j].task != task) ++j;
        if (j == log.size()) continue;
        // Only intervals where the task waited in the queue (preempted, not blocked on IO).
        bool waited = true;
        for (std::size_t k = i + 1; k <= j; ++k)
            waited = waited && std::find(log[k].ready.begin(), log[k].ready.end(), task) != log[k].ready.end();
        if (!waited) continue;
        std::map<int, int> count;
        for (std::size_t k = i + 1; k < j; ++k) ++count[log[k].task];
        for (auto [t, n] : count) ASSERT_LE(n, 1) << "task " << t << " between dispatches " << i << " and " << j;
        ++intervals;
    }
    EXPECT_GT(intervals, 100);
}

TEST(Properties, SjfBeatsFcfsAndRrOnMedium) {
    double fcfs = 0.0;
    double sjf = 0.0;
    double rr = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto w = generate(WorkloadConfig::for_load(LoadLevel::Medium, seed));
        fcfs += run_policy(BaselinePolicy::fcfs(), w, EnvConfig{}).mean_completion_ms;
        sjf += run_policy(BaselinePolicy::sjf(), w, EnvConfig{}).mean_completion_ms;
        rr += run_policy(BaselinePolicy::rr(), w, EnvConfig{}).mean_completion_ms;
    }
    EXPECT_LE(sjf, fcfs);
    EXPECT_LE(sjf, rr);
}

TEST(Oracle, SmallFamilyMatchesReference) {
    // Four tasks, arrivals and work up to four; the acceptance run covers the full family.
    const EnvConfig c;
    Environment env(c);
    long workloads = 0;
    reference::enumerate_workloads(4, 4, 4, [&](const Workload& w) {
        ++workloads;
        for (auto p : {BaselinePolicy::fcfs(), BaselinePolicy::sjf(), BaselinePolicy::rr(2), BaselinePolicy::rr(8)}) {
            const auto m = run_policy(p, w, c, &env);
            const auto ref = reference::run(w, p.kind, p.kind == BaselineKind::Rr ? p.rr_quantum : c.max_quantum());
            ASSERT_EQ(m, ref.metrics) << to_string(p.kind) << " on " << w.size() << " tasks";
            for (std::size_t i = 0; i < w.size(); ++i) {
                ASSERT_EQ(env.state().runtime[i].finish, ref.finish[i]);
                ASSERT_EQ(env.state().runtime[i].first_dispatch, ref.first_dispatch[i]);
            }
        }
    });
    EXPECT_EQ(workloads, 20420);
}
