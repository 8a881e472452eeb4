#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <set>

#include "schedrl/baselines.hpp"
#include "schedrl/workload.hpp"

using namespace schedrl;

namespace {

TaskSpec cpu_task(std::int64_t id, std::int64_t arrival, std::int64_t work, std::int64_t mem = 5) {
    TaskSpec t;
    t.id = id;
    t.arrival = arrival;
    t.cpu_work = work;
    t.mem_demand = mem;
    return t;
}

Workload make(std::vector<TaskSpec> tasks) { return Workload{std::move(tasks)}; }

int slot_action(const Environment& env, int slot, int quantum) {
    const auto& space = env.action_space();
    return space.dispatch_action(slot, space.quantum_index_of(quantum));
}

int count_true(const ActionMask& m) {
    int n = 0;
    for (bool b : m) n += b;
    return n;
}

}  // namespace

TEST(Reward, WorkedExamples) {
    EXPECT_DOUBLE_EQ(compute_reward(0.7, 123.0, 9.0, {1.0, 0.0, 0.0}), 0.7);
    EXPECT_DOUBLE_EQ(compute_reward(0.0, 0.0, 0.0, {0.0, 1.0, 0.0}), 0.0);
    EXPECT_DOUBLE_EQ(compute_reward(0.5, 10.0, 5.0, {1.0, 0.1, 0.2}), 0.5);
}

TEST(Reward, LinearInWeights) {
    EXPECT_DOUBLE_EQ(compute_reward(0.3, 0.0, 0.0, {2.0, 0.5, -0.5}), 2.0 * compute_reward(0.3, 0.0, 0.0, {1.0, 0.5, -0.5}));
    // R enters with the sign it is given: a positive weight rewards slow response.
    EXPECT_GT(compute_reward(0.0, 0.0, 1.0, {0.0, 0.0, 1.0}), 0.0);
}

TEST(ActionSpace, DecodesEveryIndexUniquely) {
    const ActionSpace space(EnvConfig{});
    ASSERT_EQ(space.size(), 25);
    std::set<std::pair<int, int>> seen;
    for (int a = 0; a < space.size(); ++a) {
        const auto d = space.decode(a);
        if (a == space.boost_action()) {
            EXPECT_TRUE(d.boost);
            continue;
        }
        EXPECT_FALSE(d.boost);
        EXPECT_TRUE(seen.insert({d.slot, d.quantum}).second);
        EXPECT_EQ(space.dispatch_action(d.slot, d.quantum_index), a);
    }
    EXPECT_EQ(seen.size(), 24u);
    EXPECT_THROW(space.decode(25), StateError);
    EXPECT_THROW(space.decode(-1), StateError);
}

TEST(Step, SingleTaskRunsToCompletion) {
    Environment env;
    env.reset(make({cpu_task(0, 0, 5)}));
    const auto out = env.step(slot_action(env, 0, 8));
    EXPECT_TRUE(out.done);
    EXPECT_EQ(env.state().clock, 5);
    const auto m = env.finalize_metrics();
    EXPECT_EQ(m.mean_completion_ms, 5.0);
    EXPECT_EQ(m.mean_response_ms, 0.0);
    EXPECT_EQ(m.cpu_util, 1.0);
    EXPECT_EQ(m.n_completed, 1);
    EXPECT_EQ(m.throughput_tps, 200.0);
    EXPECT_THROW(env.step(0), StateError);
}

TEST(Step, NoOpWaitsForNextArrival) {
    Environment env;
    env.reset(make({cpu_task(0, 7, 3)}));
    const auto out = env.step(env.action_space().boost_action());
    EXPECT_EQ(env.state().clock, 7);
    EXPECT_EQ(out.components.completion_penalty, 0.0);
    for (const auto& e : out.events) EXPECT_NE(e.kind, StepEvent::Kind::Completion);
    EXPECT_FALSE(out.done);
}

TEST(Step, IllegalDispatchIsNoOp) {
    Environment env;
    env.reset(make({cpu_task(0, 0, 4), cpu_task(1, 3, 4)}));
    // Slot 5 is empty: nothing is dispatched and the clock moves to the next arrival.
    const auto out = env.step(slot_action(env, 5, 2));
    EXPECT_TRUE(out.events.empty());
    EXPECT_EQ(env.state().clock, 3);
    EXPECT_EQ(env.state().running_count(), 0);
}

TEST(Step, StepBeforeResetThrows) {
    Environment env;
    EXPECT_THROW(env.step(0), StateError);
}

TEST(Step, QuantumExpiryPreemptsToTail) {
    Environment env;
    env.reset(make({cpu_task(0, 0, 5), cpu_task(1, 0, 3)}));
    env.step(slot_action(env, 0, 2));
    EXPECT_EQ(env.state().clock, 2);
    ASSERT_EQ(env.state().ready.size(), 2u);
    EXPECT_EQ(env.state().ready.front(), 1);
    EXPECT_EQ(env.state().ready.back(), 0);
    EXPECT_EQ(env.state().runtime[0].cpu_remaining, 3);
}

TEST(Step, IoBurstsAlternateWithCpu) {
    // cpu_work 6 over three bursts of 2, two IO bursts of 3 ticks each.
    auto t = cpu_task(0, 0, 6);
    t.task_class = TaskClass::IoBound;
    t.io_ops = 2;
    t.io_burst_len = 3;
    Environment env;
    env.reset(make({t}));
    std::vector<std::int64_t> clocks;
    while (!env.done()) {
        const auto mask = env.legal_mask();
        env.step(mask[0] ? slot_action(env, 0, 32) : env.action_space().boost_action());
        clocks.push_back(env.state().clock);
    }
    EXPECT_EQ(clocks, (std::vector<std::int64_t>{2, 5, 7, 10, 12}));
    const auto m = env.finalize_metrics();
    EXPECT_EQ(m.mean_completion_ms, 12.0);
    EXPECT_DOUBLE_EQ(m.cpu_util, 6.0 / 12.0);
    EXPECT_DOUBLE_EQ(m.io_util, 6.0 / (12.0 * 4));
    EXPECT_EQ(m.io_ops_completed, 2);
    EXPECT_DOUBLE_EQ(m.mem_util, 5.0 * 12 / (12.0 * 100));
}

TEST(Step, MemoryHeldFromFirstDispatch) {
    Environment env;
    env.reset(make({cpu_task(0, 0, 4, 60), cpu_task(1, 0, 4, 60), cpu_task(2, 0, 4, 30)}));
    env.step(slot_action(env, 0, 2));
    // Task 0 is preempted holding 60 units; task 1 no longer fits and leaves the window.
    EXPECT_EQ(env.state().pool.free_mem, 40);
    EXPECT_EQ(env.state().window, (std::vector<int>{2, 0}));
    env.step(slot_action(env, 1, 32));
    EXPECT_EQ(env.state().pool.free_mem, 100);
    EXPECT_EQ(env.state().window, (std::vector<int>{1, 2}));
}

TEST(Step, ClockHeldWhileAnotherCoreCanBeFilled) {
    EnvConfig c;
    c.cpu_cores = 2;
    Environment env(c);
    env.reset(make({cpu_task(0, 0, 4), cpu_task(1, 0, 6)}));
    env.step(slot_action(env, 0, 32));
    EXPECT_EQ(env.state().clock, 0);
    env.step(slot_action(env, 0, 32));
    EXPECT_EQ(env.state().clock, 4);
    EXPECT_EQ(env.state().runtime[0].finish, 4);
}

TEST(Reset, EmptyWorkload) {
    Environment env;
    const auto obs = env.reset(Workload{});
    for (double f : obs) EXPECT_EQ(f, 0.0);
    EXPECT_TRUE(env.step(env.action_space().boost_action()).done);
    EXPECT_EQ(env.finalize_metrics().throughput_tps, 0.0);
}

TEST(Reset, RejectsOversizedMemory) {
    Environment env;
    EXPECT_THROW(env.reset(make({cpu_task(0, 0, 4, 101)})), ConfigError);
}

TEST(Reset, SingleArrivalFillsOneSlot) {
    Environment env;
    const auto obs = env.reset(make({cpu_task(0, 0, 4)}));
    ASSERT_EQ(obs.size(), 69u);
    EXPECT_EQ(obs[0], 1.0);
    for (int k = 1; k < 8; ++k) EXPECT_EQ(obs[static_cast<std::size_t>(k * 8)], 0.0);
}

TEST(Encode, SlotLayout) {
    auto t = cpu_task(0, 0, 8, 25);
    t.task_class = TaskClass::IoBound;
    t.io_ops = 4;
    t.io_burst_len = 2;
    t.priority = 7;
    EnvConfig c;
    c.work_norm = 16;
    Environment env(c);
    const auto obs = env.reset(make({t}));
    EXPECT_EQ(obs[0], 1.0);
    EXPECT_EQ(obs[1], 0.5);
    EXPECT_EQ(obs[2], 0.25);
    EXPECT_EQ(obs[3], 0.5);
    EXPECT_EQ(obs[4], 1.0);
    EXPECT_EQ(obs[5], 0.0);
    EXPECT_EQ(obs[6], 0.0);
    EXPECT_EQ(obs[7], 1.0);
    EXPECT_DOUBLE_EQ(obs[64], 1.0 / 64);
    EXPECT_DOUBLE_EQ(obs[68], 1.0 / 32);
}

TEST(Encode, WindowCapsAtK) {
    std::vector<TaskSpec> tasks;
    for (int i = 0; i < 11; ++i) tasks.push_back(cpu_task(i, 0, 3));
    Environment env;
    const auto obs = env.reset(make(tasks));
    for (int k = 0; k < 8; ++k) EXPECT_EQ(obs[static_cast<std::size_t>(k * 8)], 1.0);
    EXPECT_DOUBLE_EQ(obs[64], 11.0 / 64);
}

TEST(Encode, FeaturesStayInUnitInterval) {
    auto wc = WorkloadConfig::for_load(LoadLevel::Heavy, 4);
    wc.n_tasks = 150;
    Environment env;
    auto obs = env.reset(generate(wc));
    Rng rng(9);
    while (!env.done()) {
        for (double f : obs) ASSERT_TRUE(f >= 0.0 && f <= 1.0);
        obs = env.step(static_cast<int>(rng.uniform_index(25))).observation;
    }
}

TEST(Mask, Cases) {
    Environment env;
    env.reset(make({cpu_task(0, 5, 3)}));
    auto m = env.legal_mask();
    EXPECT_EQ(count_true(m), 1);
    EXPECT_TRUE(m[24]);

    env.reset(make({cpu_task(0, 0, 3)}));
    m = env.legal_mask();
    EXPECT_EQ(count_true(m), 4);
    for (int q = 0; q < 3; ++q) EXPECT_TRUE(m[static_cast<std::size_t>(q)]);

    // The only core is busy when the step stops at tick 1 for nine arrivals.
    std::vector<TaskSpec> tasks{cpu_task(0, 0, 50)};
    for (int i = 1; i < 10; ++i) tasks.push_back(cpu_task(i, 1, 50));
    env.reset(make(tasks));
    env.step(slot_action(env, 0, 32));
    ASSERT_EQ(env.state().clock, 1);
    EXPECT_EQ(env.state().ready.size(), 9u);
    m = env.legal_mask();
    EXPECT_EQ(count_true(m), 1);
    EXPECT_TRUE(m[24]);
}

TEST(Metrics, BeforeDoneIsStateError) {
    Environment env;
    env.reset(make({cpu_task(0, 0, 3)}));
    EXPECT_THROW(env.finalize_metrics(), StateError);
}

TEST(Metrics, TickLimitZeroGivesZeroThroughput) {
    EnvConfig c;
    c.tick_limit = 0;
    Environment env(c);
    env.reset(make({cpu_task(0, 0, 3)}));
    EXPECT_TRUE(env.step(0).done);
    const auto m = env.finalize_metrics();
    EXPECT_EQ(m.n_completed, 0);
    EXPECT_EQ(m.throughput_tps, 0.0);
}

TEST(Metrics, ThreeTaskFcfsTrace) {
    // A(0,5) B(1,3) C(2,1): finishes 5, 8, 9.
    const auto w = make({cpu_task(0, 0, 5), cpu_task(1, 1, 3), cpu_task(2, 2, 1)});
    const auto m = run_policy(BaselinePolicy::fcfs(), w, EnvConfig{});
    EXPECT_DOUBLE_EQ(m.mean_completion_ms, 19.0 / 3.0);
}

TEST(Credit, IncrementalSingleTaskReward) {
    // t_norm = 50: U = 5 busy ticks / 50, T = 1 task * 5 ticks / 50.
    EnvConfig c;
    c.t_norm = 50;
    Environment env(c);
    env.reset(make({cpu_task(0, 0, 5)}));
    const auto out = env.step(slot_action(env, 0, 8));
    EXPECT_DOUBLE_EQ(out.components.utilization, 0.1);
    EXPECT_DOUBLE_EQ(out.components.completion_penalty, 0.1);
    EXPECT_EQ(out.components.response_term, 0.0);
    EXPECT_DOUBLE_EQ(out.reward, 0.05);
}

TEST(Credit, CompletionSingleTaskReward) {
    EnvConfig c;
    c.credit = Credit::Completion;
    c.t_norm = 50;
    Environment env(c);
    env.reset(make({cpu_task(0, 0, 5)}));
    const auto out = env.step(slot_action(env, 0, 8));
    EXPECT_EQ(out.components.utilization, 1.0);
    EXPECT_DOUBLE_EQ(out.components.completion_penalty, 0.1);
    EXPECT_DOUBLE_EQ(out.reward, 0.95);
}

TEST(Credit, AutoNormsFollowWorkload) {
    // Mean cpu_work 4, mean inter-arrival max(1, 6 / 2) = 3.
    Environment env;
    env.reset(make({cpu_task(0, 0, 2), cpu_task(1, 6, 6)}));
    EXPECT_EQ(env.config().t_norm, 4.0);
    EXPECT_EQ(env.config().r_norm, 3.0);
    EXPECT_EQ(env.config().work_norm, 16.0);
    EXPECT_EQ(env.base_config().t_norm, 0.0);
}

TEST(Credit, EpisodeTotalsAgree) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto wc = WorkloadConfig::for_load(LoadLevel::Medium, seed);
        wc.n_tasks = 60;
        const auto w = generate(wc);
        std::array<double, 2> t_sum{};
        std::array<double, 2> r_sum{};
        for (int mode = 0; mode < 2; ++mode) {
            EnvConfig c;
            c.credit = mode == 0 ? Credit::Completion : Credit::Incremental;
            Environment env(c);
            env.reset(w);
            Rng rng(seed);
            while (!env.done()) {
                const auto mask = env.legal_mask();
                int a = static_cast<int>(rng.uniform_index(25));
                while (!mask[static_cast<std::size_t>(a)]) a = static_cast<int>(rng.uniform_index(25));
                const auto out = env.step(a);
                t_sum[static_cast<std::size_t>(mode)] += out.components.completion_penalty;
                r_sum[static_cast<std::size_t>(mode)] += out.components.response_term;
            }
        }
        EXPECT_NEAR(t_sum[0], t_sum[1], 1e-9 * t_sum[0]);
        EXPECT_NEAR(r_sum[0], r_sum[1], 1e-9 * std::max(1.0, r_sum[0]));
    }
}

TEST(Config, FromKv) {
    const auto c = EnvConfig::from_kv(
        KvConfig::parse("cores = 2\nquanta = 4, 16\nreward_weights = 1, 0.2, -0.1\ncredit = completion\n"));
    EXPECT_EQ(c.cpu_cores, 2);
    EXPECT_EQ(c.quanta, (std::vector<int>{4, 16}));
    EXPECT_EQ(c.action_count(), 17);
    EXPECT_EQ(c.weights, (RewardWeights{1.0, 0.2, -0.1}));
    EXPECT_EQ(c.credit, Credit::Completion);
    EXPECT_THROW(EnvConfig::from_kv(KvConfig::parse("core = 2\n")), ConfigError);
    EXPECT_THROW(EnvConfig::from_kv(KvConfig::parse("quanta = 8, 2\n")), ConfigError);
    EXPECT_THROW(EnvConfig::from_kv(KvConfig::parse("credit = lump\n")), ConfigError);
    EXPECT_THROW(EnvConfig::from_kv(KvConfig::parse("reward_weights = 1, 2\n")), ConfigError);
}

TEST(Properties, RandomPoliciesKeepInvariants) {
    // verify_invariants runs inside every step and throws on any violation.
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto wc = WorkloadConfig::for_load(all_load_levels[seed % 3], seed);
        wc.n_tasks = 80;
        EnvConfig c;
        c.cpu_cores = 1 + static_cast<int>(seed % 3);
        Environment env(c);
        const auto w = generate(wc);
        env.reset(w);
        Rng rng(seed + 100);
        std::int64_t last = 0;
        while (!env.done()) {
            ASSERT_NO_THROW(env.step(static_cast<int>(rng.uniform_index(25))));
            EXPECT_GE(env.state().clock, last);
            last = env.state().clock;
        }
        for (const auto& r : env.task_records()) {
            if (r.finish < 0) continue;
            EXPECT_LE(r.first_dispatch, r.finish);
            EXPECT_GE(r.first_dispatch, r.arrival);
        }
        const auto m = env.finalize_metrics();
        EXPECT_LE(m.mean_response_ms, m.mean_completion_ms);
        for (double u : {m.cpu_util, m.mem_util, m.io_util}) EXPECT_TRUE(u >= 0.0 && u <= 1.0);
    }
}

TEST(Properties, ClockStrictlyIncreasesOnOneCore) {
    auto wc = WorkloadConfig::for_load(LoadLevel::Medium, 3);
    wc.n_tasks = 100;
    Environment env;
    env.reset(generate(wc));
    Rng rng(1);
    while (!env.done()) {
        const auto before = env.state().clock;
        env.step(static_cast<int>(rng.uniform_index(25)));
        EXPECT_GT(env.state().clock, before);
    }
}

TEST(Properties, WorkConservingPolicyFinishes) {
    for (auto level : all_load_levels) {
        const auto w = generate(WorkloadConfig::for_load(level, 21));
        Environment env;
        const auto m = run_policy(BaselinePolicy::rr(2), w, EnvConfig{}, &env);
        EXPECT_EQ(m.n_completed, m.n_total);
        for (std::size_t i = 0; i < w.size(); ++i)
            EXPECT_EQ(env.state().runtime[i].executed, w.tasks[i].cpu_work);
    }
}

TEST(Properties, Deterministic) {
    const auto w = generate(WorkloadConfig::for_load(LoadLevel::Medium, 8));
    std::vector<std::vector<double>> trace[2];
    for (auto& tr : trace) {
        Environment env;
        tr.push_back(env.reset(w));
        Rng rng(77);
        while (!env.done()) {
            auto out = env.step(static_cast<int>(rng.uniform_index(25)));
            out.observation.push_back(out.reward);
            tr.push_back(std::move(out.observation));
        }
    }
    EXPECT_EQ(trace[0], trace[1]);
}
