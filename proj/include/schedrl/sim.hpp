#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "schedrl/error.hpp"
#include "schedrl/kv_config.hpp"
#include "schedrl/workload.hpp"

namespace schedrl {

/// Weights of the per-step reward `a1*U - a2*T + a3*R`.
struct RewardWeights {
    double a1 = 1.0;
    double a2 = 0.5;
    double a3 = -0.5;

    friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

/// The sign of the R term is as written: a positive a3 rewards slower response.
/// The default a3 is negative for that reason.
inline double compute_reward(double utilization, double completion_penalty, double response_term,
                             const RewardWeights& w) {
    return w.a1 * utilization - w.a2 * completion_penalty + w.a3 * response_term;
}

/// When T and R are credited. `Completion` books a task's whole turnaround
/// (response) in the step it finishes (is first dispatched). `Incremental`
/// books every elapsed tick as it passes: tasks in the system add dt / t_norm
/// to T, arrived but never dispatched tasks add dt / r_norm to R. Both give
/// the same T and R episode totals once every task has finished.
/// Incremental also weights U by the step's length: busy core ticks over
/// (cores * t_norm), so a step's reward scales with the time it covers.
enum class Credit : std::uint8_t { Completion, Incremental };

inline std::string_view to_string(Credit c) { return c == Credit::Completion ? "completion" : "incremental"; }

inline Credit parse_credit(std::string_view s) {
    if (s == "completion") return Credit::Completion;
    if (s == "incremental") return Credit::Incremental;
    throw ConfigError("credit must be 'completion' or 'incremental', got '" + std::string(s) + "'");
}

/// Environment configuration. Norms set to 0 are derived from the workload
/// at reset (see `resolved_for`).
struct EnvConfig {
    int cpu_cores = 1;
    std::int64_t mem_capacity = 100;
    int io_channels = 4;
    int window = 8;  ///< K, number of candidate slots exposed to the policy
    std::vector<int> quanta{2, 8, 32};
    RewardWeights weights{};
    Credit credit = Credit::Incremental;

    double work_norm = 0.0;  ///< auto: 4x mean cpu_work
    double io_norm = 8.0;
    double wait_norm = 200.0;
    double qlen_norm = 64.0;
    double load_norm = 32.0;
    double t_norm = 0.0;  ///< auto: mean cpu_work
    double r_norm = 0.0;  ///< auto: mean inter-arrival

    std::int64_t tick_limit = 60000;

    friend bool operator==(const EnvConfig&, const EnvConfig&) = default;

    static constexpr int features_per_slot = 8;
    static constexpr int global_features = 5;

    int observation_size() const { return window * features_per_slot + global_features; }
    int action_count() const { return window * static_cast<int>(quanta.size()) + 1; }
    int max_quantum() const { return *std::max_element(quanta.begin(), quanta.end()); }

    void validate() const {
        if (cpu_cores < 1) throw ConfigError("cores must be >= 1");
        if (mem_capacity < 1) throw ConfigError("mem_capacity must be >= 1");
        if (io_channels < 1) throw ConfigError("io_channels must be >= 1");
        if (window < 1) throw ConfigError("K must be >= 1");
        if (quanta.empty()) throw ConfigError("quanta must not be empty");
        if (!std::is_sorted(quanta.begin(), quanta.end()) ||
            std::adjacent_find(quanta.begin(), quanta.end()) != quanta.end())
            throw ConfigError("quanta must be strictly increasing");
        if (quanta.front() < 1) throw ConfigError("quanta must be >= 1");
        for (double n : {work_norm, t_norm, r_norm})
            if (n < 0.0) throw ConfigError("auto norms must be >= 0 (0 selects auto)");
        for (double n : {io_norm, wait_norm, qlen_norm, load_norm})
            if (!(n > 0.0)) throw ConfigError("io_norm, wait_norm, qlen_norm and load_norm must be > 0");
        if (tick_limit < 0) throw ConfigError("tick_limit must be >= 0");
    }

    /// Copy with every auto norm replaced by its workload-derived value.
    EnvConfig resolved_for(const Workload& w) const {
        EnvConfig c = *this;
        c.resolve_norms(w);
        return c;
    }

    /// Replaces every auto norm with its workload-derived value.
    void resolve_norms(const Workload& w) {
        auto& c = *this;
        double mean_work = 1.0;
        double mean_gap = 1.0;
        if (!w.empty()) {
            double total = 0.0;
            for (const auto& t : w.tasks) total += static_cast<double>(t.cpu_work);
            mean_work = total / static_cast<double>(w.size());
            mean_gap = std::max(1.0, static_cast<double>(w.tasks.back().arrival) / static_cast<double>(w.size()));
        }
        if (c.work_norm == 0.0) c.work_norm = std::max(1.0, 4.0 * mean_work);
        if (c.t_norm == 0.0) c.t_norm = std::max(1.0, mean_work);
        if (c.r_norm == 0.0) c.r_norm = std::max(1.0, mean_gap);
    }

    static EnvConfig from_kv(const KvConfig& kv) {
        kv.require_known({"cores", "mem_capacity", "io_channels", "K", "quanta", "reward_weights", "work_norm",
                          "io_norm", "wait_norm", "qlen_norm", "load_norm", "t_norm", "r_norm", "tick_limit", "credit"},
                         "env config");
        EnvConfig c;
        c.cpu_cores = kv.get<int>("cores", c.cpu_cores);
        c.mem_capacity = kv.get<std::int64_t>("mem_capacity", c.mem_capacity);
        c.io_channels = kv.get<int>("io_channels", c.io_channels);
        c.window = kv.get<int>("K", c.window);
        c.quanta = kv.get_list<int>("quanta", c.quanta);
        const auto w = kv.get_list<double>("reward_weights", {c.weights.a1, c.weights.a2, c.weights.a3});
        if (w.size() != 3) throw ConfigError("reward_weights needs exactly three values");
        c.weights = {w[0], w[1], w[2]};
        c.work_norm = kv.get<double>("work_norm", c.work_norm);
        c.io_norm = kv.get<double>("io_norm", c.io_norm);
        c.wait_norm = kv.get<double>("wait_norm", c.wait_norm);
        c.qlen_norm = kv.get<double>("qlen_norm", c.qlen_norm);
        c.load_norm = kv.get<double>("load_norm", c.load_norm);
        c.t_norm = kv.get<double>("t_norm", c.t_norm);
        c.r_norm = kv.get<double>("r_norm", c.r_norm);
        c.tick_limit = kv.get<std::int64_t>("tick_limit", c.tick_limit);
        c.credit = parse_credit(kv.get_string("credit", std::string(to_string(c.credit))));
        c.validate();
        return c;
    }
};

/// Discrete actions: dispatch candidate slot `k` with quantum index `q`
/// (index `k * |quanta| + q`), or the final index, which raises the effective
/// priority of the longest-waiting ready task.
class ActionSpace {
public:
    struct Decoded {
        bool boost = false;
        int slot = -1;
        int quantum_index = -1;
        int quantum = 0;
    };

    ActionSpace(int window, std::vector<int> quanta) : window_(window), quanta_(std::move(quanta)) {
        if (window_ < 1 || quanta_.empty()) throw ConfigError("action space needs K >= 1 and at least one quantum");
    }
    explicit ActionSpace(const EnvConfig& c) : ActionSpace(c.window, c.quanta) {}

    int size() const { return window_ * num_quanta() + 1; }
    int window() const { return window_; }
    int num_quanta() const { return static_cast<int>(quanta_.size()); }
    const std::vector<int>& quanta() const { return quanta_; }
    int boost_action() const { return size() - 1; }

    int dispatch_action(int slot, int quantum_index) const {
        if (slot < 0 || slot >= window_ || quantum_index < 0 || quantum_index >= num_quanta())
            throw StateError("dispatch action out of range");
        return slot * num_quanta() + quantum_index;
    }

    int quantum_index_of(int quantum) const {
        const auto it = std::find(quanta_.begin(), quanta_.end(), quantum);
        if (it == quanta_.end()) throw ConfigError("quantum " + std::to_string(quantum) + " not in the quanta set");
        return static_cast<int>(it - quanta_.begin());
    }

    Decoded decode(int action) const {
        if (action < 0 || action >= size()) throw StateError("action " + std::to_string(action) + " out of range");
        if (action == boost_action()) return {true, -1, -1, 0};
        const int q = action % num_quanta();
        return {false, action / num_quanta(), q, quanta_[static_cast<std::size_t>(q)]};
    }

private:
    int window_;
    std::vector<int> quanta_;
};

/// Capacities and free counters. Houses r_t.
struct ResourcePool {
    int cpu_cores = 0;
    int free_cores = 0;
    std::int64_t mem_capacity = 0;
    std::int64_t free_mem = 0;
    int io_channels = 0;
    int free_io = 0;
};

enum class TaskPhase : std::uint8_t { Pending, Ready, Running, Blocked, Finished };

/// Per-task bookkeeping. The CPU work is split evenly over `io_ops + 1`
/// bursts (remainder to the earliest bursts), alternating with IO bursts.
struct TaskRuntime {
    TaskPhase phase = TaskPhase::Pending;
    std::int64_t cpu_remaining = 0;
    std::int64_t burst_index = 0;
    std::int64_t burst_remaining = 0;
    std::int64_t io_remaining = 0;
    std::int64_t effective_priority = 0;
    std::int64_t ready_since = 0;
    std::int64_t first_dispatch = -1;
    std::int64_t finish = -1;
    std::int64_t executed = 0;
    std::int64_t io_done = 0;
    bool admitted = false;  ///< holds its memory from first dispatch until it finishes
};

struct CoreSlot {
    int task = -1;  ///< index into SystemState::tasks, -1 when idle
    std::int64_t run_until = 0;
};

struct IoSlot {
    int task = -1;
    std::int64_t end = 0;
};

/// Live simulator state s_t = (q_t, l_t, r_t): `ready` is the queue, `pool`
/// the free resources and `load()` the load fraction.
struct SystemState {
    std::int64_t clock = 0;
    std::vector<TaskSpec> tasks;
    std::vector<TaskRuntime> runtime;
    std::vector<int> ready;  ///< FIFO; only ever appended to or erased from
    std::vector<int> window;  ///< candidate slots: first K ready tasks whose memory fits, in queue order
    std::vector<CoreSlot> cores;
    std::vector<IoSlot> io_active;
    std::deque<int> io_waiting;
    ResourcePool pool;
    std::size_t next_arrival = 0;
    std::size_t n_finished = 0;
    bool done = false;

    std::int64_t busy_core_ticks = 0;
    std::int64_t io_busy_ticks = 0;
    std::int64_t mem_held_ticks = 0;
    std::int64_t io_ops_completed = 0;

    int running_count() const { return pool.cpu_cores - pool.free_cores; }

    /// Back to a default-constructed state, keeping container capacity.
    void reset_keeping_storage() {
        clock = 0;
        tasks.clear();
        runtime.clear();
        ready.clear();
        window.clear();
        cores.clear();
        io_active.clear();
        io_waiting.clear();
        pool = {};
        next_arrival = n_finished = 0;
        done = false;
        busy_core_ticks = io_busy_ticks = mem_held_ticks = io_ops_completed = 0;
    }

    double load(const EnvConfig& c) const {
        return static_cast<double>(ready.size() + static_cast<std::size_t>(running_count())) / c.load_norm;
    }

    bool fits(int task) const {
        return runtime[static_cast<std::size_t>(task)].admitted ||
               tasks[static_cast<std::size_t>(task)].mem_demand <= pool.free_mem;
    }

    /// Task index exposed in candidate slot `slot`, or -1.
    int candidate(int slot) const {
        return slot >= 0 && slot < static_cast<int>(window.size()) ? window[static_cast<std::size_t>(slot)] : -1;
    }

    /// Rebuilds `window`. Tasks whose memory does not fit yet are skipped, so
    /// an admitted task can never be stuck behind unadmittable ones.
    void refresh_window(int k) {
        window.clear();
        for (int t : ready) {
            if (static_cast<int>(window.size()) == k) break;
            if (fits(t)) window.push_back(t);
        }
    }
};

inline std::int64_t burst_length(const TaskSpec& t, std::int64_t index) {
    const std::int64_t n = t.io_ops + 1;
    if (index >= n) return 0;
    return t.cpu_work / n + (index < t.cpu_work % n ? 1 : 0);
}

using ActionMask = std::vector<bool>;

inline bool can_dispatch_slot(const SystemState& s, int slot) {
    const int task = s.candidate(slot);
    return task >= 0 && s.pool.free_cores > 0 && s.fits(task);
}

/// Dispatch actions are legal on occupied slots when a core is free and the
/// task's memory fits; the boost action is always legal.
inline ActionMask legal_action_mask(const SystemState& s, const ActionSpace& space) {
    ActionMask mask(static_cast<std::size_t>(space.size()), false);
    for (int k = 0; k < space.window(); ++k) {
        if (!can_dispatch_slot(s, k)) continue;
        for (int q = 0; q < space.num_quanta(); ++q) mask[static_cast<std::size_t>(space.dispatch_action(k, q))] = true;
    }
    mask[static_cast<std::size_t>(space.boost_action())] = true;
    return mask;
}

/// Fixed-length encoding: `K` slots of 8 features followed by
/// [queue length, cpu util, mem util, io util, load]. Every feature is in [0, 1].
/// Slot layout: occupied, cpu_remaining, mem, io_remaining, priority, wait,
/// is_cpu_bound, is_io_bound. `config` must have resolved norms.
inline std::vector<double> encode_state(const SystemState& s, const EnvConfig& config) {
    auto clip = [](double v) { return std::clamp(v, 0.0, 1.0); };
    std::vector<double> obs(static_cast<std::size_t>(config.observation_size()), 0.0);
    for (int k = 0; k < config.window; ++k) {
        const int task = s.candidate(k);
        if (task < 0) break;
        const auto& spec = s.tasks[static_cast<std::size_t>(task)];
        const auto& rt = s.runtime[static_cast<std::size_t>(task)];
        double* f = obs.data() + static_cast<std::size_t>(k) * EnvConfig::features_per_slot;
        f[0] = 1.0;
        f[1] = clip(static_cast<double>(rt.cpu_remaining) / config.work_norm);
        f[2] = clip(static_cast<double>(spec.mem_demand) / static_cast<double>(config.mem_capacity));
        f[3] = clip(static_cast<double>(rt.io_remaining) / config.io_norm);
        f[4] = clip(static_cast<double>(rt.effective_priority) / max_priority);
        f[5] = clip(static_cast<double>(s.clock - rt.ready_since) / config.wait_norm);
        f[6] = spec.task_class == TaskClass::CpuBound ? 1.0 : 0.0;
        f[7] = spec.task_class == TaskClass::IoBound ? 1.0 : 0.0;
    }
    double* g = obs.data() + static_cast<std::size_t>(config.window) * EnvConfig::features_per_slot;
    const auto& p = s.pool;
    g[0] = clip(static_cast<double>(s.ready.size()) / config.qlen_norm);
    g[1] = p.cpu_cores > 0 ? clip(static_cast<double>(p.cpu_cores - p.free_cores) / p.cpu_cores) : 0.0;
    g[2] = clip(static_cast<double>(p.mem_capacity - p.free_mem) / static_cast<double>(p.mem_capacity));
    g[3] = p.io_channels > 0 ? clip(static_cast<double>(p.io_channels - p.free_io) / p.io_channels) : 0.0;
    g[4] = clip(s.load(config));
    return obs;
}

struct MetricsReport {
    double mean_completion_ms = 0.0;
    double throughput_tps = 0.0;
    double mean_response_ms = 0.0;
    double cpu_util = 0.0;
    double mem_util = 0.0;
    double io_util = 0.0;
    std::int64_t n_completed = 0;
    std::int64_t n_total = 0;
    std::int64_t elapsed_ticks = 0;
    std::int64_t io_ops_completed = 0;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline constexpr std::string_view metrics_csv_header =
    "policy,load,mean_completion_ms,throughput_tps,mean_response_ms,cpu_util,mem_util,io_util,n_completed,n_total";

/// Metric columns of one CSV row, without the leading `policy,load` pair.
inline std::string metrics_csv_fields(const MetricsReport& m) {
    using detail::format_double;
    return format_double(m.mean_completion_ms) + ',' + format_double(m.throughput_tps) + ',' +
           format_double(m.mean_response_ms) + ',' + format_double(m.cpu_util) + ',' + format_double(m.mem_util) +
           ',' + format_double(m.io_util) + ',' + std::to_string(m.n_completed) + ',' + std::to_string(m.n_total);
}

inline std::string metrics_csv_row(std::string_view policy, std::string_view load, const MetricsReport& m) {
    return std::string(policy) + ',' + std::string(load) + ',' + metrics_csv_fields(m);
}

/// Aggregates a finished episode. Completion and response times are averaged
/// over completed tasks; utilizations are time averages over elapsed ticks.
inline MetricsReport finalize_metrics(const SystemState& s) {
    if (!s.done) throw StateError("finalize_metrics called before the episode is done");
    MetricsReport m;
    m.n_total = static_cast<std::int64_t>(s.tasks.size());
    m.elapsed_ticks = s.clock;
    m.io_ops_completed = s.io_ops_completed;
    std::int64_t turnaround = 0;
    std::int64_t response = 0;
    for (std::size_t i = 0; i < s.tasks.size(); ++i) {
        const auto& rt = s.runtime[i];
        if (rt.phase != TaskPhase::Finished) continue;
        ++m.n_completed;
        turnaround += rt.finish - s.tasks[i].arrival;
        response += rt.first_dispatch - s.tasks[i].arrival;
    }
    if (m.n_completed > 0) {
        m.mean_completion_ms = static_cast<double>(turnaround) / static_cast<double>(m.n_completed);
        m.mean_response_ms = static_cast<double>(response) / static_cast<double>(m.n_completed);
    }
    if (s.clock > 0) {
        const double elapsed = static_cast<double>(s.clock);
        m.throughput_tps = static_cast<double>(m.n_completed) / (elapsed / 1000.0);
        m.cpu_util = static_cast<double>(s.busy_core_ticks) / (elapsed * s.pool.cpu_cores);
        m.mem_util = static_cast<double>(s.mem_held_ticks) / (elapsed * static_cast<double>(s.pool.mem_capacity));
        m.io_util = static_cast<double>(s.io_busy_ticks) / (elapsed * s.pool.io_channels);
    }
    return m;
}

struct RewardComponents {
    double utilization = 0.0;         ///< U: busy-core fraction over the step (time-weighted, see Credit)
    double completion_penalty = 0.0;  ///< T, turnaround credited this step / t_norm (see Credit)
    double response_term = 0.0;       ///< R, response time credited this step / r_norm
};

struct StepEvent {
    enum class Kind : std::uint8_t { Dispatch, Completion, Boost };
    Kind kind;
    std::int64_t task_id;
    std::int64_t tick;
    int quantum = 0;
};

struct StepOutcome {
    std::vector<double> observation;
    double reward = 0.0;
    RewardComponents components;
    bool done = false;
    std::vector<StepEvent> events;
};

/// Per-task outcome, indexed like the workload.
struct TaskRecord {
    std::int64_t id;
    std::int64_t arrival;
    std::int64_t first_dispatch;  ///< -1 if never dispatched
    std::int64_t finish;          ///< -1 if unfinished
};

/// Event-compressed scheduling environment. Each step applies one action and
/// moves the clock to the next decision point.
///
/// After a successful dispatch that leaves a core free with another legal
/// dispatch available, the clock is held so the policy can fill that core at
/// the same tick. Otherwise the clock jumps to the earliest of: a slice end,
/// an IO completion or the next arrival (one idle tick if none is pending).
/// Same-tick events are applied in the order IO completions, arrivals, CPU
/// slice ends, so a preempted task queues behind tasks that arrive with it.
/// Memory is reserved at a task's first dispatch and held, through
/// preemption and IO, until it finishes.
class Environment {
public:
    explicit Environment(EnvConfig config = {}) : base_config_(std::move(config)), space_(base_config_) {
        base_config_.validate();
        config_ = base_config_;
    }

    /// Config with norms resolved for the current workload.
    const EnvConfig& config() const { return config_; }
    /// Config as constructed, auto norms unresolved.
    const EnvConfig& base_config() const { return base_config_; }
    const ActionSpace& action_space() const { return space_; }
    const SystemState& state() const { return state_; }
    bool done() const { return state_.done; }
    bool started() const { return started_; }

    std::vector<double> reset(const Workload& workload) {
        restart(workload);
        return observation();
    }

    /// `reset` without encoding the first observation.
    void restart(const Workload& workload) {
        validate(workload);
        for (const auto& t : workload.tasks) {
            if (t.mem_demand > base_config_.mem_capacity)
                throw ConfigError("task " + std::to_string(t.id) + " demands " + std::to_string(t.mem_demand) +
                                  " memory units, more than mem_capacity " +
                                  std::to_string(base_config_.mem_capacity));
        }
        config_ = base_config_;
        config_.resolve_norms(workload);
        state_.reset_keeping_storage();
        state_.tasks.assign(workload.tasks.begin(), workload.tasks.end());
        state_.runtime.assign(workload.tasks.size(), TaskRuntime{});
        for (std::size_t i = 0; i < workload.tasks.size(); ++i) {
            const auto& t = workload.tasks[i];
            auto& rt = state_.runtime[i];
            rt.cpu_remaining = t.cpu_work;
            rt.burst_remaining = burst_length(t, 0);
            rt.io_remaining = t.io_ops;
            rt.effective_priority = t.priority;
        }
        state_.cores.assign(static_cast<std::size_t>(config_.cpu_cores), CoreSlot{});
        state_.pool = {config_.cpu_cores, config_.cpu_cores, config_.mem_capacity,
                       config_.mem_capacity, config_.io_channels, config_.io_channels};
        started_ = true;
        pending_ = nullptr;
        admit_arrivals();
        state_.refresh_window(config_.window);
    }

    std::vector<double> observation() const { return encode_state(state_, config_); }

    ActionMask legal_mask() const { return legal_action_mask(state_, space_); }

    StepOutcome step(int action) {
        StepOutcome out = apply(action);
        out.observation = observation();
        return out;
    }

    /// `step` without encoding the next observation, for policies that read
    /// the state directly.
    /// The returned outcome is overwritten by the next call.
    const StepOutcome& apply(int action) {
        if (!started_) throw StateError("step called before reset");
        if (state_.done) throw StateError("step called on a finished episode");
        const auto decoded = space_.decode(action);

        auto& out = outcome_;
        out.observation.clear();
        out.reward = 0.0;
        out.components = {};
        out.done = false;
        out.events.clear();
        pending_ = &out;
        const std::int64_t start = state_.clock;
        const std::int64_t busy_before = state_.busy_core_ticks;

        bool dispatched = false;
        if (decoded.boost) {
            boost_longest_waiting();
        } else if (can_dispatch_slot(state_, decoded.slot)) {
            dispatch(decoded.slot, decoded.quantum);
            dispatched = true;
            // With no core left the clock advances and the window is rebuilt below.
            if (state_.pool.free_cores > 0) state_.refresh_window(config_.window);
        }

        const bool hold = dispatched && state_.pool.free_cores > 0 && any_dispatch_legal();
        if (!hold) {
            advance();
            state_.refresh_window(config_.window);
        }

        const std::int64_t dt = state_.clock - start;
        auto& rc = out.components;
        if (config_.credit == Credit::Incremental) {
            rc.utilization = static_cast<double>(state_.busy_core_ticks - busy_before) /
                             (config_.t_norm * config_.cpu_cores);
        } else if (dt > 0) {
            rc.utilization = static_cast<double>(state_.busy_core_ticks - busy_before) /
                             (static_cast<double>(dt) * config_.cpu_cores);
        } else {
            rc.utilization = static_cast<double>(state_.running_count()) / config_.cpu_cores;
        }
        out.reward = compute_reward(rc.utilization, rc.completion_penalty, rc.response_term, config_.weights);

        state_.done = state_.n_finished == state_.tasks.size() || state_.clock >= config_.tick_limit;
        out.done = state_.done;
        pending_ = nullptr;
        verify_invariants();
        return out;
    }

    MetricsReport finalize_metrics() const { return schedrl::finalize_metrics(state_); }

    std::vector<TaskRecord> task_records() const {
        std::vector<TaskRecord> out;
        out.reserve(state_.tasks.size());
        for (std::size_t i = 0; i < state_.tasks.size(); ++i) {
            out.push_back({state_.tasks[i].id, state_.tasks[i].arrival, state_.runtime[i].first_dispatch,
                           state_.runtime[i].finish});
        }
        return out;
    }

    /// Throws InvariantError on any lifecycle, core, memory or IO accounting mismatch.
    void verify_invariants() const {
        if (invariants_hold()) return;
        explain_invariant_failure();
        throw InvariantError("simulator invariant violated");
    }

private:
    /// Same checks as `explain_invariant_failure`, without the messages. Runs every step.
    bool invariants_hold() const {
        const auto& s = state_;
        const std::size_t n = s.tasks.size();
        // seen[i] == stamp marks task i as found in some set during this call.
        auto& seen = seen_scratch_;
        if (seen.size() < n) seen.resize(n, 0);
        if (++stamp_ == 0) {
            std::fill(seen.begin(), seen.end(), 0);
            stamp_ = 1;
        }
        const std::uint32_t stamp = stamp_;
        bool ok = true;
        auto mark = [&](int task, TaskPhase expected) {
            const auto i = static_cast<std::size_t>(task);
            ok = ok && task >= 0 && i < n && s.runtime[i].phase == expected && seen[i] != stamp;
            if (ok) seen[i] = stamp;
        };
        for (int t : s.ready) mark(t, TaskPhase::Ready);
        int running = 0;
        for (const auto& c : s.cores) {
            if (c.task < 0) continue;
            ++running;
            mark(c.task, TaskPhase::Running);
        }
        for (const auto& io : s.io_active) mark(io.task, TaskPhase::Blocked);
        for (int t : s.io_waiting) mark(t, TaskPhase::Blocked);
        if (!ok) return false;

        std::int64_t held = 0;
        std::size_t finished = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& rt = s.runtime[i];
            const auto work = s.tasks[i].cpu_work;
            const bool found = seen[i] == stamp;
            switch (rt.phase) {
                case TaskPhase::Finished:
                    ++finished;
                    ok &= !found && rt.executed == work && !rt.admitted;
                    break;
                case TaskPhase::Pending: ok &= !found && i >= s.next_arrival; break;
                case TaskPhase::Running:
                case TaskPhase::Blocked: ok &= found && rt.admitted; break;
                case TaskPhase::Ready: ok &= found; break;
            }
            held += rt.admitted ? s.tasks[i].mem_demand : 0;
            ok &= !(rt.admitted && rt.first_dispatch < 0) && rt.executed + rt.cpu_remaining == work;
        }
        return ok && finished == s.n_finished && running <= s.pool.cpu_cores &&
               running == s.pool.cpu_cores - s.pool.free_cores && held <= s.pool.mem_capacity &&
               held == s.pool.mem_capacity - s.pool.free_mem && s.pool.free_io >= 0 &&
               static_cast<int>(s.io_active.size()) == s.pool.io_channels - s.pool.free_io;
    }

    void explain_invariant_failure() const {
        const auto& s = state_;
        auto fail = [](const std::string& what) { throw InvariantError("simulator invariant violated: " + what); };
        const std::size_t n = s.tasks.size();
        std::vector<int> seen(n, 0);
        auto mark = [&](int task, TaskPhase expected, const char* where) {
            if (task < 0 || static_cast<std::size_t>(task) >= n) fail(std::string("bad task index in ") + where);
            if (++seen[static_cast<std::size_t>(task)] > 1) fail("task in more than one lifecycle set");
            if (s.runtime[static_cast<std::size_t>(task)].phase != expected)
                fail(std::string("phase mismatch in ") + where);
        };
        for (int t : s.ready) mark(t, TaskPhase::Ready, "ready queue");
        int running = 0;
        for (const auto& c : s.cores) {
            if (c.task < 0) continue;
            ++running;
            mark(c.task, TaskPhase::Running, "cores");
        }
        for (const auto& io : s.io_active) mark(io.task, TaskPhase::Blocked, "io service");
        for (int t : s.io_waiting) mark(t, TaskPhase::Blocked, "io wait queue");

        std::int64_t held = 0;
        std::size_t finished = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& rt = s.runtime[i];
            if (rt.phase == TaskPhase::Finished) {
                ++finished;
                if (seen[i] != 0) fail("finished task still queued");
                if (rt.executed != s.tasks[i].cpu_work) fail("finished task executed != cpu_work");
                if (rt.admitted) fail("finished task still holds memory");
            } else if (rt.phase == TaskPhase::Pending) {
                if (seen[i] != 0 || i < s.next_arrival) fail("pending task misplaced");
            } else if (seen[i] != 1) {
                fail("active task missing from its lifecycle set");
            }
            if (rt.admitted) held += s.tasks[i].mem_demand;
            if (rt.admitted && rt.first_dispatch < 0) fail("memory held before first dispatch");
            if ((rt.phase == TaskPhase::Running || rt.phase == TaskPhase::Blocked) && !rt.admitted)
                fail("running or blocked task without memory");
            if (rt.executed + rt.cpu_remaining != s.tasks[i].cpu_work) fail("cpu work not conserved");
        }
        if (finished != s.n_finished) fail("finished count mismatch");
        if (running > s.pool.cpu_cores || running != s.pool.cpu_cores - s.pool.free_cores) fail("core accounting");
        if (held > s.pool.mem_capacity || held != s.pool.mem_capacity - s.pool.free_mem) fail("memory accounting");
        if (s.pool.free_io < 0 ||
            static_cast<int>(s.io_active.size()) != s.pool.io_channels - s.pool.free_io)
            fail("io channel accounting");
    }

    TaskRuntime& rt(int task) { return state_.runtime[static_cast<std::size_t>(task)]; }
    const TaskSpec& spec(int task) const { return state_.tasks[static_cast<std::size_t>(task)]; }

    bool any_dispatch_legal() const {
        for (int k = 0; k < static_cast<int>(state_.window.size()); ++k)
            if (can_dispatch_slot(state_, k)) return true;
        return false;
    }

    void enqueue_ready(int task) {
        auto& r = rt(task);
        r.phase = TaskPhase::Ready;
        r.ready_since = state_.clock;
        state_.ready.push_back(task);
    }

    void admit_arrivals() {
        auto& s = state_;
        while (s.next_arrival < s.tasks.size() && s.tasks[s.next_arrival].arrival <= s.clock) {
            enqueue_ready(static_cast<int>(s.next_arrival));
            ++s.next_arrival;
        }
    }

    void dispatch(int slot, int quantum) {
        auto& s = state_;
        const int task = s.candidate(slot);
        s.ready.erase(std::find(s.ready.begin(), s.ready.end(), task));
        auto& r = rt(task);
        if (!r.admitted) {
            r.admitted = true;
            s.pool.free_mem -= spec(task).mem_demand;
        }
        auto core = std::find_if(s.cores.begin(), s.cores.end(), [](const CoreSlot& c) { return c.task < 0; });
        core->task = task;
        core->run_until = s.clock + std::min<std::int64_t>(quantum, r.burst_remaining);
        --s.pool.free_cores;
        r.phase = TaskPhase::Running;
        if (r.first_dispatch < 0) {
            r.first_dispatch = s.clock;
            if (config_.credit == Credit::Completion)
                pending_->components.response_term += static_cast<double>(s.clock - spec(task).arrival) / config_.r_norm;
        }
        pending_->events.push_back({StepEvent::Kind::Dispatch, spec(task).id, s.clock, quantum});
    }

    void boost_longest_waiting() {
        auto& s = state_;
        if (s.ready.empty()) return;
        int best = s.ready.front();
        for (int t : s.ready)
            if (rt(t).ready_since < rt(best).ready_since) best = t;
        auto& r = rt(best);
        r.effective_priority = std::min<std::int64_t>(max_priority, r.effective_priority + 1);
        pending_->events.push_back({StepEvent::Kind::Boost, spec(best).id, s.clock, 0});
    }

    void finish(int task) {
        auto& s = state_;
        auto& r = rt(task);
        r.phase = TaskPhase::Finished;
        r.finish = s.clock;
        if (r.admitted) {
            s.pool.free_mem += spec(task).mem_demand;
            r.admitted = false;
        }
        ++s.n_finished;
        if (pending_ && config_.credit == Credit::Completion)
            pending_->components.completion_penalty += static_cast<double>(s.clock - spec(task).arrival) / config_.t_norm;
        if (pending_) pending_->events.push_back({StepEvent::Kind::Completion, spec(task).id, s.clock, 0});
    }

    void request_io(int task) {
        auto& s = state_;
        rt(task).phase = TaskPhase::Blocked;
        if (s.pool.free_io > 0) {
            --s.pool.free_io;
            s.io_active.push_back({task, s.clock + spec(task).io_burst_len});
        } else {
            s.io_waiting.push_back(task);
        }
    }

    /// Continues a task whose CPU burst `burst_index - 1` or IO burst just ended.
    /// Zero-length CPU bursts are skipped.
    void continue_task(int task) {
        auto& r = rt(task);
        while (true) {
            const auto len = burst_length(spec(task), r.burst_index);
            if (len > 0) {
                r.burst_remaining = len;
                enqueue_ready(task);
                return;
            }
            if (r.io_remaining > 0) {
                ++r.burst_index;
                request_io(task);
                return;
            }
            finish(task);
            return;
        }
    }

    void advance() {
        auto& s = state_;
        constexpr auto none = std::numeric_limits<std::int64_t>::max();
        std::int64_t next = none;
        for (const auto& c : s.cores)
            if (c.task >= 0) next = std::min(next, c.run_until);
        for (const auto& io : s.io_active) next = std::min(next, io.end);
        if (s.next_arrival < s.tasks.size()) next = std::min(next, s.tasks[s.next_arrival].arrival);
        if (next == none) {
            if (s.n_finished == s.tasks.size()) return;
            next = s.clock + 1;  // idle tick: ready work exists but the policy declined it
        }
        next = std::min(next, config_.tick_limit);
        if (next <= s.clock) return;

        const std::int64_t dt = next - s.clock;
        for (const auto& c : s.cores) {
            if (c.task < 0) continue;
            auto& r = rt(c.task);
            r.burst_remaining -= dt;
            r.cpu_remaining -= dt;
            r.executed += dt;
            s.busy_core_ticks += dt;
        }
        s.io_busy_ticks += static_cast<std::int64_t>(s.io_active.size()) * dt;
        s.mem_held_ticks += (s.pool.mem_capacity - s.pool.free_mem) * dt;
        if (pending_ && config_.credit == Credit::Incremental) {
            const auto in_system = static_cast<double>(s.next_arrival - s.n_finished);
            double undispatched = 0.0;
            for (int t : s.ready) undispatched += rt(t).first_dispatch < 0 ? 1.0 : 0.0;
            pending_->components.completion_penalty += in_system * static_cast<double>(dt) / config_.t_norm;
            pending_->components.response_term += undispatched * static_cast<double>(dt) / config_.r_norm;
        }
        s.clock = next;

        // IO completions: release channels, hand them to waiters, then route the finished tasks.
        auto& io_finished = io_finished_;
        io_finished.clear();
        for (auto it = s.io_active.begin(); it != s.io_active.end();) {
            if (it->end == s.clock) {
                io_finished.push_back(it->task);
                it = s.io_active.erase(it);
                ++s.pool.free_io;
            } else {
                ++it;
            }
        }
        while (s.pool.free_io > 0 && !s.io_waiting.empty()) {
            const int t = s.io_waiting.front();
            s.io_waiting.pop_front();
            --s.pool.free_io;
            s.io_active.push_back({t, s.clock + spec(t).io_burst_len});
        }
        for (int t : io_finished) {
            auto& r = rt(t);
            --r.io_remaining;
            ++r.io_done;
            ++s.io_ops_completed;
            continue_task(t);
        }

        admit_arrivals();

        for (auto& c : s.cores) {
            if (c.task < 0 || c.run_until != s.clock) continue;
            const int t = c.task;
            c.task = -1;
            ++s.pool.free_cores;
            auto& r = rt(t);
            if (r.burst_remaining == 0) {
                ++r.burst_index;
                if (r.io_remaining > 0)
                    request_io(t);
                else
                    finish(t);
            } else {
                enqueue_ready(t);
            }
        }
    }

    EnvConfig base_config_;
    EnvConfig config_;
    ActionSpace space_;
    SystemState state_;
    StepOutcome outcome_;
    StepOutcome* pending_ = nullptr;
    std::vector<int> io_finished_;
    mutable std::vector<std::uint32_t> seen_scratch_;
    mutable std::uint32_t stamp_ = 0;
    bool started_ = false;
};

}  // namespace schedrl
