#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "schedrl/agent.hpp"
#include "schedrl/baselines.hpp"
#include "schedrl/error.hpp"
#include "schedrl/kv_config.hpp"
#include "schedrl/sim.hpp"
#include "schedrl/workload.hpp"

namespace schedrl {

enum class Command : std::uint8_t { Train, Compare, SweepLoad, SweepClass };

inline Command parse_command(std::string_view s) {
    if (s == "train") return Command::Train;
    if (s == "compare") return Command::Compare;
    if (s == "sweep-load") return Command::SweepLoad;
    if (s == "sweep-class") return Command::SweepClass;
    throw ConfigError("unknown command '" + std::string(s) + "'");
}

/// "0..9" (inclusive range) or a comma-separated list.
inline std::vector<std::uint64_t> parse_seeds(std::string_view text) {
    text = detail::trim(text);
    std::vector<std::uint64_t> seeds;
    if (const auto dots = text.find(".."); dots != std::string_view::npos) {
        std::uint64_t lo = 0;
        std::uint64_t hi = 0;
        if (!detail::parse_number(text.substr(0, dots), lo) || !detail::parse_number(text.substr(dots + 2), hi))
            throw ConfigError("bad seed range '" + std::string(text) + "'");
        if (hi < lo) throw ConfigError("seed range is empty");
        if (hi - lo >= 1000000) throw ConfigError("seed range too large");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
        for (auto part : detail::split(text, ',')) {
            std::uint64_t s = 0;
            if (!detail::parse_number(part, s)) throw ConfigError("bad seed '" + std::string(part) + "'");
            seeds.push_back(s);
        }
    }
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    return seeds;
}

/// Settings for the episode stream a training run sees. Read from the agent
/// config file next to the learner settings.
struct TrainSchedule {
    int episodes = 2000;
    std::int64_t episode_tasks = 150;
    LoadLevel load = LoadLevel::Medium;
    /// Training workloads use seeds base, base+1, ...; evaluation seeds must
    /// stay outside that range.
    std::uint64_t seed_base = 1000000;

    static const std::set<std::string>& keys() {
        static const std::set<std::string> k{"episodes", "episode_tasks", "train_load", "train_seed_base"};
        return k;
    }

    static TrainSchedule from_kv(const KvConfig& kv) {
        TrainSchedule t;
        t.episodes = kv.get("episodes", t.episodes);
        t.episode_tasks = kv.get("episode_tasks", t.episode_tasks);
        t.load = parse_load_level(kv.get_string("train_load", std::string(to_string(t.load))));
        t.seed_base = kv.get("train_seed_base", t.seed_base);
        if (t.episodes < 0) throw ConfigError("episodes must be >= 0");
        if (t.episode_tasks < 1) throw ConfigError("episode_tasks must be >= 1");
        return t;
    }

    bool overlaps(std::uint64_t seed) const {
        return seed >= seed_base && seed - seed_base < static_cast<std::uint64_t>(std::max(episodes, 0));
    }
};

/// Where evaluation workloads come from: generated from a workload config
/// (seeded per evaluation seed) or one fixed CSV file.
struct WorkloadSource {
    KvConfig generator;
    std::optional<Workload> fixed;

    static WorkloadSource from_arg(const std::string& arg) {
        WorkloadSource src;
        if (arg.empty() || arg == "generated") return src;
        if (arg.size() >= 4 && arg.compare(arg.size() - 4, 4, ".csv") == 0) {
            src.fixed = read_workload(arg);
            return src;
        }
        src.generator = KvConfig::load(arg);
        WorkloadConfig::from_kv(src.generator);  // validate early
        return src;
    }

    bool is_fixed() const { return fixed.has_value(); }

    std::string load_name() const {
        return is_fixed() ? "file" : std::string(to_string(WorkloadConfig::from_kv(generator).load));
    }

    Workload make(std::uint64_t seed) const { return is_fixed() ? *fixed : generate(config(seed, std::nullopt)); }

    Workload make(std::uint64_t seed, LoadLevel level) const {
        if (is_fixed()) throw ConfigError("load sweeps need a generated workload, not a CSV file");
        return generate(config(seed, level));
    }

    Workload make_single_class(std::uint64_t seed, TaskClass cls) const {
        if (is_fixed()) throw ConfigError("class sweeps need a generated workload, not a CSV file");
        auto kv = generator;
        kv.set("load", "medium");
        kv.set("seed", std::to_string(seed));
        auto c = WorkloadConfig::from_kv(kv);
        c.class_mix = {0.0, 0.0, 0.0};
        c.class_mix[static_cast<std::size_t>(cls)] = 1.0;
        return generate(c);
    }

private:
    WorkloadConfig config(std::uint64_t seed, std::optional<LoadLevel> level) const {
        auto kv = generator;
        if (level) kv.set("load", std::string(to_string(*level)));
        kv.set("seed", std::to_string(seed));
        return WorkloadConfig::from_kv(kv);
    }
};

struct ExperimentSpec {
    Command command = Command::Train;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::string env_path;       ///< empty: defaults
    std::string agent_path;     ///< empty: defaults
    std::string workload = "generated";
    std::string out_dir = "out";
    std::optional<int> episodes;
    std::string checkpoint;     ///< empty: <out_dir>/checkpoint.txt
    std::string policy = "all";
    bool train_first = false;   ///< compare/sweeps: train when no checkpoint exists
    bool quiet = false;
};

inline constexpr std::string_view compare_csv_header =
    "policy,load,seed,mean_completion_ms,throughput_tps,mean_response_ms,cpu_util,mem_util,io_util,n_completed,"
    "n_total";
inline constexpr std::string_view sweep_load_csv_header = compare_csv_header;
inline constexpr std::string_view sweep_load_scatter_csv_header = "policy,load,seed,mean_completion_ms,cpu_util";
inline constexpr std::string_view sweep_class_csv_header =
    "policy,class,seed,mean_completion_ms,cpu_util,mem_util,io_util,io_ops,n_completed,n_total";

inline const std::vector<std::string>& all_policy_names() {
    static const std::vector<std::string> names{"fcfs", "sjf", "rr", "ddqn"};
    return names;
}

/// Everything a command needs, resolved from an ExperimentSpec.
struct Experiment {
    ExperimentSpec spec;
    EnvConfig env;
    AgentConfig agent;
    TrainSchedule schedule;
    WorkloadSource workload;

    static Experiment resolve(const ExperimentSpec& spec) {
        Experiment x;
        x.spec = spec;
        if (spec.seeds.empty()) throw ConfigError("at least one seed is required");
        if (!spec.env_path.empty()) x.env = EnvConfig::from_kv(KvConfig::load(spec.env_path));
        KvConfig akv;
        if (!spec.agent_path.empty()) akv = KvConfig::load(spec.agent_path);
        auto known = AgentConfig::keys();
        known.insert(TrainSchedule::keys().begin(), TrainSchedule::keys().end());
        akv.require_known(known, "agent config");
        x.agent = AgentConfig::from_kv(akv);
        x.schedule = TrainSchedule::from_kv(akv);
        if (spec.episodes) {
            if (*spec.episodes < 0) throw ConfigError("--episodes must be >= 0");
            x.schedule.episodes = *spec.episodes;
        }
        x.workload = WorkloadSource::from_arg(spec.workload);
        for (auto s : spec.seeds) {
            if (x.schedule.overlaps(s))
                throw ConfigError("evaluation seed " + std::to_string(s) + " overlaps the training seed range");
        }
        const auto& names = all_policy_names();
        if (spec.policy != "all" && std::find(names.begin(), names.end(), spec.policy) == names.end())
            throw ConfigError("unknown policy '" + spec.policy + "'");
        return x;
    }

    std::filesystem::path out() const { return spec.out_dir; }

    std::string checkpoint_path() const {
        return spec.checkpoint.empty() ? (out() / "checkpoint.txt").string() : spec.checkpoint;
    }

    std::vector<std::string> policies() const {
        if (spec.policy == "all") return all_policy_names();
        return {spec.policy};
    }

    EpisodeSetup training_episode(int ep) const {
        auto c = WorkloadConfig::for_load(schedule.load, schedule.seed_base + static_cast<std::uint64_t>(ep));
        if (!workload.is_fixed()) {
            auto kv = workload.generator;
            kv.set("load", std::string(to_string(schedule.load)));
            kv.set("seed", std::to_string(c.seed));
            c = WorkloadConfig::from_kv(kv);
        }
        c.n_tasks = schedule.episode_tasks;
        return {env, generate(c)};
    }
};

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw IoError("cannot create output directory '" + dir.string() + "'");
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline MetricsReport mean_report(const std::vector<MetricsReport>& rows) {
    MetricsReport m{};
    if (rows.empty()) return m;
    const auto n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        m.mean_completion_ms += r.mean_completion_ms / n;
        m.throughput_tps += r.throughput_tps / n;
        m.mean_response_ms += r.mean_response_ms / n;
        m.cpu_util += r.cpu_util / n;
        m.mem_util += r.mem_util / n;
        m.io_util += r.io_util / n;
        m.n_completed += r.n_completed;
        m.n_total += r.n_total;
        m.elapsed_ticks += r.elapsed_ticks;
        m.io_ops_completed += r.io_ops_completed;
    }
    return m;
}

inline std::string seed_row(const std::string& policy, const std::string& key, const std::string& seed,
                            const MetricsReport& m) {
    return policy + "," + key + "," + seed + "," + metrics_csv_fields(m);
}

}  // namespace detail

/// Trains from scratch and writes train_log.csv plus the checkpoint. Output
/// locations are checked before any episode runs.
inline std::vector<EpisodeLog> cmd_train(const Experiment& x, std::ostream* progress = nullptr) {
    detail::ensure_dir(x.out());
    const auto log_path = x.out() / "train_log.csv";
    auto log = detail::open_out(log_path);
    const auto ckpt_path = std::filesystem::path(x.checkpoint_path());
    { detail::open_out(ckpt_path); }

    DdqnAgent agent(x.agent, x.env.observation_size(), x.env.action_count());
    log << train_log_csv_header << '\n';
    auto logs = train(
        agent, [&](int ep) { return x.training_episode(ep); }, x.schedule.episodes,
        [&](const EpisodeLog& e) {
            log << train_log_csv_row(e) << '\n';
            if (progress && (e.episode + 1) % 100 == 0)
                *progress << "episode " << e.episode + 1 << "/" << x.schedule.episodes << " epsilon "
                          << e.epsilon << " loss " << e.loss_mean << '\n';
        });
    detail::finish(log, log_path);
    agent.save(ckpt_path.string());
    return logs;
}

namespace detail {

/// Loads the checkpoint, or trains first when asked to. Only needed when a
/// learned policy is evaluated.
inline std::optional<DdqnAgent> agent_for(const Experiment& x, std::ostream* progress) {
    const auto& p = x.policies();
    if (std::find(p.begin(), p.end(), "ddqn") == p.end()) return std::nullopt;
    const auto path = x.checkpoint_path();
    if (!std::filesystem::exists(path)) {
        if (!x.spec.train_first)
            throw ConfigError("checkpoint '" + path + "' not found; run train first or pass --train");
        cmd_train(x, progress);
    }
    auto agent = DdqnAgent::load(path);
    if (agent.obs_size() != x.env.observation_size() || agent.n_actions() != x.env.action_count())
        throw ShapeError("checkpoint networks do not match the environment config");
    return agent;
}

inline MetricsReport evaluate(const std::string& policy, const std::optional<DdqnAgent>& agent, const Workload& w,
                              const EnvConfig& env) {
    if (policy == "fcfs") return run_policy(BaselinePolicy::fcfs(), w, env);
    if (policy == "sjf") return run_policy(BaselinePolicy::sjf(), w, env);
    if (policy == "rr") return run_policy(BaselinePolicy::rr(8), w, env);
    if (policy == "ddqn") return run_greedy(*agent, w, env);
    throw ConfigError("unknown policy '" + policy + "'");
}

}  // namespace detail

/// One row per (policy, seed) and a mean row per policy, every policy run on
/// the same workload instances.
inline void cmd_compare(const Experiment& x, std::ostream* progress = nullptr) {
    detail::ensure_dir(x.out());
    const auto path = x.out() / "compare.csv";
    auto out = detail::open_out(path);
    const auto agent = detail::agent_for(x, progress);

    std::vector<Workload> workloads;
    for (auto s : x.spec.seeds) workloads.push_back(x.workload.make(s));
    const auto load = x.workload.load_name();

    out << compare_csv_header << '\n';
    std::vector<std::string> mean_rows;
    for (const auto& policy : x.policies()) {
        std::vector<MetricsReport> rows;
        for (std::size_t i = 0; i < workloads.size(); ++i) {
            rows.push_back(detail::evaluate(policy, agent, workloads[i], x.env));
            out << detail::seed_row(policy, load, std::to_string(x.spec.seeds[i]), rows.back()) << '\n';
        }
        mean_rows.push_back(detail::seed_row(policy, load, "mean", detail::mean_report(rows)));
    }
    for (const auto& r : mean_rows) out << r << '\n';
    detail::finish(out, path);
}

/// Light/Medium/Heavy per policy and seed, plus the (completion, cpu_util)
/// pairs for a scatter plot.
inline void cmd_sweep_load(const Experiment& x, std::ostream* progress = nullptr) {
    detail::ensure_dir(x.out());
    const auto path = x.out() / "sweep_load.csv";
    const auto scatter_path = x.out() / "sweep_load_scatter.csv";
    auto out = detail::open_out(path);
    auto scatter = detail::open_out(scatter_path);
    const auto agent = detail::agent_for(x, progress);

    out << sweep_load_csv_header << '\n';
    scatter << sweep_load_scatter_csv_header << '\n';
    for (const auto& policy : x.policies()) {
        for (auto level : all_load_levels) {
            const std::string load(to_string(level));
            for (auto s : x.spec.seeds) {
                const auto m = detail::evaluate(policy, agent, x.workload.make(s, level), x.env);
                out << detail::seed_row(policy, load, std::to_string(s), m) << '\n';
                scatter << policy << ',' << load << ',' << s << ',' << detail::format_double(m.mean_completion_ms)
                        << ',' << detail::format_double(m.cpu_util) << '\n';
            }
        }
    }
    detail::finish(out, path);
    detail::finish(scatter, scatter_path);
}

/// All-CPU, all-memory and all-IO workloads at the Medium arrival rate.
inline void cmd_sweep_class(const Experiment& x, std::ostream* progress = nullptr) {
    detail::ensure_dir(x.out());
    const auto path = x.out() / "sweep_class.csv";
    auto out = detail::open_out(path);
    const auto agent = detail::agent_for(x, progress);

    out << sweep_class_csv_header << '\n';
    using detail::format_double;
    for (const auto& policy : x.policies()) {
        for (auto cls : all_task_classes) {
            for (auto s : x.spec.seeds) {
                const auto m = detail::evaluate(policy, agent, x.workload.make_single_class(s, cls), x.env);
                out << policy << ',' << to_string(cls) << ',' << s << ',' << format_double(m.mean_completion_ms)
                    << ',' << format_double(m.cpu_util) << ',' << format_double(m.mem_util) << ','
                    << format_double(m.io_util) << ',' << m.io_ops_completed << ',' << m.n_completed << ','
                    << m.n_total << '\n';
            }
        }
    }
    detail::finish(out, path);
}

inline void run_command(const ExperimentSpec& spec, std::ostream* progress = nullptr) {
    const auto x = Experiment::resolve(spec);
    switch (spec.command) {
        case Command::Train: cmd_train(x, progress); break;
        case Command::Compare: cmd_compare(x, progress); break;
        case Command::SweepLoad: cmd_sweep_load(x, progress); break;
        case Command::SweepClass: cmd_sweep_class(x, progress); break;
    }
}

/// Process exit code for an error escaping a command.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e)) return 3;
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 2;
    return 1;
}

}  // namespace schedrl
