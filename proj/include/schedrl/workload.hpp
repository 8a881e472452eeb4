#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "schedrl/error.hpp"
#include "schedrl/kv_config.hpp"
#include "schedrl/rng.hpp"

namespace schedrl {

enum class TaskClass : std::uint8_t { CpuBound = 0, MemoryBound = 1, IoBound = 2 };

inline constexpr std::array<TaskClass, 3> all_task_classes{TaskClass::CpuBound, TaskClass::MemoryBound,
                                                           TaskClass::IoBound};

inline constexpr int max_priority = 7;

/// Serialized form: `cpu|mem|io`.
inline std::string_view to_string(TaskClass c) {
    switch (c) {
        case TaskClass::CpuBound: return "cpu";
        case TaskClass::MemoryBound: return "mem";
        case TaskClass::IoBound: return "io";
    }
    return "?";
}

inline TaskClass parse_task_class(std::string_view s) {
    if (s == "cpu") return TaskClass::CpuBound;
    if (s == "mem") return TaskClass::MemoryBound;
    if (s == "io") return TaskClass::IoBound;
    throw ConfigError("unknown task class '" + std::string(s) + "' (expected cpu|mem|io)");
}

struct TaskSpec {
    std::int64_t id = 0;
    TaskClass task_class = TaskClass::CpuBound;
    std::int64_t arrival = 0;
    std::int64_t cpu_work = 1;
    std::int64_t mem_demand = 0;
    std::int64_t io_ops = 0;
    std::int64_t io_burst_len = 0;
    std::int64_t priority = 0;

    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// Throws ValidationError naming the first broken field.
inline void validate(const TaskSpec& t) {
    auto fail = [&](const std::string& what) {
        throw ValidationError("task " + std::to_string(t.id) + ": " + what);
    };
    if (t.id < 0) fail("id must be non-negative");
    if (t.arrival < 0) fail("arrival must be >= 0");
    if (t.cpu_work < 1) fail("cpu_work must be >= 1");
    if (t.mem_demand < 0) fail("mem_demand must be >= 0");
    if (t.io_ops < 0) fail("io_ops must be >= 0");
    if (t.io_burst_len < 0) fail("io_burst_len must be >= 0");
    if ((t.io_ops == 0) != (t.io_burst_len == 0)) fail("io_burst_len must be 0 exactly when io_ops is 0");
    if (t.task_class == TaskClass::IoBound && t.io_ops < 1) fail("io-bound task needs io_ops >= 1");
    if (t.priority < 0 || t.priority > max_priority) fail("priority must be in [0, 7]");
}

struct Workload {
    std::vector<TaskSpec> tasks;  ///< sorted by (arrival, id)

    bool empty() const { return tasks.empty(); }
    std::size_t size() const { return tasks.size(); }

    friend bool operator==(const Workload&, const Workload&) = default;
};

inline void validate(const Workload& w) {
    for (std::size_t i = 0; i < w.tasks.size(); ++i) {
        validate(w.tasks[i]);
        if (i > 0) {
            const auto& prev = w.tasks[i - 1];
            const auto& cur = w.tasks[i];
            if (cur.arrival < prev.arrival || (cur.arrival == prev.arrival && cur.id <= prev.id))
                throw ValidationError("tasks not sorted by (arrival, id) at task " + std::to_string(cur.id));
        }
    }
    constexpr std::size_t pairwise_limit = 16;
    bool duplicate = false;
    if (w.tasks.size() <= pairwise_limit) {
        for (std::size_t i = 0; i < w.tasks.size() && !duplicate; ++i)
            for (std::size_t j = i + 1; j < w.tasks.size() && !duplicate; ++j) duplicate = w.tasks[i].id == w.tasks[j].id;
    } else {
        std::vector<std::int64_t> ids;
        ids.reserve(w.tasks.size());
        for (const auto& t : w.tasks) ids.push_back(t.id);
        std::sort(ids.begin(), ids.end());
        duplicate = std::adjacent_find(ids.begin(), ids.end()) != ids.end();
    }
    if (duplicate) throw ValidationError("duplicate task id");
}

enum class LoadLevel : std::uint8_t { Light, Medium, Heavy };

inline constexpr std::array<LoadLevel, 3> all_load_levels{LoadLevel::Light, LoadLevel::Medium, LoadLevel::Heavy};

inline std::string_view to_string(LoadLevel l) {
    switch (l) {
        case LoadLevel::Light: return "light";
        case LoadLevel::Medium: return "medium";
        case LoadLevel::Heavy: return "heavy";
    }
    return "?";
}

inline LoadLevel parse_load_level(std::string_view s) {
    if (s == "light") return LoadLevel::Light;
    if (s == "medium") return LoadLevel::Medium;
    if (s == "heavy") return LoadLevel::Heavy;
    throw ConfigError("unknown load level '" + std::string(s) + "' (expected light|medium|heavy)");
}

struct LoadProfile {
    double mean_interarrival;
    std::int64_t n_tasks;
};

inline constexpr LoadProfile load_profile(LoadLevel level) {
    switch (level) {
        case LoadLevel::Light: return {40.0, 200};
        case LoadLevel::Medium: return {20.0, 400};
        case LoadLevel::Heavy: return {10.0, 800};
    }
    return {20.0, 400};
}

/// Attribute distributions for one task class. Work and memory are rounded
/// log-normals given by arithmetic mean and log-space sigma; IO burst counts
/// are Poisson.
struct ClassParams {
    double cpu_mean;
    double cpu_sigma;
    double mem_mean;
    double mem_sigma;
    double io_mean;
    std::int64_t io_burst;
};

inline constexpr ClassParams default_class_params(TaskClass c) {
    switch (c) {
        case TaskClass::CpuBound: return {17.0, 0.3, 10.0, 0.5, 0.5, 2};
        case TaskClass::MemoryBound: return {16.0, 0.8, 35.0, 0.5, 2.0, 8};
        case TaskClass::IoBound: return {15.0, 0.8, 6.0, 0.5, 6.0, 12};
    }
    return {};
}

struct WorkloadConfig {
    LoadLevel load = LoadLevel::Medium;
    std::array<double, 3> class_mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    std::int64_t n_tasks = load_profile(LoadLevel::Medium).n_tasks;
    std::uint64_t seed = 0;
    /// 0 selects the load level's default.
    double mean_interarrival = 0.0;
    std::array<ClassParams, 3> classes{default_class_params(TaskClass::CpuBound),
                                       default_class_params(TaskClass::MemoryBound),
                                       default_class_params(TaskClass::IoBound)};
    /// Memory demands are clamped to this so every task fits the default pool.
    std::int64_t mem_limit = 100;

    static WorkloadConfig for_load(LoadLevel level, std::uint64_t seed) {
        WorkloadConfig c;
        c.load = level;
        c.n_tasks = load_profile(level).n_tasks;
        c.seed = seed;
        return c;
    }

    /// Single-class workload at the given load's arrival rate.
    static WorkloadConfig single_class(TaskClass cls, LoadLevel level, std::uint64_t seed) {
        auto c = for_load(level, seed);
        c.class_mix = {0.0, 0.0, 0.0};
        c.class_mix[static_cast<std::size_t>(cls)] = 1.0;
        return c;
    }

    double effective_interarrival() const {
        return mean_interarrival > 0.0 ? mean_interarrival : load_profile(load).mean_interarrival;
    }

    void validate() const {
        if (n_tasks < 0) throw ConfigError("n_tasks must be >= 0");
        if (mean_interarrival < 0.0 || !std::isfinite(mean_interarrival))
            throw ConfigError("mean_interarrival must be finite and >= 0");
        double sum = 0.0;
        for (double w : class_mix) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("class_mix weights must be finite and >= 0");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("class_mix must sum to 1");
        if (mem_limit < 0) throw ConfigError("mem_limit must be >= 0");
        for (std::size_t i = 0; i < classes.size(); ++i) {
            const auto& p = classes[i];
            const std::string prefix(to_string(all_task_classes[i]));
            if (!(p.cpu_mean > 0.0)) throw ConfigError(prefix + ".cpu_mean must be > 0");
            if (!(p.mem_mean > 0.0)) throw ConfigError(prefix + ".mem_mean must be > 0");
            if (!(p.io_mean > 0.0)) throw ConfigError(prefix + ".io_mean must be > 0");
            if (!(p.cpu_sigma >= 0.0) || !(p.mem_sigma >= 0.0)) throw ConfigError(prefix + " sigmas must be >= 0");
            if (p.io_burst < 1) throw ConfigError(prefix + ".io_burst must be >= 1");
        }
    }

    /// Reads `load`, `n_tasks`, `seed`, `class_mix`, `mean_interarrival`,
    /// `mem_limit`, `rng` and `<cpu|mem|io>.<field>` for every ClassParams field.
    static WorkloadConfig from_kv(const KvConfig& kv) {
        std::set<std::string> known{"load", "n_tasks", "seed", "class_mix", "mean_interarrival", "mem_limit", "rng"};
        for (auto cls : all_task_classes) {
            for (const char* f : {"cpu_mean", "cpu_sigma", "mem_mean", "mem_sigma", "io_mean", "io_burst"})
                known.insert(std::string(to_string(cls)) + "." + f);
        }
        kv.require_known(known, "workload config");
        if (kv.get_string("rng", std::string(Rng::algorithm)) != Rng::algorithm)
            throw ConfigError("rng: only '" + std::string(Rng::algorithm) + "' is supported");

        WorkloadConfig c;
        c.load = parse_load_level(kv.get_string("load", "medium"));
        c.n_tasks = kv.get<std::int64_t>("n_tasks", load_profile(c.load).n_tasks);
        c.seed = kv.get<std::uint64_t>("seed", 0);
        c.mean_interarrival = kv.get<double>("mean_interarrival", 0.0);
        c.mem_limit = kv.get<std::int64_t>("mem_limit", c.mem_limit);
        const auto mix = kv.get_list<double>("class_mix", {c.class_mix.begin(), c.class_mix.end()});
        if (mix.size() != 3) throw ConfigError("class_mix needs exactly three weights");
        std::copy(mix.begin(), mix.end(), c.class_mix.begin());
        for (std::size_t i = 0; i < 3; ++i) {
            const std::string p = std::string(to_string(all_task_classes[i])) + ".";
            auto& cp = c.classes[i];
            cp.cpu_mean = kv.get<double>(p + "cpu_mean", cp.cpu_mean);
            cp.cpu_sigma = kv.get<double>(p + "cpu_sigma", cp.cpu_sigma);
            cp.mem_mean = kv.get<double>(p + "mem_mean", cp.mem_mean);
            cp.mem_sigma = kv.get<double>(p + "mem_sigma", cp.mem_sigma);
            cp.io_mean = kv.get<double>(p + "io_mean", cp.io_mean);
            cp.io_burst = kv.get<std::int64_t>(p + "io_burst", cp.io_burst);
        }
        c.validate();
        return c;
    }
};

/// Draws a workload. A pure function of the config, seed included.
///
/// Per task the draws happen in a fixed order (gap, class, work, memory, IO
/// count, priority) so outputs are stable across platforms.
inline Workload generate(const WorkloadConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const double gap_mean = config.effective_interarrival();
    Workload w;
    w.tasks.reserve(static_cast<std::size_t>(config.n_tasks));
    double clock = 0.0;
    for (std::int64_t i = 0; i < config.n_tasks; ++i) {
        clock += rng.exponential(gap_mean);

        const double u = rng.uniform();
        TaskClass cls = TaskClass::IoBound;
        if (u < config.class_mix[0])
            cls = TaskClass::CpuBound;
        else if (u < config.class_mix[0] + config.class_mix[1])
            cls = TaskClass::MemoryBound;
        // Guard against a zero-weight class being picked through rounding at the top end.
        if (config.class_mix[static_cast<std::size_t>(cls)] == 0.0) {
            for (std::size_t k = 3; k-- > 0;) {
                if (config.class_mix[k] > 0.0) {
                    cls = all_task_classes[k];
                    break;
                }
            }
        }
        const auto& p = config.classes[static_cast<std::size_t>(cls)];

        TaskSpec t;
        t.id = i;
        t.task_class = cls;
        t.arrival = static_cast<std::int64_t>(std::floor(clock));
        t.cpu_work = std::max<std::int64_t>(1, std::llround(rng.lognormal_with_mean(p.cpu_mean, p.cpu_sigma)));
        t.mem_demand = std::clamp<std::int64_t>(std::llround(rng.lognormal_with_mean(p.mem_mean, p.mem_sigma)), 0,
                                                config.mem_limit);
        t.io_ops = rng.poisson(p.io_mean);
        if (cls == TaskClass::IoBound) t.io_ops = std::max<std::int64_t>(1, t.io_ops);
        t.io_burst_len = t.io_ops > 0 ? p.io_burst : 0;
        t.priority = rng.uniform_int(0, max_priority);
        w.tasks.push_back(t);
    }
    // Arrivals are non-decreasing and ids ascend, so the (arrival, id) order already holds.
    return w;
}

inline constexpr std::string_view workload_csv_header = "id,class,arrival,cpu_work,mem_demand,io_ops,io_burst_len,priority";

inline void write_workload(const Workload& w, std::ostream& out) {
    out << workload_csv_header << '\n';
    for (const auto& t : w.tasks) {
        out << t.id << ',' << to_string(t.task_class) << ',' << t.arrival << ',' << t.cpu_work << ','
            << t.mem_demand << ',' << t.io_ops << ',' << t.io_burst_len << ',' << t.priority << '\n';
    }
}

inline void write_workload(const Workload& w, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write workload file '" + path + "'");
    write_workload(w, out);
    if (!out) throw IoError("failed writing workload file '" + path + "'");
}

inline Workload parse_workload(std::string_view text) {
    const auto lines = detail::split(text, '\n');
    if (lines.empty() || detail::trim(lines[0]) != workload_csv_header)
        throw ParseError("bad or missing header, expected '" + std::string(workload_csv_header) + "'", 1);
    Workload w;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto line = detail::trim(lines[i]);
        if (line.empty()) continue;
        const auto fields = detail::split(line, ',');
        const std::size_t line_no = i + 1;
        if (fields.size() != 8) throw ParseError("expected 8 fields, got " + std::to_string(fields.size()), line_no);
        TaskSpec t;
        auto num = [&](std::size_t idx, const char* name) {
            std::int64_t v = 0;
            if (!detail::parse_number(fields[idx], v))
                throw ParseError(std::string("field '") + name + "' is not an integer", line_no);
            return v;
        };
        t.id = num(0, "id");
        try {
            t.task_class = parse_task_class(detail::trim(fields[1]));
        } catch (const ConfigError& e) {
            throw ParseError(e.what(), line_no);
        }
        t.arrival = num(2, "arrival");
        t.cpu_work = num(3, "cpu_work");
        t.mem_demand = num(4, "mem_demand");
        t.io_ops = num(5, "io_ops");
        t.io_burst_len = num(6, "io_burst_len");
        t.priority = num(7, "priority");
        try {
            validate(t);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
        w.tasks.push_back(t);
    }
    validate(w);
    return w;
}

inline Workload read_workload(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open workload file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_workload(ss.str());
}

}  // namespace schedrl
