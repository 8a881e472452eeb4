// Runs the three classical policies on one generated workload per load level
// and prints a metrics CSV to stdout.

#include <iostream>

#include "schedrl/baselines.hpp"

int main(int argc, char** argv) {
    using namespace schedrl;
    const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 0;
    const EnvConfig env;

    std::cout << metrics_csv_header << '\n';
    for (auto level : all_load_levels) {
        const auto workload = generate(WorkloadConfig::for_load(level, seed));
        for (const auto& policy : {BaselinePolicy::fcfs(), BaselinePolicy::sjf(), BaselinePolicy::rr()})
            std::cout << metrics_csv_row(to_string(policy.kind), to_string(level), run_policy(policy, workload, env))
                      << '\n';
    }
}
