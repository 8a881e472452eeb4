#include <iostream>

#include <CLI11.hpp>

#include "schedrl/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Scheduling simulator, DDQN agent and baseline experiments"};
    app.require_subcommand(1, 1);

    schedrl::ExperimentSpec spec;
    std::string seeds = "0..9";
    int episodes = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--env", spec.env_path, "environment config file");
        cmd->add_option("--agent", spec.agent_path, "agent config file");
        cmd->add_option("--workload", spec.workload, "'generated', a workload CSV, or a workload config file");
        cmd->add_option("--seeds", seeds, "evaluation seeds: 'a..b' or a comma-separated list");
        cmd->add_option("--out", spec.out_dir, "output directory");
        cmd->add_option("--episodes", episodes, "training episodes (overrides the agent config)");
        cmd->add_option("--checkpoint", spec.checkpoint, "checkpoint path (default <out>/checkpoint.txt)");
        cmd->add_option("--policy", spec.policy, "fcfs|sjf|rr|ddqn|all");
        cmd->add_flag("--train", spec.train_first, "train first when the checkpoint is missing");
        cmd->add_flag("-q,--quiet", spec.quiet, "no progress output");
    };
    auto* train = app.add_subcommand("train", "train the agent; writes train_log.csv and a checkpoint");
    auto* compare = app.add_subcommand("compare", "FCFS/SJF/RR/DDQN on held-out seeds; writes compare.csv");
    auto* sweep_load = app.add_subcommand("sweep-load", "light/medium/heavy sweep; writes sweep_load.csv");
    auto* sweep_class = app.add_subcommand("sweep-class", "single-class sweep; writes sweep_class.csv");
    for (auto* c : {train, compare, sweep_load, sweep_class}) add_common(c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        spec.command = schedrl::parse_command(app.get_subcommands().front()->get_name());
        spec.seeds = schedrl::parse_seeds(seeds);
        if (episodes >= 0) spec.episodes = episodes;
        schedrl::run_command(spec, spec.quiet ? nullptr : &std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "schedrl: " << e.what() << '\n';
        return schedrl::exit_code_for(e);
    }
    return 0;
}
