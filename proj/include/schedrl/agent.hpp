#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "schedrl/error.hpp"
#include "schedrl/kv_config.hpp"
#include "schedrl/nn.hpp"
#include "schedrl/rng.hpp"
#include "schedrl/sim.hpp"
#include "schedrl/workload.hpp"

namespace schedrl {

struct Transition {
    std::vector<double> s;
    int a = 0;
    double r = 0.0;
    std::vector<double> s_next;
    bool done = false;
    /// Legal actions in `s_next`; empty means "all legal". Only consulted
    /// when targets are masked.
    ActionMask next_mask;
};

/// Fixed-capacity ring; the oldest transition is evicted first.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("buffer_capacity must be >= 1");
        items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return items_.size(); }
    std::uint64_t inserted() const { return inserted_; }

    void store(Transition t) {
        if (items_.size() < capacity_)
            items_.push_back(std::move(t));
        else
            items_[static_cast<std::size_t>(inserted_ % capacity_)] = std::move(t);
        ++inserted_;
    }

    /// Element `i` in insertion order, 0 being the oldest still held.
    const Transition& at(std::size_t i) const {
        if (i >= items_.size()) throw StateError("replay index out of range");
        if (items_.size() < capacity_) return items_[i];
        return items_[static_cast<std::size_t>((inserted_ + i) % capacity_)];
    }

    /// Uniform draws with replacement.
    std::vector<const Transition*> sample(std::size_t batch_size, Rng& rng) const {
        if (batch_size == 0) throw StateError("cannot sample an empty batch");
        if (items_.size() < batch_size)
            throw StateError("replay buffer holds " + std::to_string(items_.size()) + " transitions, batch needs " +
                             std::to_string(batch_size));
        std::vector<const Transition*> batch;
        batch.reserve(batch_size);
        for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(&items_[rng.uniform_index(items_.size())]);
        return batch;
    }

private:
    std::size_t capacity_;
    std::uint64_t inserted_ = 0;
    std::vector<Transition> items_;
};

struct AgentConfig {
    double gamma = 0.95;
    double lr = 1e-3;
    int batch_size = 64;
    int buffer_capacity = 50000;
    int target_sync_period = 500;
    double eps_start = 1.0;
    double eps_end = 0.05;
    std::int64_t eps_decay_steps = 20000;
    int train_start_size = 1000;
    /// One TD update every this many environment steps.
    int train_every = 4;
    std::uint64_t seed = 0;
    std::vector<int> hidden{128, 64};
    double huber_delta = 1.0;
    /// Restrict the next-state argmax/max to legal actions.
    bool mask_targets = true;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be > 0");
        if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
        if (buffer_capacity < 1) throw ValidationError("buffer_capacity must be >= 1");
        if (batch_size > buffer_capacity) throw ValidationError("batch_size must not exceed buffer_capacity");
        if (target_sync_period < 1) throw ValidationError("target_sync_period must be >= 1");
        if (!(eps_end >= 0.0 && eps_end <= eps_start && eps_start <= 1.0))
            throw ValidationError("need 0 <= eps_end <= eps_start <= 1");
        if (eps_decay_steps < 0) throw ValidationError("eps_decay_steps must be >= 0");
        if (train_start_size < 0) throw ValidationError("train_start_size must be >= 0");
        if (train_every < 1) throw ValidationError("train_every must be >= 1");
        if (!(huber_delta > 0.0)) throw ValidationError("huber_delta must be > 0");
        for (int h : hidden)
            if (h < 1) throw ValidationError("hidden layer sizes must be positive");
    }

    static const std::set<std::string>& keys() {
        static const std::set<std::string> k{"gamma", "lr", "batch_size", "buffer_capacity", "target_sync_period",
                                             "eps_start", "eps_end", "eps_decay_steps", "train_start_size", "train_every", "seed",
                                             "hidden", "huber_delta", "mask_targets"};
        return k;
    }

    /// Unknown keys are left to the caller, which may share the file.
    static AgentConfig from_kv(const KvConfig& kv) {
        AgentConfig c;
        c.gamma = kv.get("gamma", c.gamma);
        c.lr = kv.get("lr", c.lr);
        c.batch_size = kv.get("batch_size", c.batch_size);
        c.buffer_capacity = kv.get("buffer_capacity", c.buffer_capacity);
        c.target_sync_period = kv.get("target_sync_period", c.target_sync_period);
        c.eps_start = kv.get("eps_start", c.eps_start);
        c.eps_end = kv.get("eps_end", c.eps_end);
        c.eps_decay_steps = kv.get("eps_decay_steps", c.eps_decay_steps);
        c.train_start_size = kv.get("train_start_size", c.train_start_size);
        c.train_every = kv.get("train_every", c.train_every);
        c.seed = kv.get("seed", c.seed);
        if (kv.has("hidden")) c.hidden = kv.get_list<int>("hidden", {});
        c.huber_delta = kv.get("huber_delta", c.huber_delta);
        c.mask_targets = kv.get("mask_targets", c.mask_targets ? 1 : 0) != 0;
        c.validate();
        return c;
    }

    KvConfig to_kv() const {
        using detail::format_double;
        KvConfig kv;
        kv.set("gamma", format_double(gamma));
        kv.set("lr", format_double(lr));
        kv.set("batch_size", std::to_string(batch_size));
        kv.set("buffer_capacity", std::to_string(buffer_capacity));
        kv.set("target_sync_period", std::to_string(target_sync_period));
        kv.set("eps_start", format_double(eps_start));
        kv.set("eps_end", format_double(eps_end));
        kv.set("eps_decay_steps", std::to_string(eps_decay_steps));
        kv.set("train_start_size", std::to_string(train_start_size));
        kv.set("train_every", std::to_string(train_every));
        kv.set("seed", std::to_string(seed));
        std::string h;
        for (std::size_t i = 0; i < hidden.size(); ++i) h += (i ? "," : "") + std::to_string(hidden[i]);
        kv.set("hidden", h);
        kv.set("huber_delta", format_double(huber_delta));
        kv.set("mask_targets", mask_targets ? "1" : "0");
        return kv;
    }
};

inline double huber(double x, double delta) {
    const double ax = std::abs(x);
    return ax <= delta ? 0.5 * x * x : delta * (ax - 0.5 * delta);
}

inline double huber_grad(double x, double delta) { return std::clamp(x, -delta, delta); }

/// Index of the largest entry among `mask` (all entries if empty); lowest
/// index wins ties.
template <typename V>
int masked_argmax(const V& q, const ActionMask& mask) {
    int best = -1;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
        if (best < 0 || q(i) > q(best)) best = static_cast<int>(i);
    }
    return best;
}

/// Borrowed view of owned transitions, in the shape sampling produces.
inline std::vector<const Transition*> as_batch(const std::vector<Transition>& batch) {
    std::vector<const Transition*> out;
    out.reserve(batch.size());
    for (const auto& t : batch) out.push_back(&t);
    return out;
}

/// Observations of a batch as matrix columns (`next` picks s_next).
inline void stack_observations(const std::vector<const Transition*>& batch, bool next, int obs_size, nn::Matrix& m) {
    m.resize(obs_size, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& v = next ? batch[b]->s_next : batch[b]->s;
        if (static_cast<int>(v.size()) != obs_size) throw ShapeError("transition observation size mismatch");
        m.col(static_cast<Eigen::Index>(b)) = Eigen::Map<const nn::Vector>(v.data(), obs_size);
    }
}

inline nn::Matrix stack_observations(const std::vector<const Transition*>& batch, bool next, int obs_size) {
    nn::Matrix m;
    stack_observations(batch, next, obs_size, m);
    return m;
}

/// Buffers for target computation and TD updates, reused between batches.
struct TdScratch {
    nn::Matrix s;
    nn::Matrix next;
    nn::Matrix upstream;
    nn::ForwardCache current;
    nn::ForwardCache next_behavior;
    nn::ForwardCache next_target;
    nn::BackwardScratch backward;
    nn::Gradients grads;
};

namespace detail {

inline std::vector<double> bootstrap_targets(const nn::Matrix& q_select, const nn::Matrix& q_eval,
                                             const std::vector<const Transition*>& batch, double gamma,
                                             bool mask_targets) {
    static const ActionMask all_legal;
    std::vector<double> y(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& t = *batch[b];
        if (t.done) {
            y[b] = t.r;
            continue;
        }
        const auto col = static_cast<Eigen::Index>(b);
        const int a_star = masked_argmax(q_select.col(col), mask_targets ? t.next_mask : all_legal);
        y[b] = t.r + gamma * q_eval(a_star, col);
    }
    return y;
}

}  // namespace detail

/// Double DQN targets: `behavior` picks the next action, `target` scores it;
/// terminal transitions yield r. `gamma` may be anything in [0, 1].
inline std::vector<double> ddqn_targets(const nn::Mlp& behavior, const nn::Mlp& target,
                                        const std::vector<const Transition*>& batch, double gamma,
                                        bool mask_targets, TdScratch& scratch) {
    stack_observations(batch, true, target.input_size(), scratch.next);
    nn::forward_cached(behavior, scratch.next, scratch.next_behavior);
    nn::forward_cached(target, scratch.next, scratch.next_target);
    return detail::bootstrap_targets(scratch.next_behavior.output, scratch.next_target.output, batch, gamma,
                                     mask_targets);
}

inline std::vector<double> ddqn_targets(const nn::Mlp& behavior, const nn::Mlp& target,
                                        const std::vector<const Transition*>& batch, double gamma,
                                        bool mask_targets = false) {
    TdScratch scratch;
    return ddqn_targets(behavior, target, batch, gamma, mask_targets, scratch);
}

/// Single-network max targets (`target` both picks and scores).
inline std::vector<double> single_net_targets(const nn::Mlp& target, const std::vector<const Transition*>& batch,
                                              double gamma, bool mask_targets = false) {
    const auto q = nn::forward_batch(target, stack_observations(batch, true, target.input_size()));
    return detail::bootstrap_targets(q, q, batch, gamma, mask_targets);
}

class DdqnAgent {
public:
    DdqnAgent(AgentConfig config, int obs_size, int n_actions)
        : config_(std::move(config)),
          buffer_(static_cast<std::size_t>(std::max(config_.buffer_capacity, 1))),
          rng_(config_.seed ^ 0x9e3779b97f4a7c15ULL) {
        config_.validate();
        if (obs_size < 1 || n_actions < 1) throw ConfigError("agent needs positive observation and action sizes");
        std::vector<int> sizes{obs_size};
        sizes.insert(sizes.end(), config_.hidden.begin(), config_.hidden.end());
        sizes.push_back(n_actions);
        behavior_ = nn::init(sizes, config_.seed);
        target_ = nn::clone(behavior_);
        opt_ = nn::OptimizerState::adam(config_.lr);
    }

    const AgentConfig& config() const { return config_; }
    const nn::Mlp& behavior() const { return behavior_; }
    const nn::Mlp& target() const { return target_; }
    nn::Mlp& behavior_mut() { return behavior_; }
    nn::Mlp& target_mut() { return target_; }
    const nn::OptimizerState& optimizer() const { return opt_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    Rng& rng() { return rng_; }
    std::int64_t step_count() const { return step_count_; }
    std::int64_t env_steps() const { return env_steps_; }
    void count_env_step() { ++env_steps_; }
    int obs_size() const { return behavior_.input_size(); }
    int n_actions() const { return behavior_.output_size(); }

    /// Linear decay from eps_start to eps_end over eps_decay_steps
    /// environment steps, then flat.
    double epsilon(std::int64_t steps) const {
        if (config_.eps_decay_steps == 0 || steps >= config_.eps_decay_steps) return config_.eps_end;
        const double frac = static_cast<double>(std::max<std::int64_t>(steps, 0)) /
                            static_cast<double>(config_.eps_decay_steps);
        return config_.eps_start + (config_.eps_end - config_.eps_start) * frac;
    }
    double epsilon() const { return epsilon(env_steps_); }

    nn::Vector q_values(const std::vector<double>& obs) const {
        return nn::forward(behavior_, Eigen::Map<const nn::Vector>(obs.data(), static_cast<Eigen::Index>(obs.size())));
    }

    int greedy_action(const std::vector<double>& obs, const ActionMask& mask) const {
        check_mask(mask);
        return masked_argmax(q_values(obs), mask);
    }

    /// Epsilon-greedy over legal actions. With eps == 0 no randomness is
    /// consumed.
    int select_action(const std::vector<double>& obs, double eps, const ActionMask& mask) {
        check_mask(mask);
        if (eps > 0.0 && rng_.uniform() < eps) {
            const auto legal = static_cast<std::uint64_t>(std::count(mask.begin(), mask.end(), true));
            auto pick = rng_.uniform_index(legal);
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (!mask[i]) continue;
                if (pick-- == 0) return static_cast<int>(i);
            }
        }
        return masked_argmax(q_values(obs), mask);
    }

    void store(Transition t) {
        if (static_cast<int>(t.s.size()) != obs_size() || static_cast<int>(t.s_next.size()) != obs_size())
            throw ShapeError("transition observation size does not match the network");
        if (t.a < 0 || t.a >= n_actions()) throw StateError("transition action out of range");
        if (!std::isfinite(t.r)) throw NumericError("transition reward is not finite");
        buffer_.store(std::move(t));
    }

    std::vector<const Transition*> sample(std::size_t batch_size) { return buffer_.sample(batch_size, rng_); }

    /// Double DQN targets: the behavior net picks the next action, the target
    /// net scores it.
    std::vector<double> compute_targets(const std::vector<const Transition*>& batch) const {
        return ddqn_targets(behavior_, target_, batch, config_.gamma, config_.mask_targets, scratch_);
    }
    std::vector<double> compute_targets(const std::vector<Transition>& batch) const {
        return compute_targets(as_batch(batch));
    }

    /// Single-network max targets, kept for comparison only.
    std::vector<double> vanilla_targets(const std::vector<const Transition*>& batch) const {
        return single_net_targets(target_, batch, config_.gamma, config_.mask_targets);
    }
    std::vector<double> vanilla_targets(const std::vector<Transition>& batch) const {
        return vanilla_targets(as_batch(batch));
    }

    /// One gradient step on the mean Huber TD error. Returns the loss before
    /// the step.
    double td_update(const std::vector<const Transition*>& batch) {
        if (batch.empty()) throw StateError("td_update needs a non-empty batch");
        const auto y = compute_targets(batch);
        const auto n = static_cast<Eigen::Index>(batch.size());
        auto& w = scratch_;
        stack_observations(batch, false, obs_size(), w.s);
        nn::forward_cached(behavior_, w.s, w.current);
        const auto& cache = w.current;

        auto& upstream = w.upstream;
        upstream.setZero(behavior_.output_size(), n);
        double loss = 0.0;
        for (Eigen::Index b = 0; b < n; ++b) {
            const int a = batch[static_cast<std::size_t>(b)]->a;
            const double err = cache.output(a, b) - y[static_cast<std::size_t>(b)];
            loss += huber(err, config_.huber_delta);
            upstream(a, b) = huber_grad(err, config_.huber_delta) / static_cast<double>(n);
        }
        loss /= static_cast<double>(n);
        if (!std::isfinite(loss)) throw NumericError("non-finite TD loss; update skipped");

        nn::backward_cached(behavior_, cache, upstream, w.grads, w.backward);
        nn::apply_update(behavior_, w.grads, opt_);
        ++step_count_;
        if (step_count_ % config_.target_sync_period == 0) sync_target();
        return loss;
    }
    double td_update(const std::vector<Transition>& batch) { return td_update(as_batch(batch)); }

    void sync_target() { nn::copy_into(behavior_, target_); }

    void save(std::ostream& out) const;
    void save(const std::string& path) const;
    static DdqnAgent load(std::istream& in);
    static DdqnAgent load(const std::string& path);

private:
    static void check_mask(const ActionMask& mask) {
        if (std::find(mask.begin(), mask.end(), true) == mask.end())
            throw StateError("action mask has no legal action");
    }

    AgentConfig config_;
    nn::Mlp behavior_;
    nn::Mlp target_;
    nn::OptimizerState opt_;
    ReplayBuffer buffer_;
    Rng rng_;
    std::int64_t step_count_ = 0;
    std::int64_t env_steps_ = 0;
    mutable TdScratch scratch_;  ///< not part of the agent's value
};

// Agent checkpoint: a header line, the agent config as `key = value` lines,
// counters, both networks and the optimizer in the nn checkpoint layout, and
// the exploration RNG state. The replay buffer is not saved.

inline constexpr std::string_view agent_checkpoint_magic = "schedrl-agent-v1";

inline void DdqnAgent::save(std::ostream& out) const {
    const auto kv = config_.to_kv();
    out << agent_checkpoint_magic << '\n';
    out << "config " << kv.entries().size() << '\n' << kv.to_string();
    out << "obs_size " << obs_size() << "\nn_actions " << n_actions() << '\n';
    out << "step_count " << step_count_ << "\nenv_steps " << env_steps_ << '\n';
    out << "behavior\n";
    nn::write_mlp(out, behavior_);
    out << "target\n";
    nn::write_mlp(out, target_);
    nn::write_optimizer(out, opt_);
    out << "rng " << rng_.engine() << '\n';
    if (!out) throw IoError("failed writing agent checkpoint");
}

inline void DdqnAgent::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
    save(out);
}

inline DdqnAgent DdqnAgent::load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != agent_checkpoint_magic)
        throw ParseError("not an agent checkpoint (bad header)", 1);
    nn::detail::expect(in, "config");
    const auto n_keys = nn::detail::read_number<std::size_t>(in, "config size");
    std::getline(in, line);
    std::string kv_text;
    for (std::size_t i = 0; i < n_keys; ++i) {
        if (!std::getline(in, line)) throw ParseError("checkpoint truncated in config block");
        kv_text += line + "\n";
    }
    const auto kv = KvConfig::parse(kv_text);
    kv.require_known(AgentConfig::keys(), "checkpoint config");
    const auto config = AgentConfig::from_kv(kv);

    nn::detail::expect(in, "obs_size");
    const auto obs = nn::detail::read_number<int>(in, "obs_size");
    nn::detail::expect(in, "n_actions");
    const auto actions = nn::detail::read_number<int>(in, "n_actions");
    DdqnAgent agent(config, obs, actions);
    nn::detail::expect(in, "step_count");
    agent.step_count_ = nn::detail::read_number<std::int64_t>(in, "step_count");
    nn::detail::expect(in, "env_steps");
    agent.env_steps_ = nn::detail::read_number<std::int64_t>(in, "env_steps");
    nn::detail::expect(in, "behavior");
    auto behavior = nn::read_mlp(in);
    nn::detail::expect(in, "target");
    auto target = nn::read_mlp(in);
    if (behavior.layer_sizes != agent.behavior_.layer_sizes || target.layer_sizes != agent.behavior_.layer_sizes)
        throw ShapeError("checkpoint network shapes do not match its config");
    agent.behavior_ = std::move(behavior);
    agent.target_ = std::move(target);
    agent.opt_ = nn::read_optimizer(in, agent.behavior_);
    nn::detail::expect(in, "rng");
    if (!(in >> agent.rng_.engine())) throw ParseError("checkpoint: bad rng state");
    return agent;
}

inline DdqnAgent DdqnAgent::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    return load(in);
}

/// What one training episode runs on.
struct EpisodeSetup {
    EnvConfig env;
    Workload workload;
};

using EnvFactory = std::function<EpisodeSetup(int episode)>;

struct EpisodeLog {
    int episode = 0;
    double loss_mean = std::numeric_limits<double>::quiet_NaN();  ///< NaN when no update ran
    double reward_sum = 0.0;
    double epsilon = 0.0;  ///< at the end of the episode
    MetricsReport metrics;
    std::int64_t steps = 0;
    std::int64_t updates = 0;
};

inline constexpr std::string_view train_log_csv_header =
    "episode,loss_mean,reward_sum,epsilon,mean_completion_ms,throughput_tps,mean_response_ms";

inline std::string train_log_csv_row(const EpisodeLog& e) {
    using detail::format_double;
    return std::to_string(e.episode) + "," + (std::isnan(e.loss_mean) ? "nan" : format_double(e.loss_mean)) + "," +
           format_double(e.reward_sum) + "," + format_double(e.epsilon) + "," +
           format_double(e.metrics.mean_completion_ms) + "," + format_double(e.metrics.throughput_tps) + "," +
           format_double(e.metrics.mean_response_ms);
}

namespace detail {

template <typename E>
[[noreturn]] void rethrow_in_episode(const E& e, int episode) {
    throw E("episode " + std::to_string(episode) + ": " + e.what());
}

}  // namespace detail

/// Runs one episode with exploration and learning; the agent keeps its
/// buffer, counters and networks across calls.
inline EpisodeLog train_episode(DdqnAgent& agent, const EpisodeSetup& setup, int episode) {
    EpisodeLog log;
    log.episode = episode;
    Environment env(setup.env);
    if (env.config().observation_size() != agent.obs_size() || env.action_space().size() != agent.n_actions())
        throw ShapeError("environment shape does not match the agent networks");
    const auto warm = static_cast<std::size_t>(std::max(agent.config().train_start_size, agent.config().batch_size));
    const auto batch = static_cast<std::size_t>(agent.config().batch_size);

    auto obs = env.reset(setup.workload);
    auto mask = env.legal_mask();
    double loss_sum = 0.0;
    while (!env.done()) {
        const int a = agent.select_action(obs, agent.epsilon(), mask);
        auto out = env.step(a);
        agent.count_env_step();
        ++log.steps;
        log.reward_sum += out.reward;
        auto next_mask = out.done ? ActionMask{} : env.legal_mask();
        agent.store({obs, a, out.reward, out.observation, out.done,
                     agent.config().mask_targets ? next_mask : ActionMask{}});
        if (agent.buffer().size() >= warm && agent.env_steps() % agent.config().train_every == 0) {
            loss_sum += agent.td_update(agent.sample(batch));
            ++log.updates;
        }
        obs = std::move(out.observation);
        mask = std::move(next_mask);
    }
    if (log.updates > 0) log.loss_mean = loss_sum / static_cast<double>(log.updates);
    log.epsilon = agent.epsilon();
    log.metrics = env.finalize_metrics();
    return log;
}

/// Fixed-budget training loop: one log record per episode. `on_episode`, if
/// set, sees every record as it is produced.
inline std::vector<EpisodeLog> train(DdqnAgent& agent, const EnvFactory& factory, int episodes,
                                     const std::function<void(const EpisodeLog&)>& on_episode = {}) {
    if (episodes < 0) throw ConfigError("episodes must be >= 0");
    std::vector<EpisodeLog> logs;
    logs.reserve(static_cast<std::size_t>(episodes));
    for (int ep = 0; ep < episodes; ++ep) {
        try {
            logs.push_back(train_episode(agent, factory(ep), ep));
        } catch (const NumericError& e) {
            detail::rethrow_in_episode(e, ep);
        } catch (const InvariantError& e) {
            detail::rethrow_in_episode(e, ep);
        } catch (const StateError& e) {
            detail::rethrow_in_episode(e, ep);
        } catch (const ShapeError& e) {
            detail::rethrow_in_episode(e, ep);
        }
        if (on_episode) on_episode(logs.back());
    }
    return logs;
}

/// Greedy evaluation episode (no exploration, no learning).
inline MetricsReport run_greedy(const DdqnAgent& agent, const Workload& workload, const EnvConfig& config,
                                Environment* keep = nullptr) {
    std::optional<Environment> local;
    Environment& env = keep ? *keep : local.emplace(config);
    if (keep && !(keep->base_config() == config)) env = Environment(config);
    if (env.config().observation_size() != agent.obs_size() || env.action_space().size() != agent.n_actions())
        throw ShapeError("environment shape does not match the agent networks");
    auto obs = env.reset(workload);
    while (!env.done()) obs = env.step(agent.greedy_action(obs, env.legal_mask())).observation;
    return env.finalize_metrics();
}

/// Moving average over the last `window` finite values (NaN entries are
/// skipped; NaN if none in range).
inline std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
    std::vector<double> out(values.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t j = lo; j <= i; ++j) {
            if (std::isnan(values[j])) continue;
            sum += values[j];
            ++n;
        }
        if (n) out[i] = sum / static_cast<double>(n);
    }
    return out;
}

}  // namespace schedrl
