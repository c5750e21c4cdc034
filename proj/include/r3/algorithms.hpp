#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "r3/envs.hpp"
#include "r3/nets.hpp"
#include "r3/ppo.hpp"
#include "r3/replay.hpp"
#include "r3/rng.hpp"

namespace r3 {

enum class Algorithm { Ppo, Ddqn, WeakR3, R3, Dr3 };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(std::string_view name);

/// One finished episode, as written to the metrics CSV.
struct RunRecord {
    long episode = 0;
    long steps = 0;  // cumulative env steps including this episode
    double reward = 0.0;
    bool success = false;
    double smoothed = 0.0;
    std::string phase;
    std::size_t buf_b = 0;
    std::size_t buf_blarge = 0;
    double ms = 0.0;

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct PhaseEvent {
    long episode = 0;
    std::string from;
    std::string to;
    std::size_t buf_b = 0;
    std::size_t buf_blarge = 0;
};

// ---------------------------------------------------------------------------
// Configuration

struct NetConfig {
    std::vector<int> conv_channels{8, 16};
    int kernel = 2;
    std::vector<int> hidden{64, 64};
    Activation conv_activation = Activation::Relu;
    Activation hidden_activation = Activation::Tanh;

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Gridworlds get the conv stem; CartPole (no grid image) uses only the dense stack.
NetArchitecture make_architecture(const EnvSpec& spec, const NetConfig& net, bool has_critic);

struct EntropyConfig {
    double ppo = 0.01;
    double initiator = 0.5;
    double explorer1 = 0.03;
    double explorer2 = 0.02;
    double exploiter = 0.01;

    friend bool operator==(const EntropyConfig&, const EntropyConfig&) = default;
};

struct DdqnConfig {
    std::size_t buffer_capacity = 100000;
    std::size_t batch_size = 64;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    long epsilon_decay_steps = 20000;
    long target_sync_every = 1000;  // in gradient updates
    long learning_starts = 1000;
    long train_every = 1;
    double learning_rate = 5e-4;
    double gamma = 0.99;

    friend bool operator==(const DdqnConfig&, const DdqnConfig&) = default;
};

struct TrainerConfig {
    long max_steps = 300000;
    long max_episodes = 0;  // 0: bounded by max_steps only
    double learning_rate = 3e-4;
    PpoConfig ppo;
    int explorer_epochs = 1;  // initiator and explorers
    EntropyConfig entropy;
    NetConfig net;
    double sigma = 2.0;
    std::size_t buffer_capacity = 10;
    std::size_t large_buffer_capacity = 20;
    std::size_t dr3_capacity = 20;
    Dr3Schedule dr3;
    int success_window = 20;
    /// R3: success-rate cutoff; DR3: fraction of the maximum total reward.
    double degenerate_cutoff = 0.5;
    bool degenerate_enabled = true;
    bool random_initiator = false;
    /// Weak R3 only: false skips every buffer insert, so the loop is plain PPO.
    bool replay_enabled = true;
    double smoothing_alpha = 0.05;
    DdqnConfig ddqn;

    void validate() const;
    friend bool operator==(const TrainerConfig&, const TrainerConfig&) = default;
};

// ---------------------------------------------------------------------------
// Building blocks

struct Agent {
    std::string name;
    PolicyParams net;
    AdamState adam;
    PpoConfig ppo;

    Agent() = default;
    Agent(std::string name, PolicyParams net, double learning_rate, PpoConfig ppo);

    /// foreign: traj was collected by another agent.
    TrainStats train(const Trajectory& traj, bool foreign = false) {
        return train_on_trajectory(net, adam, traj, ppo, foreign);
    }
    ReplayOutcome replay(const Trajectory& traj, double sigma) {
        return train_on_replay(net, adam, traj, sigma, ppo);
    }
};

/// Runs one full episode with net sampling actions from rng.
Trajectory collect_trajectory(Env& env, const PolicyParams& net, Rng& rng, const std::string& tag, long episode);

struct RandomAction {
    int action = 0;
    double probability = 0.0;
};

/// Uniform action with its recorded probability 1 / action_count.
RandomAction random_initiator_action(int action_count, Rng& rng);
Trajectory collect_random_trajectory(Env& env, Rng& rng, const std::string& tag, long episode);

/// Windowed mean of recent per-episode values.
class SuccessTracker {
public:
    explicit SuccessTracker(std::size_t window);
    void push(double value);
    /// Mean over min(window, episodes so far); 0 with no episodes.
    double mean() const;
    std::size_t count() const { return values_.size(); }
    std::size_t window() const { return window_; }

private:
    std::size_t window_;
    std::deque<double> values_;
};

/// R3: true iff windowed success rate >= cutoff. DR3: true iff windowed mean reward
/// > cutoff * max_total_reward. Both are false before the first episode.
bool degenerate_check_r3(const SuccessTracker& tracker, double cutoff);
bool degenerate_check_dr3(const SuccessTracker& tracker, double cutoff, double max_total_reward);

// ---------------------------------------------------------------------------
// Training loops

class Trainer {
public:
    Trainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed);
    virtual ~Trainer() = default;
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    virtual RunRecord run_episode() = 0;
    virtual Algorithm algorithm() const = 0;

    bool finished() const;
    long steps() const { return steps_; }
    long episodes() const { return episodes_; }
    const Env& env() const { return *env_; }
    const TrainerConfig& config() const { return cfg_; }
    const std::vector<PhaseEvent>& events() const { return events_; }
    /// Diagnostics of the most recent on-policy update.
    const TrainStats& last_stats() const { return last_stats_; }

protected:
    RunRecord finish_episode(const Trajectory& traj, std::string phase, std::size_t buf_b, std::size_t buf_blarge);
    Agent make_agent(const std::string& name, bool has_critic, double entropy_coef, int epochs);

    std::unique_ptr<Env> env_;
    TrainerConfig cfg_;
    Rng init_rng_;
    Rng action_rng_;
    Rng replay_rng_;
    long steps_ = 0;
    long episodes_ = 0;
    double smoothed_ = 0.0;
    std::vector<PhaseEvent> events_;
    TrainStats last_stats_;
};

class PpoTrainer final : public Trainer {
public:
    PpoTrainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed);
    RunRecord run_episode() override;
    Algorithm algorithm() const override { return Algorithm::Ppo; }
    const Agent& agent() const { return agent_; }

private:
    Agent agent_;
};

class WeakR3Trainer final : public Trainer {
public:
    WeakR3Trainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed);
    RunRecord run_episode() override;
    Algorithm algorithm() const override { return Algorithm::WeakR3; }
    const Agent& agent() const { return agent_; }
    const CyclicBuffer& buffer() const { return buffer_; }

private:
    Agent agent_;
    CyclicBuffer buffer_;
};

enum class Phase { Starting, Exploiting, Exploring };
std::string to_string(Phase p);

struct PhaseState {
    Phase phase = Phase::Starting;
    bool any_reward_seen = false;
    bool explorer_sync_pending = false;
};

class R3Trainer final : public Trainer {
public:
    R3Trainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed);
    RunRecord run_episode() override;
    Algorithm algorithm() const override { return Algorithm::R3; }

    const PhaseState& phase_state() const { return phase_; }
    bool degenerate() const { return degenerate_; }
    const CyclicBuffer& buffer() const { return buffer_; }
    const CyclicBuffer& large_buffer() const { return large_buffer_; }
    const Agent& initiator() const { return initiator_; }
    const Agent& explorer(int i) const { return i == 1 ? explorer1_ : explorer2_; }
    const Agent& exploiter() const { return exploiter_; }
    /// Number of times the initiator collected an episode.
    long initiator_runs() const { return initiator_runs_; }

private:
    void update_phase();

    Agent initiator_;
    Agent explorer1_;
    Agent explorer2_;
    Agent exploiter_;
    CyclicBuffer buffer_;
    CyclicBuffer large_buffer_;
    PhaseState phase_;
    SuccessTracker tracker_;
    bool degenerate_ = false;
    long initiator_runs_ = 0;
};

class Dr3Trainer final : public Trainer {
public:
    Dr3Trainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed);
    RunRecord run_episode() override;
    Algorithm algorithm() const override { return Algorithm::Dr3; }

    const Agent& agent() const { return agent_; }
    const CyclicBuffer& buffer() const { return buffer_; }
    const RewardStats& stats() const { return stats_; }
    bool degenerate() const { return degenerate_; }

private:
    Agent agent_;
    CyclicBuffer buffer_;
    RewardStats stats_;
    SuccessTracker tracker_;
    bool degenerate_ = false;
};

/// Fixed-capacity ring of single transitions with uniform sampling (with replacement).
class TransitionBuffer {
public:
    explicit TransitionBuffer(std::size_t capacity);
    void push(QTransition t);
    std::vector<QTransition> sample(std::size_t count, Rng& rng) const;
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<QTransition> items_;
};

/// Uniform action with probability epsilon, else the greedy one (lowest id on ties).
RandomAction epsilon_greedy_action(const Vector& q_values, double epsilon, Rng& rng);

class DdqnTrainer final : public Trainer {
public:
    DdqnTrainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed);
    /// Explicit network shape; used with environments outside the built-in set.
    DdqnTrainer(std::unique_ptr<Env> env, const NetArchitecture& arch, const TrainerConfig& cfg, std::uint64_t seed);
    RunRecord run_episode() override;
    Algorithm algorithm() const override { return Algorithm::Ddqn; }

    double epsilon() const;
    const PolicyParams& q_net() const { return q_net_; }
    const PolicyParams& target_net() const { return target_net_; }
    long updates() const { return updates_; }

private:
    void init(const NetArchitecture& arch);

    PolicyParams q_net_;
    PolicyParams target_net_;
    AdamState adam_;
    TransitionBuffer transitions_;
    long updates_ = 0;
};

std::unique_ptr<Trainer> make_trainer(Algorithm algorithm, std::unique_ptr<Env> env, const TrainerConfig& cfg,
                                      std::uint64_t seed);

}  // namespace r3
