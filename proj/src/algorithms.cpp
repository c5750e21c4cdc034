#include "r3/algorithms.hpp"

#include <algorithm>
#include <stdexcept>

namespace r3 {

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::Ppo: return "ppo";
        case Algorithm::Ddqn: return "ddqn";
        case Algorithm::WeakR3: return "weak_r3";
        case Algorithm::R3: return "r3";
        case Algorithm::Dr3: return "dr3";
    }
    return "unknown";
}

Algorithm algorithm_from_string(std::string_view name) {
    if (name == "ppo") return Algorithm::Ppo;
    if (name == "ddqn") return Algorithm::Ddqn;
    if (name == "weak_r3") return Algorithm::WeakR3;
    if (name == "r3") return Algorithm::R3;
    if (name == "dr3") return Algorithm::Dr3;
    throw std::invalid_argument("unknown algorithm: " + std::string(name));
}

std::string to_string(Phase p) {
    switch (p) {
        case Phase::Starting: return "starting";
        case Phase::Exploiting: return "exploiting";
        case Phase::Exploring: return "exploring";
    }
    return "unknown";
}

NetArchitecture make_architecture(const EnvSpec& spec, const NetConfig& net, bool has_critic) {
    NetArchitecture arch;
    arch.obs_length = spec.obs_length;
    arch.action_count = spec.action_count;
    arch.has_critic = has_critic;
    arch.hidden = net.hidden;
    arch.hidden_activation = net.hidden_activation;
    if (spec.grid_side > 0 && !net.conv_channels.empty()) {
        arch.prefix_length = spec.prefix_length;
        arch.grid_side = spec.grid_side;
        arch.grid_channels = 3;
        arch.conv_channels = net.conv_channels;
        arch.kernel = net.kernel;
        arch.conv_activation = net.conv_activation;
    }
    return arch;
}

void TrainerConfig::validate() const {
    ppo.validate();
    if (max_steps <= 0 && max_episodes <= 0) throw std::invalid_argument("trainer: need max_steps or max_episodes");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("trainer: learning_rate must be positive");
    if (explorer_epochs < 1) throw std::invalid_argument("trainer: explorer_epochs must be at least 1");
    if (sigma < 0.0) throw std::invalid_argument("trainer: sigma must be non-negative");
    if (buffer_capacity == 0 || large_buffer_capacity == 0 || dr3_capacity == 0) {
        throw std::invalid_argument("trainer: buffer capacities must be positive");
    }
    if (success_window < 1) throw std::invalid_argument("trainer: success_window must be at least 1");
    if (!(degenerate_cutoff > 0.0 && degenerate_cutoff <= 1.0)) {
        throw std::invalid_argument("trainer: degenerate_cutoff must be in (0, 1]");
    }
    if (!(smoothing_alpha > 0.0 && smoothing_alpha <= 1.0)) {
        throw std::invalid_argument("trainer: smoothing_alpha must be in (0, 1]");
    }
    if (net.hidden.empty()) throw std::invalid_argument("trainer: at least one hidden layer is required");
    for (int w : net.hidden)
        if (w < 1) throw std::invalid_argument("trainer: hidden widths must be positive");
    for (int c : net.conv_channels)
        if (c < 1) throw std::invalid_argument("trainer: conv channels must be positive");
    if (net.kernel < 1) throw std::invalid_argument("trainer: kernel must be positive");
    if (ddqn.batch_size == 0 || ddqn.buffer_capacity == 0) throw std::invalid_argument("ddqn: sizes must be positive");
    if (ddqn.target_sync_every < 1 || ddqn.train_every < 1) throw std::invalid_argument("ddqn: schedules must be >= 1");
    if (!(ddqn.learning_rate > 0.0)) throw std::invalid_argument("ddqn: learning_rate must be positive");
    if (!(ddqn.gamma > 0.0 && ddqn.gamma <= 1.0)) throw std::invalid_argument("ddqn: gamma must be in (0, 1]");
    if (ddqn.epsilon_start < 0.0 || ddqn.epsilon_start > 1.0 || ddqn.epsilon_end < 0.0 || ddqn.epsilon_end > 1.0) {
        throw std::invalid_argument("ddqn: epsilon must be in [0, 1]");
    }
}

// ---------------------------------------------------------------------------

Agent::Agent(std::string agent_name, PolicyParams params, double learning_rate, PpoConfig cfg)
    : name(std::move(agent_name)),
      net(std::move(params)),
      adam(AdamState::for_params(net, learning_rate)),
      ppo(cfg) {}

Trajectory collect_trajectory(Env& env, const PolicyParams& net, Rng& rng, const std::string& tag, long episode) {
    Trajectory traj;
    traj.source_agent = tag;
    traj.episode_index = episode;
    Observation obs = env.reset();
    while (true) {
        const PolicyOutput out = forward(net, obs);
        const SampledAction pick = sample_action(action_distribution(out.logits), rng);
        StepResult step = env.step(pick.action);
        traj.total_reward += step.reward;
        traj.success = traj.success || step.success;
        traj.transitions.push_back({std::move(obs), pick.action, pick.probability, step.reward, step.done});
        if (step.done) break;
        obs = std::move(step.observation);
    }
    return traj;
}

RandomAction random_initiator_action(int action_count, Rng& rng) {
    if (action_count < 1) throw std::invalid_argument("random_initiator_action: action_count must be positive");
    return {static_cast<int>(rng.below(static_cast<std::size_t>(action_count))), 1.0 / action_count};
}

Trajectory collect_random_trajectory(Env& env, Rng& rng, const std::string& tag, long episode) {
    Trajectory traj;
    traj.source_agent = tag;
    traj.episode_index = episode;
    Observation obs = env.reset();
    while (true) {
        const RandomAction pick = random_initiator_action(env.spec().action_count, rng);
        StepResult step = env.step(pick.action);
        traj.total_reward += step.reward;
        traj.success = traj.success || step.success;
        traj.transitions.push_back({std::move(obs), pick.action, pick.probability, step.reward, step.done});
        if (step.done) break;
        obs = std::move(step.observation);
    }
    return traj;
}

SuccessTracker::SuccessTracker(std::size_t window) : window_(window) {
    if (window == 0) throw std::invalid_argument("SuccessTracker: window must be positive");
}

void SuccessTracker::push(double value) {
    values_.push_back(value);
    if (values_.size() > window_) values_.pop_front();
}

double SuccessTracker::mean() const {
    if (values_.empty()) return 0.0;
    double total = 0.0;
    for (double v : values_) total += v;
    return total / static_cast<double>(values_.size());
}

bool degenerate_check_r3(const SuccessTracker& tracker, double cutoff) {
    return tracker.count() > 0 && tracker.mean() >= cutoff;
}

bool degenerate_check_dr3(const SuccessTracker& tracker, double cutoff, double max_total_reward) {
    return tracker.count() > 0 && tracker.mean() > cutoff * max_total_reward;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed)
    : env_(std::move(env)),
      cfg_(cfg),
      init_rng_(seed, 0x696e6974ULL),
      action_rng_(seed, 0x61637473ULL),
      replay_rng_(seed, 0x7265706cULL) {
    if (!env_) throw std::invalid_argument("Trainer: null environment");
    cfg_.validate();
}

bool Trainer::finished() const {
    if (cfg_.max_steps > 0 && steps_ >= cfg_.max_steps) return true;
    if (cfg_.max_episodes > 0 && episodes_ >= cfg_.max_episodes) return true;
    return false;
}

RunRecord Trainer::finish_episode(const Trajectory& traj, std::string phase, std::size_t buf_b,
                                  std::size_t buf_blarge) {
    steps_ += static_cast<long>(traj.size());
    ++episodes_;
    const double alpha = cfg_.smoothing_alpha;
    smoothed_ = episodes_ == 1 ? traj.total_reward : alpha * traj.total_reward + (1.0 - alpha) * smoothed_;
    RunRecord rec;
    rec.episode = episodes_ - 1;
    rec.steps = steps_;
    rec.reward = traj.total_reward;
    rec.success = traj.success;
    rec.smoothed = smoothed_;
    rec.phase = std::move(phase);
    rec.buf_b = buf_b;
    rec.buf_blarge = buf_blarge;
    return rec;
}

Agent Trainer::make_agent(const std::string& name, bool has_critic, double entropy_coef, int epochs) {
    PpoConfig ppo = cfg_.ppo;
    ppo.epochs = epochs;
    return Agent(name, make_policy(make_architecture(env_->spec(), cfg_.net, has_critic), entropy_coef, init_rng_),
                 cfg_.learning_rate, ppo);
}

// ---------------------------------------------------------------------------

PpoTrainer::PpoTrainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed)
    : Trainer(std::move(env), cfg, seed) {
    agent_ = make_agent("ppo", true, cfg_.entropy.ppo, cfg_.ppo.epochs);
}

RunRecord PpoTrainer::run_episode() {
    const Trajectory traj = collect_trajectory(*env_, agent_.net, action_rng_, agent_.name, episodes_);
    last_stats_ = agent_.train(traj);
    return finish_episode(traj, "ppo", 0, 0);
}

WeakR3Trainer::WeakR3Trainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed)
    : Trainer(std::move(env), cfg, seed), buffer_(cfg.buffer_capacity) {
    agent_ = make_agent("ppo", true, cfg_.entropy.ppo, cfg_.ppo.epochs);
}

RunRecord WeakR3Trainer::run_episode() {
    const Trajectory traj = collect_trajectory(*env_, agent_.net, action_rng_, agent_.name, episodes_);
    if (traj.success && cfg_.replay_enabled) buffer_.insert(traj);
    last_stats_ = agent_.train(traj);
    if (!buffer_.empty()) {
        const std::size_t idx = buffer_.sample_index(replay_rng_);
        const ReplayOutcome out = agent_.replay(buffer_[idx].trajectory, cfg_.sigma);
        if (out.fit() < r3_fit_threshold(buffer_.size())) {
            buffer_.drop(idx);
        } else {
            ++buffer_[idx].usage_count;
        }
    }
    return finish_episode(traj, "weak_r3", buffer_.size(), 0);
}

// ---------------------------------------------------------------------------

R3Trainer::R3Trainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed)
    : Trainer(std::move(env), cfg, seed),
      buffer_(cfg.buffer_capacity),
      large_buffer_(cfg.large_buffer_capacity),
      tracker_(static_cast<std::size_t>(cfg.success_window)) {
    initiator_ = make_agent("initiator", false, cfg_.entropy.initiator, cfg_.explorer_epochs);
    explorer1_ = make_agent("explorer1", false, cfg_.entropy.explorer1, cfg_.explorer_epochs);
    explorer2_ = make_agent("explorer2", false, cfg_.entropy.explorer2, cfg_.explorer_epochs);
    exploiter_ = make_agent("exploiter", true, cfg_.entropy.exploiter, cfg_.ppo.epochs);
}

void R3Trainer::update_phase() {
    Phase next = Phase::Starting;
    if (phase_.any_reward_seen) next = buffer_.empty() ? Phase::Exploring : Phase::Exploiting;
    if (next != phase_.phase) {
        events_.push_back({episodes_, to_string(phase_.phase), to_string(next), buffer_.size(), large_buffer_.size()});
        if (next == Phase::Exploring) phase_.explorer_sync_pending = true;
        phase_.phase = next;
    }
}

RunRecord R3Trainer::run_episode() {
    Trajectory traj;
    std::string tag;
    if (degenerate_) {
        tag = "degenerate";
        traj = collect_trajectory(*env_, exploiter_.net, action_rng_, exploiter_.name, episodes_);
        last_stats_ = exploiter_.train(traj);
    } else {
        tag = to_string(phase_.phase);
        switch (phase_.phase) {
            case Phase::Starting:
                ++initiator_runs_;
                if (cfg_.random_initiator) {
                    traj = collect_random_trajectory(*env_, action_rng_, "random_initiator", episodes_);
                } else {
                    traj = collect_trajectory(*env_, initiator_.net, action_rng_, initiator_.name, episodes_);
                    initiator_.train(traj);
                }
                last_stats_ = exploiter_.train(traj, true);
                break;
            case Phase::Exploiting:
                traj = collect_trajectory(*env_, exploiter_.net, action_rng_, exploiter_.name, episodes_);
                last_stats_ = exploiter_.train(traj);
                if (!traj.success) {
                    const std::size_t idx = buffer_.sample_index(replay_rng_);
                    const ReplayOutcome out = exploiter_.replay(buffer_[idx].trajectory, cfg_.sigma);
                    if (out.fit() < r3_fit_threshold(buffer_.size())) {
                        buffer_.drop(idx);
                    } else {
                        ++buffer_[idx].usage_count;
                    }
                }
                break;
            case Phase::Exploring: {
                if (phase_.explorer_sync_pending) {
                    for (Agent* e : {&explorer1_, &explorer2_}) {
                        e->net = clone_params(exploiter_.net, true, e->net.entropy_coef);
                        e->adam = AdamState::for_params(e->net, cfg_.learning_rate);
                    }
                    phase_.explorer_sync_pending = false;
                }
                Agent& explorer = replay_rng_.coin() ? explorer2_ : explorer1_;
                traj = collect_trajectory(*env_, explorer.net, action_rng_, explorer.name, episodes_);
                explorer.train(traj);
                last_stats_ = exploiter_.train(traj, true);
                if (!large_buffer_.empty()) {
                    const std::size_t idx = large_buffer_.sample_index(replay_rng_);
                    explorer2_.replay(large_buffer_[idx].trajectory, cfg_.sigma);
                    ++large_buffer_[idx].usage_count;
                }
                break;
            }
        }
        if (traj.success) {
            buffer_.insert(traj);
            large_buffer_.insert(traj);
            phase_.any_reward_seen = true;
        }
    }

    RunRecord rec = finish_episode(traj, tag, buffer_.size(), large_buffer_.size());
    tracker_.push(traj.success ? 1.0 : 0.0);
    if (!degenerate_) {
        if (cfg_.degenerate_enabled && degenerate_check_r3(tracker_, cfg_.degenerate_cutoff)) {
            degenerate_ = true;
            events_.push_back({episodes_, to_string(phase_.phase), "degenerate", buffer_.size(), large_buffer_.size()});
        } else {
            update_phase();
        }
    }
    return rec;
}

// ---------------------------------------------------------------------------

Dr3Trainer::Dr3Trainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed)
    : Trainer(std::move(env), cfg, seed),
      buffer_(cfg.dr3_capacity),
      tracker_(static_cast<std::size_t>(cfg.success_window)) {
    agent_ = make_agent("dr3", true, cfg_.entropy.ppo, cfg_.ppo.epochs);
}

RunRecord Dr3Trainer::run_episode() {
    const Trajectory traj = collect_trajectory(*env_, agent_.net, action_rng_, agent_.name, episodes_);
    stats_.record(traj.total_reward);
    if (!degenerate_ && dr3_admit(traj, buffer_, stats_)) {
        dr3_threshold_update(buffer_, NewAdmission{}, cfg_.dr3);
        buffer_.insert(traj, cfg_.dr3.base);
    }
    last_stats_ = agent_.train(traj);
    if (!degenerate_) {
        if (const auto idx = dr3_select(buffer_, traj.total_reward, replay_rng_)) {
            const ReplayOutcome out = agent_.replay(buffer_[*idx].trajectory, cfg_.sigma);
            dr3_threshold_update(buffer_, EntryUsed{*idx}, cfg_.dr3);
            if (out.fit() < buffer_[*idx].fit_threshold) buffer_.drop(*idx);
        }
    }
    RunRecord rec = finish_episode(traj, degenerate_ ? "degenerate" : "dr3", buffer_.size(), 0);
    tracker_.push(traj.total_reward);
    if (!degenerate_ && cfg_.degenerate_enabled &&
        degenerate_check_dr3(tracker_, cfg_.degenerate_cutoff, env_->spec().max_total_reward)) {
        degenerate_ = true;
        events_.push_back({episodes_, "dr3", "degenerate", buffer_.size(), 0});
    }
    return rec;
}

// ---------------------------------------------------------------------------

TransitionBuffer::TransitionBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("TransitionBuffer: capacity must be positive");
}

void TransitionBuffer::push(QTransition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<QTransition> TransitionBuffer::sample(std::size_t count, Rng& rng) const {
    if (items_.empty()) throw std::out_of_range("TransitionBuffer: sample from empty buffer");
    std::vector<QTransition> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(items_[rng.below(items_.size())]);
    return out;
}

RandomAction epsilon_greedy_action(const Vector& q_values, double epsilon, Rng& rng) {
    const int actions = static_cast<int>(q_values.size());
    const int greedy = greedy_action(q_values);
    const int action = rng.uniform() < epsilon ? static_cast<int>(rng.below(static_cast<std::size_t>(actions))) : greedy;
    const double prob = epsilon / actions + (action == greedy ? 1.0 - epsilon : 0.0);
    return {action, prob};
}

DdqnTrainer::DdqnTrainer(std::unique_ptr<Env> env, const TrainerConfig& cfg, std::uint64_t seed)
    : Trainer(std::move(env), cfg, seed), transitions_(cfg.ddqn.buffer_capacity) {
    init(make_architecture(env_->spec(), cfg_.net, false));
}

DdqnTrainer::DdqnTrainer(std::unique_ptr<Env> env, const NetArchitecture& arch, const TrainerConfig& cfg,
                         std::uint64_t seed)
    : Trainer(std::move(env), cfg, seed), transitions_(cfg.ddqn.buffer_capacity) {
    init(arch);
}

void DdqnTrainer::init(const NetArchitecture& arch) {
    if (arch.has_critic || arch.action_count != env_->spec().action_count ||
        arch.obs_length != env_->spec().obs_length) {
        throw std::invalid_argument("DdqnTrainer: architecture does not match the environment");
    }
    q_net_ = make_policy(arch, 0.0, init_rng_);
    target_net_ = q_net_;
    adam_ = AdamState::for_params(q_net_, cfg_.ddqn.learning_rate);
}

double DdqnTrainer::epsilon() const {
    const DdqnConfig& d = cfg_.ddqn;
    if (d.epsilon_decay_steps <= 0 || steps_ >= d.epsilon_decay_steps) return d.epsilon_end;
    const double frac = static_cast<double>(steps_) / static_cast<double>(d.epsilon_decay_steps);
    return d.epsilon_start + frac * (d.epsilon_end - d.epsilon_start);
}

RunRecord DdqnTrainer::run_episode() {
    const DdqnConfig& d = cfg_.ddqn;
    Trajectory traj;
    traj.source_agent = "ddqn";
    traj.episode_index = episodes_;
    Observation obs = env_->reset();
    while (true) {
        const RandomAction pick = epsilon_greedy_action(forward(q_net_, obs).logits, epsilon(), action_rng_);
        StepResult step = env_->step(pick.action);
        traj.total_reward += step.reward;
        traj.success = traj.success || step.success;
        transitions_.push({obs, pick.action, step.reward, step.observation, step.done});
        traj.transitions.push_back({std::move(obs), pick.action, pick.probability, step.reward, step.done});

        const long global_step = steps_ + static_cast<long>(traj.size());
        if (static_cast<long>(transitions_.size()) >= std::max<long>(d.learning_starts, static_cast<long>(d.batch_size)) &&
            global_step % d.train_every == 0) {
            const std::vector<QTransition> batch = transitions_.sample(d.batch_size, replay_rng_);
            ddqn_update(q_net_, target_net_, batch, d.gamma, adam_);
            ++updates_;
            if (updates_ % d.target_sync_every == 0) target_net_ = q_net_;
        }
        if (step.done) break;
        obs = std::move(step.observation);
    }
    return finish_episode(traj, "ddqn", transitions_.size(), 0);
}

std::unique_ptr<Trainer> make_trainer(Algorithm algorithm, std::unique_ptr<Env> env, const TrainerConfig& cfg,
                                      std::uint64_t seed) {
    switch (algorithm) {
        case Algorithm::Ppo: return std::make_unique<PpoTrainer>(std::move(env), cfg, seed);
        case Algorithm::Ddqn: return std::make_unique<DdqnTrainer>(std::move(env), cfg, seed);
        case Algorithm::WeakR3: return std::make_unique<WeakR3Trainer>(std::move(env), cfg, seed);
        case Algorithm::R3: return std::make_unique<R3Trainer>(std::move(env), cfg, seed);
        case Algorithm::Dr3: return std::make_unique<Dr3Trainer>(std::move(env), cfg, seed);
    }
    throw std::invalid_argument("make_trainer: unknown algorithm");
}

}  // namespace r3
