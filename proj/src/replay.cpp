#include "r3/replay.hpp"

#include "r3/trajectory_io.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

namespace r3 {

CyclicBuffer::CyclicBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("CyclicBuffer: capacity must be positive");
}

bool CyclicBuffer::insert(Trajectory traj, double fit_threshold) {
    bool evicted = false;
    if (entries_.size() == capacity_) {
        entries_.pop_front();
        evicted = true;
    }
    BufferEntry entry;
    entry.trajectory = std::move(traj);
    entry.fit_threshold = fit_threshold;
    entries_.push_back(std::move(entry));
    return evicted;
}

std::size_t CyclicBuffer::sample_index(Rng& rng) const {
    if (entries_.empty()) throw std::out_of_range("CyclicBuffer: sample from empty buffer");
    return rng.below(entries_.size());
}

void CyclicBuffer::drop(std::size_t index) {
    if (index >= entries_.size()) throw std::out_of_range("CyclicBuffer: drop index out of range");
    entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(index));
}

std::vector<double> CyclicBuffer::rewards() const {
    std::vector<double> out;
    out.reserve(entries_.size());
    for (const BufferEntry& e : entries_) out.push_back(e.trajectory.total_reward);
    return out;
}

double mean_of(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double population_std(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double mean = mean_of(xs);
    double sq = 0.0;
    for (double x : xs) sq += (x - mean) * (x - mean);
    return std::sqrt(sq / static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------

double KeepSet::fit() const {
    if (ratios.empty()) return 0.0;
    return static_cast<double>(indices.size()) / static_cast<double>(ratios.size());
}

KeepSet compute_keep_set(const PolicyParams& net, const Trajectory& traj, double sigma) {
    KeepSet keep;
    keep.sigma = sigma;
    if (traj.size() == 0) return keep;
    const std::vector<int> actions = traj.actions();
    keep.anchor_probs = action_probabilities(net, traj.observations(), actions);
    keep.ratios.resize(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        keep.ratios[i] = keep.anchor_probs[i] / traj.transitions[i].behavior_prob;
        if (keep.ratios[i] < sigma) keep.indices.push_back(i);
    }
    return keep;
}

double fit(const PolicyParams& net, const Trajectory& traj, double sigma) {
    if (traj.size() == 0) throw std::invalid_argument("fit: empty trajectory");
    return compute_keep_set(net, traj, sigma).fit();
}

SurrogateBatch replay_batch(const PolicyParams& net, const Trajectory& traj, const KeepSet& keep,
                            const PpoConfig& cfg) {
    if (keep.indices.empty()) throw EmptyKeepSet();
    const AdvantageSet adv = estimate_advantages(net, traj, cfg);
    std::vector<double> advantages = adv.advantages;
    if (cfg.advantage_normalization && advantages.size() > 1) {
        const double mean = mean_of(advantages);
        const double sd = population_std(advantages);
        for (double& a : advantages) a = (a - mean) / (sd + 1e-8);
    }

    SurrogateBatch batch;
    const Eigen::Index width = static_cast<Eigen::Index>(traj.transitions.front().obs.size());
    batch.observations.resize(static_cast<Eigen::Index>(keep.indices.size()), width);
    for (std::size_t r = 0; r < keep.indices.size(); ++r) {
        const std::size_t i = keep.indices[r];
        const Transition& t = traj.transitions[i];
        batch.observations.row(static_cast<Eigen::Index>(r)) =
            Eigen::Map<const Eigen::RowVectorXd>(t.obs.data(), width);
        batch.actions.push_back(t.action);
        batch.anchor_probs.push_back(keep.anchor_probs[i]);
        batch.advantages.push_back(advantages[i]);
        batch.weights.push_back(keep.ratios[i]);
    }
    return batch;
}

SurrogateTerms replay_loss(const PolicyParams& net, const Trajectory& traj, double sigma, const PpoConfig& cfg,
                           Gradients* grads) {
    const KeepSet keep = compute_keep_set(net, traj, sigma);
    const SurrogateBatch batch = replay_batch(net, traj, keep, cfg);
    return evaluate_surrogate(net, batch, cfg.clip_epsilon, 0.0, grads);
}

ReplayOutcome train_on_replay(PolicyParams& net, AdamState& adam, const Trajectory& traj, double sigma,
                              const PpoConfig& cfg) {
    ReplayOutcome out;
    out.keep = compute_keep_set(net, traj, sigma);
    if (out.keep.indices.empty()) return out;
    const SurrogateBatch batch = replay_batch(net, traj, out.keep, cfg);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Gradients grads;
        out.stats.epochs.push_back(evaluate_surrogate(net, batch, cfg.clip_epsilon, 0.0, &grads));
        clip_gradients(grads, cfg.max_grad_norm);
        adam_step(net, grads, adam);
    }
    out.trained = true;
    return out;
}

// ---------------------------------------------------------------------------

double r3_fit_threshold(std::size_t buffer_len) {
    return 0.77 + 0.023 * static_cast<double>(buffer_len);
}

double dr3_threshold(const BufferEntry& entry, const Dr3Schedule& schedule) {
    return schedule.base + schedule.admission_step * entry.admissions_survived +
           schedule.usage_step * entry.usage_count;
}

void dr3_threshold_update(CyclicBuffer& buffer, NewAdmission, const Dr3Schedule& schedule) {
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        BufferEntry& e = buffer[i];
        ++e.admissions_survived;
        e.fit_threshold = dr3_threshold(e, schedule);
    }
}

void dr3_threshold_update(CyclicBuffer& buffer, EntryUsed used, const Dr3Schedule& schedule) {
    if (used.index >= buffer.size()) throw std::out_of_range("dr3_threshold_update: index out of range");
    BufferEntry& e = buffer[used.index];
    ++e.usage_count;
    e.fit_threshold = dr3_threshold(e, schedule);
}

bool dr3_admit(const Trajectory& traj, const CyclicBuffer& buffer, const RewardStats& stats) {
    if (!buffer.empty()) {
        const std::vector<double> stored = buffer.rewards();
        return traj.total_reward >= mean_of(stored);
    }
    return traj.total_reward > stats.mean() + stats.std();
}

std::vector<std::size_t> dr3_candidates(const CyclicBuffer& buffer, double episode_reward) {
    const std::vector<double> stored = buffer.rewards();
    const double bar = episode_reward + population_std(stored);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < stored.size(); ++i) {
        if (stored[i] > bar) out.push_back(i);
    }
    return out;
}

std::optional<std::size_t> dr3_select(const CyclicBuffer& buffer, double episode_reward, Rng& rng) {
    const std::vector<std::size_t> candidates = dr3_candidates(buffer, episode_reward);
    if (candidates.empty()) return std::nullopt;
    return candidates[rng.below(candidates.size())];
}

void dump_buffer(const CyclicBuffer& buffer, std::ostream& out) {
    for (const BufferEntry& e : buffer.entries()) {
        nlohmann::json record = trajectory_to_json(e.trajectory);
        record["usage_count"] = e.usage_count;
        record["fit_threshold"] = e.fit_threshold;
        out << record.dump() << '\n';
    }
}

}  // namespace r3
