#pragma once

#include <deque>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "r3/ppo.hpp"
#include "r3/rng.hpp"

namespace r3 {

struct BufferEntry {
    Trajectory trajectory;
    int usage_count = 0;
    int admissions_survived = 0;  // later admissions while this entry was stored
    double fit_threshold = 0.0;   // per-entry threshold; unused by the R3 buffers
};

/// Fixed-capacity store that evicts its oldest entry on overflow.
class CyclicBuffer {
public:
    explicit CyclicBuffer(std::size_t capacity);

    /// Appends an entry; returns true when the oldest entry was evicted to make room.
    bool insert(Trajectory traj, double fit_threshold = 0.0);
    std::size_t sample_index(Rng& rng) const;
    const BufferEntry& sample_uniform(Rng& rng) const { return entries_[sample_index(rng)]; }
    void drop(std::size_t index);
    void clear() { entries_.clear(); }

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return entries_.empty(); }
    const BufferEntry& operator[](std::size_t i) const { return entries_.at(i); }
    BufferEntry& operator[](std::size_t i) { return entries_.at(i); }
    const std::deque<BufferEntry>& entries() const { return entries_; }

    std::vector<double> rewards() const;

private:
    std::size_t capacity_;
    std::deque<BufferEntry> entries_;
};

double mean_of(std::span<const double> xs);
/// Population standard deviation; 0 for fewer than two samples.
double population_std(std::span<const double> xs);

/// Running record of every finished episode's total reward.
struct RewardStats {
    std::vector<double> all_rewards;

    void record(double total_reward) { all_rewards.push_back(total_reward); }
    double mean() const { return mean_of(all_rewards); }
    double std() const { return population_std(all_rewards); }
};

// ---------------------------------------------------------------------------
// Truncated importance sampling

struct KeepSet {
    std::vector<std::size_t> indices;  // 0-based positions with ratio < sigma
    std::vector<double> ratios;        // pi_anchor(a_i|s_i) / p_i for every step
    std::vector<double> anchor_probs;  // pi_anchor(a_i|s_i) for every step
    double sigma = 2.0;

    double fit() const;
};

constexpr double kNoTruncation = std::numeric_limits<double>::infinity();

KeepSet compute_keep_set(const PolicyParams& net, const Trajectory& traj, double sigma);
double fit(const PolicyParams& net, const Trajectory& traj, double sigma);

/// Raised when no step of a replayed trajectory survives truncation.
class EmptyKeepSet : public std::runtime_error {
public:
    EmptyKeepSet() : std::runtime_error("replay: keep set is empty") {}
};

/// Kept rows of traj with importance weights frozen at the anchor policy.
SurrogateBatch replay_batch(const PolicyParams& net, const Trajectory& traj, const KeepSet& keep,
                            const PpoConfig& cfg);

/// Mean over the keep set of weight * clipped PPO term minus the entropy bonus, evaluated
/// with net as the anchor. Throws EmptyKeepSet.
SurrogateTerms replay_loss(const PolicyParams& net, const Trajectory& traj, double sigma, const PpoConfig& cfg,
                           Gradients* grads = nullptr);

struct ReplayOutcome {
    KeepSet keep;
    bool trained = false;
    TrainStats stats;

    double fit() const { return keep.fit(); }
};

/// Replays traj into net for cfg.epochs steps. The keep set and fit are measured at entry;
/// an empty keep set skips training.
ReplayOutcome train_on_replay(PolicyParams& net, AdamState& adam, const Trajectory& traj, double sigma,
                              const PpoConfig& cfg);

// ---------------------------------------------------------------------------
// Fit thresholds and DR3 rules

/// 0.77 + 0.023 * buffer_len.
double r3_fit_threshold(std::size_t buffer_len);

struct Dr3Schedule {
    double base = 0.6;
    double admission_step = 0.02;
    double usage_step = 0.01;

    friend bool operator==(const Dr3Schedule&, const Dr3Schedule&) = default;
};

struct NewAdmission {};
struct EntryUsed {
    std::size_t index = 0;
};

/// NewAdmission raises every stored entry's threshold; EntryUsed raises one entry's
/// threshold and usage count. Call NewAdmission before inserting the newcomer.
void dr3_threshold_update(CyclicBuffer& buffer, NewAdmission, const Dr3Schedule& schedule = {});
void dr3_threshold_update(CyclicBuffer& buffer, EntryUsed used, const Dr3Schedule& schedule = {});
double dr3_threshold(const BufferEntry& entry, const Dr3Schedule& schedule = {});

/// r_D >= mean(B) when B is nonempty, else r_D > mean(R) + std(R).
bool dr3_admit(const Trajectory& traj, const CyclicBuffer& buffer, const RewardStats& stats);

/// Entries with r_D' > r_D + std(B).
std::vector<std::size_t> dr3_candidates(const CyclicBuffer& buffer, double episode_reward);
std::optional<std::size_t> dr3_select(const CyclicBuffer& buffer, double episode_reward, Rng& rng);

/// One JSON line per entry: trajectory record plus usage_count and fit_threshold.
void dump_buffer(const CyclicBuffer& buffer, std::ostream& out);

}  // namespace r3
