#pragma once

#include <span>
#include <string>
#include <vector>

#include "r3/envs.hpp"
#include "r3/nets.hpp"

namespace r3 {

struct Transition {
    Observation obs;
    int action = 0;
    double behavior_prob = 1.0;  // probability the collecting policy gave to action
    double reward = 0.0;
    bool done = false;
};

struct Trajectory {
    std::vector<Transition> transitions;
    double total_reward = 0.0;
    bool success = false;
    std::string source_agent;
    long episode_index = 0;

    std::size_t size() const { return transitions.size(); }
    Matrix observations() const;
    std::vector<int> actions() const;
};

/// Checks the Transition/Trajectory invariants; throws std::invalid_argument.
void validate(const Trajectory& traj);

struct AdvantageSet {
    std::vector<double> advantages;
    std::vector<double> returns;
    double gamma = 0.99;
    double lam = 0.95;
};

struct PpoConfig {
    double clip_epsilon = 0.2;
    double gamma = 0.99;
    double lam = 0.95;
    double value_loss_coef = 0.5;
    int epochs = 4;
    bool advantage_normalization = false;
    /// Global gradient-norm clip; 0 disables.
    double max_grad_norm = 0.0;

    void validate() const;
    friend bool operator==(const PpoConfig&, const PpoConfig&) = default;
};

/// values holds one estimate per state plus the bootstrap value at index N.
AdvantageSet compute_gae(const Trajectory& traj, std::span<const double> values, double gamma, double lam);

/// -min(rho * A, clip(rho, 1 - eps, 1 + eps) * A) with rho = new_prob / old_prob.
double ppo_clip_loss(double new_prob, double old_prob, double advantage, double clip_epsilon);

/// Derivative of ppo_clip_loss with respect to the ratio (zero on the clipped branch).
double ppo_clip_loss_dratio(double ratio, double advantage, double clip_epsilon);

/// Rows of a surrogate objective:
///   (1/M) sum_i [ w_i * L_i(rho_i) - e * H_i ] + c_v * (1/M) sum_i (v_i - R_i)^2
/// where rho_i = pi(a_i|s_i) / anchor_prob_i and M is the number of rows.
struct SurrogateBatch {
    Matrix observations;
    std::vector<int> actions;
    std::vector<double> anchor_probs;
    std::vector<double> advantages;
    std::vector<double> weights;
    std::vector<double> returns;  // empty: no value term

    std::size_t size() const { return actions.size(); }
};

struct SurrogateTerms {
    double loss = 0.0;
    double policy_loss = 0.0;  // mean weighted clipped term
    double entropy = 0.0;      // mean policy entropy
    double value_loss = 0.0;   // mean squared value error
    double mean_ratio = 0.0;
    double clip_fraction = 0.0;
};

/// Evaluates the surrogate; fills grads with its exact gradient when non-null.
SurrogateTerms evaluate_surrogate(const PolicyParams& net, const SurrogateBatch& batch, double clip_epsilon,
                                  double value_loss_coef, Gradients* grads);

/// Probability of each taken action under net.
std::vector<double> action_probabilities(const PolicyParams& net, const Matrix& observations,
                                         std::span<const int> actions);

/// Advantages from the network's critic at call time; critic-free networks use the
/// discounted reward-to-go (zero values, lam = 1).
AdvantageSet estimate_advantages(const PolicyParams& net, const Trajectory& traj, const PpoConfig& cfg);

/// Rescales grads so their global norm is at most max_norm (no-op when max_norm <= 0).
void clip_gradients(Gradients& grads, double max_norm);

struct TrainStats {
    std::vector<SurrogateTerms> epochs;  // terms measured before each update
};

/// PPO update on one trajectory. The ratio anchor is net as it is on entry, or the recorded
/// behavior probabilities when the trajectory came from another policy.
TrainStats train_on_trajectory(PolicyParams& net, AdamState& adam, const Trajectory& traj, const PpoConfig& cfg,
                               bool anchor_on_behavior = false);

// ---------------------------------------------------------------------------
// Double DQN

struct QTransition {
    Observation obs;
    int action = 0;
    double reward = 0.0;
    Observation next_obs;
    bool done = false;
};

/// Lowest action id wins ties.
int greedy_action(const Eigen::Ref<const Vector>& q_values);

/// y = r + gamma * (1 - done) * Q_target(s', argmax_a Q(s', a)).
std::vector<double> ddqn_targets(const PolicyParams& q_net, const PolicyParams& target_net,
                                 std::span<const QTransition> batch, double gamma);

/// One squared-error step toward the double-Q targets; returns the pre-update loss.
double ddqn_update(PolicyParams& q_net, const PolicyParams& target_net, std::span<const QTransition> batch,
                   double gamma, AdamState& adam);

}  // namespace r3
