#include "r3/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace r3 {

Matrix Trajectory::observations() const {
    std::vector<Observation> rows;
    rows.reserve(transitions.size());
    for (const Transition& t : transitions) rows.push_back(t.obs);
    return stack_observations(rows);
}

std::vector<int> Trajectory::actions() const {
    std::vector<int> out;
    out.reserve(transitions.size());
    for (const Transition& t : transitions) out.push_back(t.action);
    return out;
}

void validate(const Trajectory& traj) {
    double total = 0.0;
    for (std::size_t i = 0; i < traj.transitions.size(); ++i) {
        const Transition& t = traj.transitions[i];
        if (!(t.behavior_prob > 0.0) || t.behavior_prob > 1.0) {
            throw std::invalid_argument("trajectory: behavior probability outside (0, 1]");
        }
        if (t.done && i + 1 != traj.transitions.size()) {
            throw std::invalid_argument("trajectory: done flag before the last transition");
        }
        total += t.reward;
    }
    if (std::abs(total - traj.total_reward) > 1e-9 * std::max(1.0, std::abs(total))) {
        throw std::invalid_argument("trajectory: total_reward does not match the rewards");
    }
}

void PpoConfig::validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw std::invalid_argument("ppo: clip_epsilon must be in (0, 1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo: gamma must be in (0, 1]");
    if (!(lam > 0.0 && lam <= 1.0)) throw std::invalid_argument("ppo: lam must be in (0, 1]");
    if (epochs < 1) throw std::invalid_argument("ppo: epochs must be at least 1");
    if (value_loss_coef < 0.0) throw std::invalid_argument("ppo: value_loss_coef must be non-negative");
}

AdvantageSet compute_gae(const Trajectory& traj, std::span<const double> values, double gamma, double lam) {
    const std::size_t n = traj.size();
    if (values.size() != n + 1) {
        throw std::invalid_argument("compute_gae: expected " + std::to_string(n + 1) + " values, got " +
                                    std::to_string(values.size()));
    }
    AdvantageSet out;
    out.gamma = gamma;
    out.lam = lam;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double running = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        const Transition& t = traj.transitions[k];
        const double not_done = t.done ? 0.0 : 1.0;
        const double delta = t.reward + gamma * values[k + 1] * not_done - values[k];
        running = delta + gamma * lam * not_done * running;
        out.advantages[k] = running;
        out.returns[k] = running + values[k];
    }
    return out;
}

double ppo_clip_loss(double new_prob, double old_prob, double advantage, double clip_epsilon) {
    const double ratio = new_prob / old_prob;
    const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    return -std::min(ratio * advantage, clipped * advantage);
}

double ppo_clip_loss_dratio(double ratio, double advantage, double clip_epsilon) {
    const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    return ratio * advantage <= clipped * advantage ? -advantage : 0.0;
}

std::vector<double> action_probabilities(const PolicyParams& net, const Matrix& observations,
                                         std::span<const int> actions) {
    const ForwardPass pass = forward_batch(net, observations);
    std::vector<double> probs(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const Vector dist = action_distribution(pass.logits().row(static_cast<Eigen::Index>(i)).transpose());
        probs[i] = dist[actions[i]];
    }
    return probs;
}

SurrogateTerms evaluate_surrogate(const PolicyParams& net, const SurrogateBatch& batch, double clip_epsilon,
                                  double value_loss_coef, Gradients* grads) {
    const std::size_t m = batch.size();
    if (m == 0) throw std::invalid_argument("evaluate_surrogate: empty batch");
    if (batch.anchor_probs.size() != m || batch.advantages.size() != m || batch.weights.size() != m ||
        static_cast<std::size_t>(batch.observations.rows()) != m) {
        throw std::invalid_argument("evaluate_surrogate: ragged batch");
    }
    const bool with_value = !batch.returns.empty();
    if (with_value && (!net.has_critic() || batch.returns.size() != m)) {
        throw std::invalid_argument("evaluate_surrogate: value targets need a critic and one return per row");
    }

    const ForwardPass pass = forward_batch(net, batch.observations);
    const int actions = net.action_count();
    const double inv_m = 1.0 / static_cast<double>(m);
    const double e = net.entropy_coef;
    Matrix d_head = Matrix::Zero(pass.head.rows(), pass.head.cols());

    SurrogateTerms terms;
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const Vector p = action_distribution(pass.logits().row(row).transpose());
        const double h = entropy(p);
        const int a = batch.actions[i];
        const double ratio = p[a] / batch.anchor_probs[i];
        const double adv = batch.advantages[i];
        const double w = batch.weights[i];
        const double clip_term = ppo_clip_loss(p[a], batch.anchor_probs[i], adv, clip_epsilon);

        terms.policy_loss += w * clip_term * inv_m;
        terms.entropy += h * inv_m;
        terms.mean_ratio += ratio;
        if (std::abs(ratio - 1.0) > clip_epsilon) ++clipped;

        const double g_ratio = w * ppo_clip_loss_dratio(ratio, adv, clip_epsilon);
        for (int j = 0; j < actions; ++j) {
            const double indicator = j == a ? 1.0 : 0.0;
            const double d_ratio = ratio * (indicator - p[j]);
            const double d_entropy = p[j] > 0.0 ? -p[j] * (std::log(p[j]) + h) : 0.0;
            d_head(row, j) = inv_m * (g_ratio * d_ratio - e * d_entropy);
        }
        if (with_value) {
            const double err = pass.head(row, actions) - batch.returns[i];
            terms.value_loss += err * err * inv_m;
            d_head(row, actions) = inv_m * value_loss_coef * 2.0 * err;
        }
    }
    terms.mean_ratio /= static_cast<double>(m);
    terms.clip_fraction = static_cast<double>(clipped) * inv_m;
    terms.loss = terms.policy_loss - e * terms.entropy + value_loss_coef * terms.value_loss;
    if (!std::isfinite(terms.loss)) throw std::domain_error("evaluate_surrogate: non-finite loss");
    if (grads) *grads = backprop(net, pass, d_head);
    return terms;
}

AdvantageSet estimate_advantages(const PolicyParams& net, const Trajectory& traj, const PpoConfig& cfg) {
    const std::size_t n = traj.size();
    std::vector<double> values(n + 1, 0.0);
    if (!net.has_critic()) {
        AdvantageSet adv = compute_gae(traj, values, cfg.gamma, 1.0);
        adv.returns.assign(n, 0.0);
        return adv;
    }
    const ForwardPass pass = forward_batch(net, traj.observations());
    const Vector v = pass.values();
    for (std::size_t i = 0; i < n; ++i) values[i] = v[static_cast<Eigen::Index>(i)];
    // Episodes cut short without a done flag bootstrap from the last state estimate.
    if (n > 0 && !traj.transitions.back().done) values[n] = values[n - 1];
    return compute_gae(traj, values, cfg.gamma, cfg.lam);
}

void clip_gradients(Gradients& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > max_norm) grads *= max_norm / norm;
}

namespace {

void normalize(std::vector<double>& xs) {
    if (xs.size() < 2) return;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(xs.size()));
    for (double& x : xs) x = (x - mean) / (sd + 1e-8);
}

}  // namespace

TrainStats train_on_trajectory(PolicyParams& net, AdamState& adam, const Trajectory& traj, const PpoConfig& cfg,
                               bool anchor_on_behavior) {
    if (traj.size() == 0) throw std::invalid_argument("train_on_trajectory: empty trajectory");
    SurrogateBatch batch;
    batch.observations = traj.observations();
    batch.actions = traj.actions();
    for (int a : batch.actions) {
        if (a < 0 || a >= net.action_count()) throw std::invalid_argument("train_on_trajectory: action out of range");
    }
    if (anchor_on_behavior) {
        for (const auto& tr : traj.transitions) batch.anchor_probs.push_back(tr.behavior_prob);
    } else {
        batch.anchor_probs = action_probabilities(net, batch.observations, batch.actions);
    }
    AdvantageSet adv = estimate_advantages(net, traj, cfg);
    if (cfg.advantage_normalization) normalize(adv.advantages);
    batch.advantages = std::move(adv.advantages);
    batch.weights.assign(traj.size(), 1.0);
    if (net.has_critic()) batch.returns = std::move(adv.returns);

    TrainStats stats;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Gradients grads;
        stats.epochs.push_back(evaluate_surrogate(net, batch, cfg.clip_epsilon, cfg.value_loss_coef, &grads));
        clip_gradients(grads, cfg.max_grad_norm);
        adam_step(net, grads, adam);
    }
    return stats;
}

// ---------------------------------------------------------------------------

int greedy_action(const Eigen::Ref<const Vector>& q_values) {
    int best = 0;
    for (Eigen::Index a = 1; a < q_values.size(); ++a) {
        if (q_values[a] > q_values[best]) best = static_cast<int>(a);
    }
    return best;
}

namespace {

Matrix stack_next(std::span<const QTransition> batch) {
    std::vector<Observation> rows;
    rows.reserve(batch.size());
    for (const QTransition& t : batch) rows.push_back(t.next_obs);
    return stack_observations(rows);
}

}  // namespace

std::vector<double> ddqn_targets(const PolicyParams& q_net, const PolicyParams& target_net,
                                 std::span<const QTransition> batch, double gamma) {
    const Matrix next = stack_next(batch);
    const ForwardPass online = forward_batch(q_net, next);
    const ForwardPass target = forward_batch(target_net, next);
    std::vector<double> y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        if (batch[i].done) {
            y[i] = batch[i].reward;
            continue;
        }
        const int a_star = greedy_action(online.logits().row(row).transpose());
        y[i] = batch[i].reward + gamma * target.logits()(row, a_star);
    }
    return y;
}

double ddqn_update(PolicyParams& q_net, const PolicyParams& target_net, std::span<const QTransition> batch,
                   double gamma, AdamState& adam) {
    if (batch.empty()) throw std::invalid_argument("ddqn_update: empty batch");
    const std::vector<double> y = ddqn_targets(q_net, target_net, batch, gamma);
    std::vector<Observation> rows;
    rows.reserve(batch.size());
    for (const QTransition& t : batch) rows.push_back(t.obs);
    const ForwardPass pass = forward_batch(q_net, stack_observations(rows));

    const double inv_m = 1.0 / static_cast<double>(batch.size());
    Matrix d_head = Matrix::Zero(pass.head.rows(), pass.head.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const int a = batch[i].action;
        if (a < 0 || a >= q_net.action_count()) throw std::invalid_argument("ddqn_update: action out of range");
        const double err = pass.head(row, a) - y[i];
        loss += err * err * inv_m;
        d_head(row, a) = 2.0 * err * inv_m;
    }
    adam_step(q_net, backprop(q_net, pass, d_head), adam);
    return loss;
}

}  // namespace r3
