#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <cmath>
#include <vector>

#include "r3/envs.hpp"
#include "r3/nets.hpp"
#include "r3/ppo.hpp"
#include "r3/rng.hpp"

namespace r3::testing {

inline NetArchitecture small_grid_arch(bool critic, int side = 4) {
    NetArchitecture a;
    a.prefix_length = 4;
    a.grid_side = side;
    a.grid_channels = 3;
    a.obs_length = 4 + side * side * 3;
    a.conv_channels = {3, 2};
    a.kernel = 2;
    a.hidden = {5};
    a.action_count = 3;
    a.has_critic = critic;
    return a;
}

inline NetArchitecture small_dense_arch(bool critic) {
    NetArchitecture a;
    a.obs_length = 4;
    a.hidden = {6, 5};
    a.action_count = 2;
    a.has_critic = critic;
    return a;
}

inline Observation random_observation(const NetArchitecture& arch, Rng& rng) {
    Observation o(static_cast<std::size_t>(arch.obs_length));
    for (double& v : o) v = rng.uniform(-1.0, 1.0);
    return o;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
    return m;
}

inline Matrix random_batch(const NetArchitecture& arch, int rows, Rng& rng) {
    return random_matrix(rows, arch.obs_length, rng);
}

inline void randomize(PolicyParams& net, Rng& rng, double scale) {
    for (auto& l : net.layers) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.uniform(-scale, scale);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-scale, scale);
    }
}

inline double apply(Activation a, double z) {
    switch (a) {
        case Activation::Tanh: return std::tanh(z);
        case Activation::Relu: return z > 0 ? z : 0.0;
        case Activation::Identity: return z;
    }
    return z;
}

// Plain loops over the documented layout: HWC image after the prefix, valid
// stride-1 convolutions, prefix joined in front of the flattened conv output.
inline std::vector<double> oracle_forward(const PolicyParams& net, const Observation& obs) {
    const auto& arch = net.arch;
    std::vector<double> x;
    std::size_t li = 0;
    if (!arch.conv_channels.empty()) {
        int side = arch.grid_side, ch = arch.grid_channels;
        std::vector<double> img(obs.begin() + arch.prefix_length, obs.end());
        for (; li < net.layers.size() && net.layers[li].kind == LayerKind::Conv; ++li) {
            const Layer& l = net.layers[li];
            const int k = l.conv.kernel, out_side = side - k + 1, oc = l.conv.out_channels;
            std::vector<double> out(static_cast<std::size_t>(out_side * out_side * oc));
            for (int oy = 0; oy < out_side; ++oy)
                for (int ox = 0; ox < out_side; ++ox)
                    for (int o = 0; o < oc; ++o) {
                        double z = l.bias[o];
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx)
                                for (int c = 0; c < ch; ++c)
                                    z += l.weight(o, (ky * k + kx) * ch + c) *
                                         img[static_cast<std::size_t>(((oy + ky) * side + ox + kx) * ch + c)];
                        out[static_cast<std::size_t>((oy * out_side + ox) * oc + o)] = apply(l.activation, z);
                    }
            img = std::move(out);
            side = out_side;
            ch = oc;
        }
        x.assign(obs.begin(), obs.begin() + arch.prefix_length);
        x.insert(x.end(), img.begin(), img.end());
    } else {
        x = obs;
    }
    for (; li < net.layers.size(); ++li) {
        const Layer& l = net.layers[li];
        std::vector<double> y(static_cast<std::size_t>(l.weight.rows()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            double z = l.bias[r];
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) z += l.weight(r, c) * x[static_cast<std::size_t>(c)];
            y[static_cast<std::size_t>(r)] = apply(l.activation, z);
        }
        x = std::move(y);
    }
    return x;
}

struct GradCheckReport {
    double max_rel_error = 0.0;
    int checked = 0;
};

// Relative error |a - n| / max(|a|, |n|, floor) per parameter, so entries whose
// true gradient is near zero are judged on an absolute scale.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Checks d/dtheta of sum(weights .* head) with central differences, h = 1e-5.
inline GradCheckReport gradient_check(const PolicyParams& net, const Matrix& obs, const Matrix& weights) {
    auto loss = [&](const PolicyParams& p) { return (forward_batch(p, obs).head.array() * weights.array()).sum(); };
    ForwardPass pass = forward_batch(net, obs);
    auto analytic = flatten(backprop(net, pass, weights));
    auto theta = flatten(net);
    PolicyParams probe = net;
    GradCheckReport rep;
    const double h = 1e-5;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        auto t = theta;
        t[i] = theta[i] + h;
        assign_flat(probe, t);
        const double up = loss(probe);
        t[i] = theta[i] - h;
        assign_flat(probe, t);
        const double down = loss(probe);
        const double numeric = (up - down) / (2 * h);
        rep.max_rel_error = std::max(rep.max_rel_error, relative_error(analytic[i], numeric));
        ++rep.checked;
    }
    return rep;
}

// Discrete-action trajectory with hand-set fields.
inline Trajectory make_trajectory(const NetArchitecture& arch, int n, Rng& rng, bool success = false) {
    Trajectory t;
    for (int i = 0; i < n; ++i) {
        Transition tr;
        tr.obs = random_observation(arch, rng);
        tr.action = static_cast<int>(rng.below(static_cast<std::size_t>(arch.action_count)));
        tr.behavior_prob = rng.uniform(0.05, 1.0);
        tr.reward = (i == n - 1 && success) ? 1.0 : 0.0;
        tr.done = i == n - 1;
        t.transitions.push_back(tr);
    }
    t.total_reward = success ? 1.0 : 0.0;
    t.success = success;
    return t;
}

// Advantage as the explicit double sum over delta terms.
inline std::vector<double> gae_oracle(const Trajectory& traj, const std::vector<double>& v, double gamma, double lam) {
    const std::size_t n = traj.size();
    std::vector<double> adv(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double weight = 1.0;
        for (std::size_t k = t; k < n; ++k) {
            const auto& tr = traj.transitions[k];
            adv[t] += weight * (tr.reward + gamma * v[k + 1] * (tr.done ? 0.0 : 1.0) - v[k]);
            if (tr.done) break;
            weight *= gamma * lam;
        }
    }
    return adv;
}

// Case analysis of the clipped objective, written without min/clamp.
inline double clip_loss_oracle(double rho, double adv, double eps) {
    if (adv >= 0) {
        if (rho > 1.0 + eps) return -((1.0 + eps) * adv);
        return -(rho * adv);
    }
    if (rho < 1.0 - eps) return -((1.0 - eps) * adv);
    return -(rho * adv);
}

// Deterministic two-state episodic MDP with one-hot observations.
//   s0: a0 -> s1, r 0      a1 -> end, r 1
//   s1: a0 -> end, r 2     a1 -> s0, r 0
struct TwoStateMdp {
    static constexpr double kGamma = 0.9;
    struct Outcome {
        int next;  // -1 terminal
        double reward;
    };
    static Outcome step(int s, int a) {
        if (s == 0) return a == 0 ? Outcome{1, 0.0} : Outcome{-1, 1.0};
        return a == 0 ? Outcome{-1, 2.0} : Outcome{0, 0.0};
    }
    // Value iteration to convergence; q[s][a].
    static std::array<std::array<double, 2>, 2> optimal_q(double gamma = kGamma) {
        std::array<std::array<double, 2>, 2> q{};
        for (int it = 0; it < 2000; ++it) {
            auto next = q;
            for (int s = 0; s < 2; ++s)
                for (int a = 0; a < 2; ++a) {
                    auto o = step(s, a);
                    next[s][a] = o.reward + (o.next < 0 ? 0.0 : gamma * std::max(q[o.next][0], q[o.next][1]));
                }
            q = next;
        }
        return q;
    }
    static Observation encode(int s) { return s == 0 ? Observation{1.0, 0.0} : Observation{0.0, 1.0}; }
};

class TwoStateEnv final : public Env {
public:
    TwoStateEnv() {
        spec_.action_count = 2;
        spec_.max_steps = 50;
        spec_.max_total_reward = 2.0;
        spec_.obs_length = 2;
    }
    const EnvSpec& spec() const override { return spec_; }
    Observation reset() override {
        state_ = 0;
        steps_ = 0;
        done_ = false;
        return TwoStateMdp::encode(0);
    }
    StepResult step(int action) override {
        if (action < 0 || action > 1) throw std::out_of_range("TwoStateEnv: bad action");
        if (done_) throw std::logic_error("TwoStateEnv: done");
        auto o = TwoStateMdp::step(state_, action);
        ++steps_;
        StepResult r;
        r.reward = o.reward;
        r.done = o.next < 0 || steps_ >= spec_.max_steps;
        if (o.next >= 0) state_ = o.next;
        r.observation = TwoStateMdp::encode(state_);
        done_ = r.done;
        return r;
    }
    bool done() const override { return done_; }
    std::string render() const override { return "s" + std::to_string(state_) + "\n"; }

private:
    EnvSpec spec_;
    int state_ = 0;
    int steps_ = 0;
    bool done_ = true;
};

inline NetArchitecture tabular_q_arch() {
    NetArchitecture a;
    a.obs_length = 2;
    a.action_count = 2;
    return a;
}

}  // namespace r3::testing
