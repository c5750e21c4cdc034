// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "r3/algorithms.hpp"
#include "r3/harness.hpp"
#include "r3/replay.hpp"
#include "test_support.hpp"

using namespace r3;
using namespace r3::testing;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kLossTol = 1e-10;
constexpr double kGaeTol = 1e-10;
constexpr double kGradTol = 1e-4;
constexpr double kQTol = 1e-3;
constexpr double kFastLimitS = 60.0;
constexpr double kGradLimitS = 300.0;
constexpr std::size_t kFinalWindow = 20;
constexpr long kGridBudget = 300000;
constexpr long kDdqnBudget = 100000;
constexpr double kDdqnSuccess = 0.8;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Verdict loss_algebra() {
    auto t0 = std::chrono::steady_clock::now();
    long mismatches = 0, cases = 0;
    for (double eps : {0.1, 0.2, 0.3})
        for (int ri = 0; ri <= 60; ++ri)
            for (int ai = -8; ai <= 8; ++ai) {
                const double rho = ri * 0.05, adv = ai * 0.25;
                ++cases;
                if (ppo_clip_loss(rho, 1.0, adv, eps) != clip_loss_oracle(rho, adv, eps)) ++mismatches;
            }
    for (double eps : {0.1, 0.2, 0.3})
        for (double rho : {1.0 - eps, 1.0 + eps})
            for (double adv : {-1.0, 0.0, 1.0}) {
                ++cases;
                if (ppo_clip_loss(rho, 1.0, adv, eps) != clip_loss_oracle(rho, adv, eps)) ++mismatches;
            }

    // Replay loss at unit ratios against the clipped objective minus the entropy bonus.
    Rng rng(101);
    double worst = 0.0;
    PpoConfig cfg;
    for (int f = 0; f < 200; ++f) {
        const bool grid = f % 2 == 0;
        PolicyParams net = make_policy(grid ? small_grid_arch(f % 4 == 0) : small_dense_arch(f % 3 == 0),
                                       rng.uniform(0.0, 0.5), rng);
        randomize(net, rng, 0.5);
        Trajectory t = make_trajectory(net.arch, 1 + static_cast<int>(rng.below(8)), rng, rng.coin());
        for (auto& tr : t.transitions) {
            auto logits = oracle_forward(net, tr.obs);
            logits.resize(static_cast<std::size_t>(net.action_count()));
            double mx = *std::max_element(logits.begin(), logits.end()), z = 0.0;
            for (double l : logits) z += std::exp(l - mx);
            tr.behavior_prob = std::exp(logits[static_cast<std::size_t>(tr.action)] - mx) / z;
        }
        const auto adv = estimate_advantages(net, t, cfg).advantages;
        double want = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            auto logits = oracle_forward(net, t.transitions[i].obs);
            logits.resize(static_cast<std::size_t>(net.action_count()));
            double mx = *std::max_element(logits.begin(), logits.end()), z = 0.0;
            for (double l : logits) z += std::exp(l - mx);
            double h = 0.0;
            for (double l : logits) {
                const double p = std::exp(l - mx) / z;
                if (p > 0) h -= p * std::log(p);
            }
            want += -adv[i] - net.entropy_coef * h;
        }
        want /= static_cast<double>(t.size());
        worst = std::max(worst, std::abs(replay_loss(net, t, 2.0, cfg).loss - want));
    }

    // Keep-set monotonicity in sigma.
    long monotone_failures = 0;
    for (int f = 0; f < 1000; ++f) {
        PolicyParams net = make_policy(small_dense_arch(false), 0.0, rng);
        randomize(net, rng, 1.5);
        Trajectory t = make_trajectory(net.arch, 1 + static_cast<int>(rng.below(8)), rng);
        const double lo = rng.uniform(0.0, 5.0), hi = lo + rng.uniform(0.0, 5.0);
        auto a = compute_keep_set(net, t, lo), b = compute_keep_set(net, t, hi);
        std::set<std::size_t> big(b.indices.begin(), b.indices.end());
        for (auto i : a.indices)
            if (!big.count(i)) ++monotone_failures;
        for (std::size_t i = 0; i < t.size(); ++i)
            if ((a.ratios[i] < lo) != (std::count(a.indices.begin(), a.indices.end(), i) == 1)) ++monotone_failures;
    }
    const double secs = seconds_since(t0);
    Verdict v;
    v.pass = mismatches == 0 && worst <= kLossTol && monotone_failures == 0 && secs < kFastLimitS;
    v.detail = std::to_string(cases) + " clip cases, " + std::to_string(mismatches) + " mismatches; unit-ratio max err " +
               fmt("%.2e", worst) + "; " + std::to_string(monotone_failures) + " keep-set violations; " +
               fmt("%.1f s", secs);
    return v;
}

Verdict gae() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(202);
    double worst = 0.0;
    for (int f = 0; f < 1000; ++f) {
        const int n = 1 + static_cast<int>(rng.below(8));
        Trajectory t;
        for (int i = 0; i < n; ++i) {
            Transition tr;
            tr.reward = rng.uniform(-2.0, 2.0);
            tr.done = i == n - 1 && rng.coin();
            t.transitions.push_back(tr);
        }
        std::vector<double> v(static_cast<std::size_t>(n + 1));
        for (double& x : v) x = rng.uniform(-3.0, 3.0);
        const double gamma = rng.uniform(0.5, 1.0), lam = rng.uniform(0.0, 1.0);
        const auto got = compute_gae(t, v, gamma, lam);
        const auto want = gae_oracle(t, v, gamma, lam);
        for (int i = 0; i < n; ++i) {
            worst = std::max(worst, std::abs(got.advantages[i] - want[i]));
            worst = std::max(worst, std::abs(got.returns[i] - (want[i] + v[i])));
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= kGaeTol && secs < kFastLimitS,
            "1000 fixtures, max err " + fmt("%.2e", worst) + "; " + fmt("%.1f s", secs)};
}

NetArchitecture random_arch(Rng& rng) {
    const Activation acts[] = {Activation::Tanh, Activation::Relu, Activation::Identity};
    NetArchitecture a;
    if (rng.coin()) {
        a.grid_side = rng.between(3, 6);
        a.prefix_length = 4;
        a.grid_channels = 3;
        a.kernel = rng.between(1, std::min(3, a.grid_side - 1));
        const int convs = rng.between(1, 2);
        for (int i = 0; i < convs && a.grid_side - (i + 1) * (a.kernel - 1) >= 1; ++i)
            a.conv_channels.push_back(rng.between(1, 3));
        a.conv_activation = acts[rng.below(3)];
        a.obs_length = a.prefix_length + a.grid_side * a.grid_side * 3;
    } else {
        a.obs_length = rng.between(1, 6);
    }
    const int hidden = static_cast<int>(rng.below(3));
    for (int i = 0; i < hidden; ++i) a.hidden.push_back(rng.between(1, 6));
    a.hidden_activation = acts[rng.below(3)];
    a.action_count = rng.between(2, 5);
    a.has_critic = rng.coin();
    return a;
}

Verdict gradients() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(303);
    double worst_head = 0.0, worst_loss = 0.0;
    std::set<std::string> kinds;
    for (int f = 0; f < 50; ++f) {
        const NetArchitecture arch = random_arch(rng);
        PolicyParams net = make_policy(arch, rng.uniform(0.0, 0.3), rng);
        randomize(net, rng, 0.8);
        for (const auto& l : net.layers)
            kinds.insert(std::string(l.kind == LayerKind::Conv ? "conv/" : "dense/") + to_string(l.activation));
        const int rows = rng.between(1, 4);
        const Matrix obs = random_batch(arch, rows, rng);
        const Matrix w = random_matrix(rows, arch.head_size(), rng);
        worst_head = std::max(worst_head, gradient_check(net, obs, w).max_rel_error);

        // Full surrogate, anchored at the current policy so no ratio sits on a clip edge.
        SurrogateBatch batch;
        batch.observations = obs;
        for (int r = 0; r < rows; ++r) batch.actions.push_back(rng.between(0, arch.action_count - 1));
        batch.anchor_probs = action_probabilities(net, batch.observations, batch.actions);
        for (int r = 0; r < rows; ++r) {
            batch.advantages.push_back(rng.uniform(-1.0, 1.0));
            batch.weights.push_back(rng.uniform(0.5, 1.5));
            if (arch.has_critic) batch.returns.push_back(rng.uniform(-1.0, 1.0));
        }
        Gradients g;
        evaluate_surrogate(net, batch, 0.2, 0.5, &g);
        const auto analytic = flatten(g);
        const auto theta = flatten(net);
        PolicyParams probe = net;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            auto t = theta;
            t[i] += 1e-5;
            assign_flat(probe, t);
            const double up = evaluate_surrogate(probe, batch, 0.2, 0.5, nullptr).loss;
            t[i] = theta[i] - 1e-5;
            assign_flat(probe, t);
            const double down = evaluate_surrogate(probe, batch, 0.2, 0.5, nullptr).loss;
            worst_loss = std::max(worst_loss, relative_error(analytic[i], (up - down) / 2e-5));
        }
    }
    const double secs = seconds_since(t0);
    std::string kind_list;
    for (const auto& k : kinds) kind_list += (kind_list.empty() ? "" : " ") + k;
    const bool covered = kinds.size() == 6;
    return {worst_head <= kGradTol && worst_loss <= kGradTol && covered && secs < kGradLimitS,
            "50 nets, head rel err " + fmt("%.2e", worst_head) + ", surrogate rel err " + fmt("%.2e", worst_loss) +
                "; layers [" + kind_list + "]; " + fmt("%.1f s", secs)};
}

Trajectory tagged(double reward, long tag) {
    Trajectory t;
    Transition tr;
    tr.obs = {0.0};
    tr.reward = reward;
    tr.done = true;
    t.transitions.push_back(tr);
    t.total_reward = reward;
    t.success = reward > 0;
    t.episode_index = tag;
    return t;
}

Verdict schedules() {
    const bool r3_ok = r3_fit_threshold(0) == 0.77 && r3_fit_threshold(5) == 0.885 && r3_fit_threshold(10) == 1.0;

    struct Counts {
        int admissions = 0;
        int usages = 0;
    };
    Rng rng(404);
    long mismatches = 0, events = 0;
    for (int seq = 0; seq < 500; ++seq) {
        const std::size_t cap = 1 + rng.below(6);
        CyclicBuffer b(cap);
        std::deque<Counts> model;
        for (int step = 0; step < 60; ++step) {
            ++events;
            const double u = rng.uniform();
            if (u < 0.4 || model.empty()) {
                dr3_threshold_update(b, NewAdmission{});
                b.insert(tagged(1.0, step), 0.6);
                for (auto& c : model) ++c.admissions;
                model.push_back({});
                if (model.size() > cap) model.pop_front();
            } else if (u < 0.9) {
                const std::size_t i = rng.below(model.size());
                dr3_threshold_update(b, EntryUsed{i});
                ++model[i].usages;
            } else {
                const std::size_t i = rng.below(model.size());
                b.drop(i);
                model.erase(model.begin() + static_cast<long>(i));
            }
            if (b.size() != model.size()) {
                ++mismatches;
                break;
            }
            for (std::size_t i = 0; i < model.size(); ++i) {
                const double want = 0.6 + 0.02 * model[i].admissions + 0.01 * model[i].usages;
                if (b[i].fit_threshold != want || b[i].usage_count != model[i].usages ||
                    b[i].admissions_survived != model[i].admissions)
                    ++mismatches;
            }
        }
    }
    return {r3_ok && mismatches == 0,
            std::string("r3 thresholds ") + (r3_ok ? "exact" : "WRONG") + "; dr3 " + std::to_string(events) +
                " events, " + std::to_string(mismatches) + " mismatches"};
}

double plain_mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double plain_std(const std::vector<double>& xs) {
    const double m = plain_mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size()));
}

// All lists of length lo..hi over the alphabet.
std::vector<std::vector<double>> lists(const std::vector<double>& alphabet, int lo, int hi) {
    std::vector<std::vector<double>> out;
    std::vector<std::vector<double>> layer{{}};
    for (int len = 0; len <= hi; ++len) {
        if (len >= lo) out.insert(out.end(), layer.begin(), layer.end());
        std::vector<std::vector<double>> next;
        for (const auto& l : layer)
            for (double a : alphabet) {
                auto m = l;
                m.push_back(a);
                next.push_back(m);
            }
        layer = std::move(next);
    }
    return out;
}

Verdict truth_tables() {
    long cases = 0, failures = 0;
    for (std::size_t cap = 1; cap <= 5; ++cap)
        for (int n = 0; n <= 12; ++n) {
            CyclicBuffer b(cap);
            for (int i = 0; i < n; ++i) {
                ++cases;
                if (b.insert(tagged(1.0, i)) != (static_cast<std::size_t>(i) >= cap)) ++failures;
            }
            const std::size_t keep = std::min<std::size_t>(cap, static_cast<std::size_t>(n));
            if (b.size() != keep) ++failures;
            for (std::size_t i = 0; i < b.size(); ++i)
                if (b[i].trajectory.episode_index != static_cast<long>(n - keep + i)) ++failures;
        }

    const std::vector<double> alphabet{0.0, 1.0, 2.0, 3.0};
    bool singleton_checked = false;
    for (const auto& buf : lists(alphabet, 0, 3))
        for (const auto& history : lists(alphabet, 0, 3))
            for (double r : alphabet) {
                CyclicBuffer b(20);
                for (double x : buf) b.insert(tagged(x, 0));
                RewardStats stats;
                std::vector<double> all = history;
                all.push_back(r);
                for (double x : all) stats.record(x);
                const bool want = buf.empty() ? r > plain_mean(all) + plain_std(all) : r >= plain_mean(buf);
                ++cases;
                if (dr3_admit(tagged(r, 0), b, stats) != want) ++failures;
                if (buf.empty() && history.empty()) {
                    singleton_checked = true;
                    if (dr3_admit(tagged(r, 0), b, stats)) ++failures;
                }
            }

    Rng rng(505);
    for (const auto& buf : lists(alphabet, 0, 4))
        for (int ri = -2; ri <= 8; ++ri) {
            const double r = ri * 0.5;
            CyclicBuffer b(20);
            for (double x : buf) b.insert(tagged(x, 0));
            std::vector<std::size_t> want;
            if (!buf.empty()) {
                const double bar = r + plain_std(buf);
                for (std::size_t i = 0; i < buf.size(); ++i)
                    if (buf[i] > bar) want.push_back(i);
            }
            ++cases;
            if (dr3_candidates(b, r) != want) ++failures;
            const auto pick = dr3_select(b, r, rng);
            if (pick.has_value() != !want.empty()) ++failures;
            if (pick && std::find(want.begin(), want.end(), *pick) == want.end()) ++failures;
        }
    return {failures == 0 && singleton_checked,
            std::to_string(cases) + " cases, " + std::to_string(failures) + " failures"};
}

Verdict weak_r3_equivalence() {
    long episodes = 0, diffs = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        TrainerConfig cfg;
        cfg.max_steps = 0;
        cfg.max_episodes = 200;
        TrainerConfig weak_cfg = cfg;
        weak_cfg.replay_enabled = false;
        PpoTrainer ppo(make_env(EnvKind::DoorKey, 5, seed), cfg, seed);
        WeakR3Trainer weak(make_env(EnvKind::DoorKey, 5, seed), weak_cfg, seed);
        while (!ppo.finished()) {
            RunRecord a = ppo.run_episode(), b = weak.run_episode();
            b.phase = a.phase;
            ++episodes;
            if (!(a == b) || !params_equal(ppo.agent().net, weak.agent().net)) ++diffs;
        }
        if (!weak.finished()) ++diffs;
    }
    return {diffs == 0, std::to_string(episodes) + " episodes over 3 seeds, " + std::to_string(diffs) + " differing"};
}

// ---------------------------------------------------------------------------

struct CurveOutcome {
    std::map<std::uint64_t, double> mine, baseline;
};

ExperimentConfig grid_config(Algorithm a, EnvKind env, int size, std::uint64_t seed, const fs::path& out) {
    ExperimentConfig cfg;
    cfg.seeds = {seed};
    cfg.algorithm = a;
    cfg.env = env;
    cfg.size = size;
    cfg.trainer.max_steps = kGridBudget;
    cfg.out_dir = out;
    return cfg;
}

// Episodes finishing past the step budget are left out.
double final_smoothed(const RunResult& r, long budget = 0) {
    std::vector<double> s;
    for (const auto& rec : r.records)
        if (budget == 0 || rec.steps <= budget) s.push_back(rec.smoothed);
    return final_window_mean(s, kFinalWindow);
}

Verdict dominance(const CurveOutcome& c, const std::string& label) {
    int wins = 0;
    std::string detail;
    for (const auto& [seed, v] : c.mine) {
        const double base = c.baseline.at(seed);
        if (v > base) ++wins;
        detail += "seed " + std::to_string(seed) + ": " + label + " " + fmt("%.4f", v) + " vs ppo " +
                  fmt("%.4f", base) + "; ";
    }
    detail += std::to_string(wins) + "/3 wins";
    return {wins >= 2, detail};
}

struct R3Watch {
    long violations = 0;
    std::string first;
    long episodes = 0;
    bool latched = false;
    std::vector<int> usage_b, usage_large;
    long initiator_runs = -1;

    void fail(const std::string& what, long ep) {
        if (violations++ == 0) first = what + " at episode " + std::to_string(ep);
    }

    static std::vector<int> usage(const CyclicBuffer& b) {
        std::vector<int> u;
        for (const auto& e : b.entries()) u.push_back(e.usage_count);
        return u;
    }

    void observe(const Trainer& tr, const RunRecord& rec) {
        const auto* t = dynamic_cast<const R3Trainer*>(&tr);
        if (!t) return fail("not an r3 trainer", rec.episode);
        ++episodes;
        const PhaseState& ps = t->phase_state();
        if ((ps.phase == Phase::Starting) != !ps.any_reward_seen) fail("starting iff no reward", rec.episode);
        if ((ps.phase == Phase::Exploring) != (ps.any_reward_seen && t->buffer().empty()))
            fail("exploring iff rewarded and B empty", rec.episode);
        for (const auto& e : t->buffer().entries())
            if (!e.trajectory.success) fail("unsuccessful entry in B", rec.episode);
        if (ps.any_reward_seen) {
            if (initiator_runs < 0) initiator_runs = t->initiator_runs();
            if (t->initiator_runs() != initiator_runs) fail("initiator ran after first reward", rec.episode);
        }
        if (latched) {
            if (!t->degenerate()) fail("latch released", rec.episode);
            if (usage(t->buffer()) != usage_b || usage(t->large_buffer()) != usage_large)
                fail("buffer touched after latch", rec.episode);
            if (rec.phase != "degenerate") fail("non-degenerate episode after latch", rec.episode);
        } else if (t->degenerate()) {
            latched = true;
            usage_b = usage(t->buffer());
            usage_large = usage(t->large_buffer());
        }
    }
};

struct GridResults {
    CurveOutcome curves;
    R3Watch watch;
    std::map<std::uint64_t, bool> latched;
    bool ran = false;
};

GridResults run_grid_pair(EnvKind env, int size, std::vector<std::uint64_t> seeds, const fs::path& out) {
    GridResults g;
    g.ran = true;
    for (std::uint64_t seed : seeds) {
        R3Watch w;
        auto r3 = run_seed(grid_config(Algorithm::R3, env, size, seed, out), seed,
                           [&](const Trainer& t, const RunRecord& r) { w.observe(t, r); });
        g.curves.mine[seed] = final_smoothed(r3, kGridBudget);
        g.latched[seed] = w.latched;
        g.watch.violations += w.violations;
        g.watch.episodes += w.episodes;
        if (g.watch.first.empty()) g.watch.first = w.first;
        auto ppo = run_seed(grid_config(Algorithm::Ppo, env, size, seed, out), seed);
        g.curves.baseline[seed] = final_smoothed(ppo, kGridBudget);
    }
    return g;
}

Verdict phase_soundness(const GridResults& g) {
    std::string latches;
    for (const auto& [seed, l] : g.latched) latches += " " + std::to_string(seed) + (l ? ":latched" : ":open");
    return {g.watch.violations == 0 && g.watch.episodes > 0,
            std::to_string(g.watch.episodes) + " episode boundaries, " + std::to_string(g.watch.violations) +
                " violations" + (g.watch.first.empty() ? "" : " (first: " + g.watch.first + ")") + ";" + latches};
}

Verdict cartpole(const fs::path& out) {
    CurveOutcome c;
    for (std::uint64_t seed : {50, 51, 52}) {
        for (Algorithm a : {Algorithm::Dr3, Algorithm::Ppo}) {
            ExperimentConfig cfg;
            cfg.algorithm = a;
            cfg.env = EnvKind::CartPole;
            cfg.seeds = {seed};
            cfg.trainer.max_steps = 0;
            cfg.trainer.max_episodes = 1000;
            cfg.env_options.cartpole_max_steps = 3000;
            cfg.out_dir = out;
            const double v = final_smoothed(run_seed(cfg, seed));
            (a == Algorithm::Dr3 ? c.mine : c.baseline)[seed] = v;
        }
    }
    return dominance(c, "dr3");
}

Verdict ddqn(const fs::path& out) {
    // Tabular part.
    TrainerConfig cfg;
    cfg.max_steps = 40000;
    cfg.ddqn.gamma = TwoStateMdp::kGamma;
    cfg.ddqn.learning_starts = 200;
    cfg.ddqn.epsilon_decay_steps = 10000;
    cfg.ddqn.epsilon_end = 0.2;
    cfg.ddqn.target_sync_every = 200;
    cfg.ddqn.learning_rate = 1e-3;
    DdqnTrainer tab(std::make_unique<TwoStateEnv>(), tabular_q_arch(), cfg, 11);
    while (!tab.finished()) tab.run_episode();
    const auto oracle = TwoStateMdp::optimal_q();
    double q_err = 0.0;
    bool policy_ok = true;
    for (int s = 0; s < 2; ++s) {
        const Vector q = forward(tab.q_net(), TwoStateMdp::encode(s)).logits;
        for (int a = 0; a < 2; ++a) q_err = std::max(q_err, std::abs(q[a] - oracle[s][a]));
        const int best = oracle[s][1] > oracle[s][0] ? 1 : 0;
        policy_ok = policy_ok && greedy_action(q) == best;
    }

    // Crossing-5: best trailing success rate within the step budget.
    int hits = 0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        ExperimentConfig ec;
        ec.algorithm = Algorithm::Ddqn;
        ec.env = EnvKind::Crossing;
        ec.size = 5;
        ec.seeds = {seed};
        ec.trainer.max_steps = kDdqnBudget;
        ec.out_dir = out;
        auto res = run_seed(ec, seed);
        std::deque<double> window;
        double best = 0.0, sum = 0.0;
        for (const auto& r : res.records) {
            if (r.steps > kDdqnBudget) break;
            window.push_back(r.success ? 1.0 : 0.0);
            sum += window.back();
            if (window.size() > kFinalWindow) {
                sum -= window.front();
                window.pop_front();
            }
            if (window.size() == kFinalWindow) best = std::max(best, sum / kFinalWindow);
        }
        if (best >= kDdqnSuccess) ++hits;
        detail += " seed " + std::to_string(seed) + ": " + fmt("%.2f", best) + ";";
    }
    return {q_err <= kQTol && policy_ok && hits >= 2,
            "tabular max |Q - Q*| " + fmt("%.2e", q_err) + (policy_ok ? ", policy matches" : ", POLICY DIFFERS") +
                "; crossing5 best 20-episode success" + detail + " " + std::to_string(hits) + "/3 >= 0.8"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance suite"};
    std::vector<int> only;
    std::string out = "acceptance_runs";
    app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
    app.add_option("--out", out, "directory for run CSVs");
    CLI11_PARSE(app, argc, argv);

    const fs::path out_dir = out;
    fs::create_directories(out_dir);
    auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

    GridResults doorkey;
    auto doorkey_runs = [&]() -> GridResults& {
        if (!doorkey.ran) doorkey = run_grid_pair(EnvKind::DoorKey, 6, {10, 11, 12}, out_dir);
        return doorkey;
    };

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"loss algebra", loss_algebra},
        {"gae oracle", gae},
        {"gradient checks", gradients},
        {"threshold schedules", schedules},
        {"buffer truth tables", truth_tables},
        {"weak r3 equals ppo without replay", weak_r3_equivalence},
        {"r3 phase machine on doorkey6", [&] { return phase_soundness(doorkey_runs()); }},
        {"r3 beats ppo on doorkey6", [&] { return dominance(doorkey_runs().curves, "r3"); }},
        {"r3 beats ppo on crossing7",
         [&] { return dominance(run_grid_pair(EnvKind::Crossing, 7, {117, 118, 119}, out_dir).curves, "r3"); }},
        {"dr3 beats ppo on cartpole", [&] { return cartpole(out_dir); }},
        {"ddqn sanity", [&] { return ddqn(out_dir); }},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i + 1);
        if (!wanted(n)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        if (!v.pass) ++failed;
        std::printf("%s %2d %s: %s [%.0f s]\n", v.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(),
                    v.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
