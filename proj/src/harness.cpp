#include "r3/harness.hpp"

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace r3 {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool is_grid(EnvKind kind) { return kind == EnvKind::Crossing || kind == EnvKind::DoorKey; }

// Reads the keys of one JSON object and rejects any it did not ask for.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw std::invalid_argument("config: " + label() + " must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw std::invalid_argument("config: bad value for " + path(key) + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return nullptr;
        return &*it;
    }

    std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key())) throw std::invalid_argument("config: unknown key " + path(item.key()));
    }

private:
    std::string label() const { return where_.empty() ? "top level" : where_; }

    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void read_activation(Section& s, const char* key, Activation& out) {
    std::string name = to_string(out);
    s.get(key, name);
    try {
        out = activation_from_string(name);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: unknown activation '" + name + "' for " + s.path(key));
    }
}

void read_ppo(const json& j, const std::string& where, PpoConfig& p) {
    Section s(j, where);
    s.get("clip_epsilon", p.clip_epsilon);
    s.get("gamma", p.gamma);
    s.get("lam", p.lam);
    s.get("value_loss_coef", p.value_loss_coef);
    s.get("epochs", p.epochs);
    s.get("advantage_normalization", p.advantage_normalization);
    s.get("max_grad_norm", p.max_grad_norm);
    s.finish();
}

void read_trainer(const json& j, TrainerConfig& t) {
    Section s(j, "trainer");
    s.get("max_steps", t.max_steps);
    s.get("max_episodes", t.max_episodes);
    s.get("learning_rate", t.learning_rate);
    if (const json* c = s.child("ppo")) read_ppo(*c, "trainer.ppo", t.ppo);
    s.get("explorer_epochs", t.explorer_epochs);
    if (const json* c = s.child("entropy")) {
        Section e(*c, "trainer.entropy");
        e.get("ppo", t.entropy.ppo);
        e.get("initiator", t.entropy.initiator);
        e.get("explorer1", t.entropy.explorer1);
        e.get("explorer2", t.entropy.explorer2);
        e.get("exploiter", t.entropy.exploiter);
        e.finish();
    }
    if (const json* c = s.child("net")) {
        Section n(*c, "trainer.net");
        n.get("conv_channels", t.net.conv_channels);
        n.get("kernel", t.net.kernel);
        n.get("hidden", t.net.hidden);
        read_activation(n, "conv_activation", t.net.conv_activation);
        read_activation(n, "hidden_activation", t.net.hidden_activation);
        n.finish();
    }
    s.get("sigma", t.sigma);
    s.get("buffer_capacity", t.buffer_capacity);
    s.get("large_buffer_capacity", t.large_buffer_capacity);
    s.get("dr3_capacity", t.dr3_capacity);
    if (const json* c = s.child("dr3")) {
        Section d(*c, "trainer.dr3");
        d.get("base", t.dr3.base);
        d.get("admission_step", t.dr3.admission_step);
        d.get("usage_step", t.dr3.usage_step);
        d.finish();
    }
    s.get("success_window", t.success_window);
    s.get("degenerate_cutoff", t.degenerate_cutoff);
    s.get("degenerate_enabled", t.degenerate_enabled);
    s.get("random_initiator", t.random_initiator);
    s.get("replay_enabled", t.replay_enabled);
    s.get("smoothing_alpha", t.smoothing_alpha);
    if (const json* c = s.child("ddqn")) {
        Section d(*c, "trainer.ddqn");
        auto& q = t.ddqn;
        d.get("buffer_capacity", q.buffer_capacity);
        d.get("batch_size", q.batch_size);
        d.get("epsilon_start", q.epsilon_start);
        d.get("epsilon_end", q.epsilon_end);
        d.get("epsilon_decay_steps", q.epsilon_decay_steps);
        d.get("target_sync_every", q.target_sync_every);
        d.get("learning_starts", q.learning_starts);
        d.get("train_every", q.train_every);
        d.get("learning_rate", q.learning_rate);
        d.get("gamma", q.gamma);
        d.finish();
    }
    s.finish();
}

json ppo_to_json(const PpoConfig& p) {
    return {{"clip_epsilon", p.clip_epsilon},
            {"gamma", p.gamma},
            {"lam", p.lam},
            {"value_loss_coef", p.value_loss_coef},
            {"epochs", p.epochs},
            {"advantage_normalization", p.advantage_normalization},
            {"max_grad_norm", p.max_grad_norm}};
}

json trainer_to_json(const TrainerConfig& t) {
    json j;
    j["max_steps"] = t.max_steps;
    j["max_episodes"] = t.max_episodes;
    j["learning_rate"] = t.learning_rate;
    j["ppo"] = ppo_to_json(t.ppo);
    j["explorer_epochs"] = t.explorer_epochs;
    j["entropy"] = {{"ppo", t.entropy.ppo},
                    {"initiator", t.entropy.initiator},
                    {"explorer1", t.entropy.explorer1},
                    {"explorer2", t.entropy.explorer2},
                    {"exploiter", t.entropy.exploiter}};
    j["net"] = {{"conv_channels", t.net.conv_channels},
                {"kernel", t.net.kernel},
                {"hidden", t.net.hidden},
                {"conv_activation", to_string(t.net.conv_activation)},
                {"hidden_activation", to_string(t.net.hidden_activation)}};
    j["sigma"] = t.sigma;
    j["buffer_capacity"] = t.buffer_capacity;
    j["large_buffer_capacity"] = t.large_buffer_capacity;
    j["dr3_capacity"] = t.dr3_capacity;
    j["dr3"] = {{"base", t.dr3.base}, {"admission_step", t.dr3.admission_step}, {"usage_step", t.dr3.usage_step}};
    j["success_window"] = t.success_window;
    j["degenerate_cutoff"] = t.degenerate_cutoff;
    j["degenerate_enabled"] = t.degenerate_enabled;
    j["random_initiator"] = t.random_initiator;
    j["replay_enabled"] = t.replay_enabled;
    j["smoothing_alpha"] = t.smoothing_alpha;
    const auto& q = t.ddqn;
    j["ddqn"] = {{"buffer_capacity", q.buffer_capacity},
                 {"batch_size", q.batch_size},
                 {"epsilon_start", q.epsilon_start},
                 {"epsilon_end", q.epsilon_end},
                 {"epsilon_decay_steps", q.epsilon_decay_steps},
                 {"target_sync_every", q.target_sync_every},
                 {"learning_starts", q.learning_starts},
                 {"train_every", q.train_every},
                 {"learning_rate", q.learning_rate},
                 {"gamma", q.gamma}};
    return j;
}

// Shortest round-trip representation, so CSV bytes depend only on the values.
std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

template <class T>
T parse_field(const std::string& text, const char* column, std::size_t line) {
    T value{};
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw std::runtime_error("csv line " + std::to_string(line) + ": bad " + column + " '" + text + "'");
    return value;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string tick_label(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
    if (is_grid(env)) {
        if (!size) throw std::invalid_argument("config: gridworld envs need a size");
        if (*size < 5 || *size > 9) throw std::invalid_argument("config: size must be in 5..9");
    } else if (size && *size <= 0) {
        throw std::invalid_argument("config: size must be positive");
    }
    if (algorithm == Algorithm::Dr3 && env != EnvKind::CartPole)
        throw std::invalid_argument("config: dr3 targets the dense-reward cartpole env");
    if ((algorithm == Algorithm::R3 || algorithm == Algorithm::WeakR3) && !is_grid(env))
        throw std::invalid_argument("config: " + to_string(algorithm) + " targets the sparse gridworld envs");
    if (env_options.cartpole_max_steps <= 0) throw std::invalid_argument("config: cartpole_max_steps must be positive");
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir must be nonempty");
    trainer.validate();
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    Section s(j, "");

    std::string alg;
    s.get("algorithm", alg);
    if (alg.empty()) throw std::invalid_argument("config: algorithm is required");
    try {
        cfg.algorithm = algorithm_from_string(alg);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: unknown algorithm '" + alg + "'");
    }

    std::string env;
    s.get("env", env);
    if (env.empty()) throw std::invalid_argument("config: env is required");
    try {
        cfg.env = env_kind_from_string(env);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: unknown env '" + env + "'");
    }

    if (const json* size = s.child("size")) {
        if (!size->is_number_integer()) throw std::invalid_argument("config: size must be an integer");
        cfg.size = size->get<int>();
    }
    if (const json* seeds = s.child("seeds")) {
        if (!seeds->is_array()) throw std::invalid_argument("config: seeds must be a list");
        for (const auto& v : *seeds) {
            if (!v.is_number_integer() || v.get<long long>() < 0)
                throw std::invalid_argument("config: seeds must be nonnegative integers");
            cfg.seeds.push_back(v.get<std::uint64_t>());
        }
    }
    if (const json* t = s.child("trainer")) read_trainer(*t, cfg.trainer);
    if (const json* e = s.child("env_options")) {
        Section o(*e, "env_options");
        o.get("rerandomize_layout", cfg.env_options.grid.rerandomize_layout);
        o.get("cartpole_max_steps", cfg.env_options.cartpole_max_steps);
        o.finish();
    }
    std::string out = cfg.out_dir.string();
    s.get("out_dir", out);
    cfg.out_dir = out;
    s.get("log_wall_clock", cfg.log_wall_clock);
    s.get("dump_buffers", cfg.dump_buffers);
    s.finish();

    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["algorithm"] = to_string(cfg.algorithm);
    j["env"] = to_string(cfg.env);
    j["size"] = cfg.size ? json(*cfg.size) : json(nullptr);
    j["seeds"] = cfg.seeds;
    j["trainer"] = trainer_to_json(cfg.trainer);
    j["env_options"] = {{"rerandomize_layout", cfg.env_options.grid.rerandomize_layout},
                        {"cartpole_max_steps", cfg.env_options.cartpole_max_steps}};
    j["out_dir"] = cfg.out_dir.string();
    j["log_wall_clock"] = cfg.log_wall_clock;
    j["dump_buffers"] = cfg.dump_buffers;
    return j;
}

std::string run_name(const ExperimentConfig& cfg, std::uint64_t seed) {
    std::string env = to_string(cfg.env);
    if (is_grid(cfg.env) && cfg.size) env += std::to_string(*cfg.size);
    return to_string(cfg.algorithm) + "_" + env + "_seed" + std::to_string(seed);
}

// ---------------------------------------------------------------------------
// Running

namespace {

void write_events(const fs::path& path, const std::vector<PhaseEvent>& events) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& e : events) {
        json j = {{"episode", e.episode}, {"from", e.from}, {"to", e.to}, {"buf_b", e.buf_b},
                  {"buf_blarge", e.buf_blarge}};
        out << j.dump() << '\n';
    }
}

void write_buffer_dumps(const Trainer& trainer, const fs::path& dir, const std::string& stem) {
    auto dump = [&](const CyclicBuffer& buffer, const std::string& suffix) {
        std::ofstream out(dir / (stem + "." + suffix + ".jsonl"));
        if (!out) throw std::runtime_error("cannot write buffer dump for " + stem);
        dump_buffer(buffer, out);
    };
    if (auto* r3 = dynamic_cast<const R3Trainer*>(&trainer)) {
        dump(r3->buffer(), "b");
        dump(r3->large_buffer(), "blarge");
    } else if (auto* weak = dynamic_cast<const WeakR3Trainer*>(&trainer)) {
        dump(weak->buffer(), "b");
    } else if (auto* dr3 = dynamic_cast<const Dr3Trainer*>(&trainer)) {
        dump(dr3->buffer(), "b");
    }
}

}  // namespace

RunResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const EpisodeObserver& observer, bool write_files) {
    cfg.validate();
    RunResult result;
    result.seed = seed;

    auto env = make_env(cfg.env, cfg.size, seed, cfg.env_options);
    auto trainer = make_trainer(cfg.algorithm, std::move(env), cfg.trainer, seed);

    const std::string stem = run_name(cfg, seed);
    std::ofstream csv;
    if (write_files) {
        fs::create_directories(cfg.out_dir);
        result.csv_path = cfg.out_dir / (stem + ".csv");
        csv.open(result.csv_path);
        if (!csv) throw std::runtime_error("cannot write " + result.csv_path.string());
        write_csv_header(csv);
    }

    const auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    };

    try {
        while (!trainer->finished()) {
            RunRecord rec = trainer->run_episode();
            if (cfg.log_wall_clock) rec.ms = std::round(elapsed_ms());
            if (observer) observer(*trainer, rec);
            if (write_files) {
                write_csv_row(csv, rec);
                csv.flush();
            }
            result.records.push_back(std::move(rec));
        }
    } catch (...) {
        if (write_files) {
            csv.flush();
            write_events(cfg.out_dir / (stem + ".events.jsonl"), trainer->events());
        }
        throw;
    }

    result.wall_ms = elapsed_ms();
    result.events = trainer->events();
    if (write_files) {
        write_events(cfg.out_dir / (stem + ".events.jsonl"), result.events);
        if (cfg.dump_buffers) write_buffer_dumps(*trainer, cfg.out_dir, stem);
    }
    return result;
}

std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, const EpisodeObserver& observer) {
    cfg.validate();
    std::vector<RunResult> results(cfg.seeds.size());
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::mutex observer_mutex;
    EpisodeObserver guarded;
    if (observer) {
        guarded = [&](const Trainer& t, const RunRecord& r) {
            std::lock_guard lock(observer_mutex);
            observer(t, r);
        };
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
            try {
                results[i] = run_seed(cfg, cfg.seeds[i], guarded);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    const std::size_t workers =
        std::min<std::size_t>(cfg.seeds.size(), std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

// ---------------------------------------------------------------------------
// CSV

void write_csv_header(std::ostream& out) { out << kCsvHeader << '\n'; }

void write_csv_row(std::ostream& out, const RunRecord& r) {
    out << r.episode << ',' << r.steps << ',' << format_number(r.reward) << ',' << (r.success ? 1 : 0) << ','
        << format_number(r.smoothed) << ',' << r.phase << ',' << r.buf_b << ',' << r.buf_blarge << ','
        << format_number(r.ms) << '\n';
}

std::vector<RunRecord> read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw std::runtime_error("csv: schema mismatch, header '" + line + "'");

    std::vector<RunRecord> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split(line, ',');
        if (f.size() != 9)
            throw std::runtime_error("csv line " + std::to_string(lineno) + ": expected 9 fields, got " +
                                     std::to_string(f.size()));
        RunRecord r;
        r.episode = parse_field<long>(f[0], "episode", lineno);
        r.steps = parse_field<long>(f[1], "steps", lineno);
        r.reward = parse_field<double>(f[2], "reward", lineno);
        int success = parse_field<int>(f[3], "success", lineno);
        if (success != 0 && success != 1) throw std::runtime_error("csv line " + std::to_string(lineno) + ": bad success");
        r.success = success == 1;
        r.smoothed = parse_field<double>(f[4], "smoothed", lineno);
        r.phase = f[5];
        r.buf_b = parse_field<std::size_t>(f[6], "buf_b", lineno);
        r.buf_blarge = parse_field<std::size_t>(f[7], "buf_blarge", lineno);
        r.ms = parse_field<double>(f[8], "ms", lineno);
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<RunRecord> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path.string());
    try {
        return read_csv(in);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::vector<double> metric_column(const std::vector<RunRecord>& records, const std::string& metric) {
    std::function<double(const RunRecord&)> get;
    if (metric == "episode") get = [](const RunRecord& r) { return static_cast<double>(r.episode); };
    else if (metric == "steps") get = [](const RunRecord& r) { return static_cast<double>(r.steps); };
    else if (metric == "reward") get = [](const RunRecord& r) { return r.reward; };
    else if (metric == "success") get = [](const RunRecord& r) { return r.success ? 1.0 : 0.0; };
    else if (metric == "smoothed") get = [](const RunRecord& r) { return r.smoothed; };
    else if (metric == "buf_b") get = [](const RunRecord& r) { return static_cast<double>(r.buf_b); };
    else if (metric == "buf_blarge") get = [](const RunRecord& r) { return static_cast<double>(r.buf_blarge); };
    else if (metric == "ms") get = [](const RunRecord& r) { return r.ms; };
    else throw std::invalid_argument("unknown metric '" + metric + "'");
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(get(r));
    return out;
}

std::vector<double> smooth(const std::vector<double>& series, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("smooth: alpha must be in (0, 1]");
    std::vector<double> out;
    out.reserve(series.size());
    for (std::size_t i = 0; i < series.size(); ++i)
        out.push_back(i == 0 ? series[0] : alpha * series[i] + (1.0 - alpha) * out.back());
    return out;
}

// ---------------------------------------------------------------------------
// Plots

void emit_plot(const std::vector<PlotSeries>& series, const std::string& x_label, const std::string& metric,
               const fs::path& path) {
    if (series.empty()) throw std::invalid_argument("plot: no runs");
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series) {
        if (s.y.empty()) throw std::invalid_argument("plot: empty " + metric + " column for " + s.label);
        if (s.x.size() != s.y.size()) throw std::invalid_argument("plot: x/y length mismatch for " + s.label);
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
                throw std::invalid_argument("plot: non-finite value in " + s.label);
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (x1 == x0) x1 = x0 + 1.0;
    if (y1 == y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }

    constexpr double width = 800, height = 500, left = 70, right = 180, top = 30, bottom = 60;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        double fx = x0 + (x1 - x0) * t / 4.0, fy = y0 + (y1 - y0) * t / 4.0;
        svg << "<text x=\"" << fixed(px(fx)) << "\" y=\"" << fixed(top + ph + 18)
            << "\" text-anchor=\"middle\">" << tick_label(fx) << "</text>\n";
        svg << "<text x=\"" << fixed(left - 6) << "\" y=\"" << fixed(py(fy) + 4) << "\" text-anchor=\"end\">"
            << tick_label(fy) << "</text>\n";
    }
    svg << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(height - 15) << "\" text-anchor=\"middle\">"
        << xml_escape(x_label) << "</text>\n";
    svg << "<text x=\"18\" y=\"" << fixed(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
        << fixed(top + ph / 2) << ")\">" << xml_escape(metric) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = palette[k % std::size(palette)];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
        for (std::size_t i = 0; i < s.y.size(); ++i) svg << (i ? " " : "") << fixed(px(s.x[i])) << ',' << fixed(py(s.y[i]));
        svg << "\"/>\n";
        double ly = top + 14 + 16.0 * static_cast<double>(k);
        svg << "<line x1=\"" << fixed(left + pw + 10) << "\" y1=\"" << fixed(ly - 4) << "\" x2=\""
            << fixed(left + pw + 30) << "\" y2=\"" << fixed(ly - 4) << "\" stroke=\"" << color << "\"/>\n";
        svg << "<text x=\"" << fixed(left + pw + 35) << "\" y=\"" << fixed(ly) << "\">" << xml_escape(s.label)
            << "</text>\n";
    }
    svg << "</svg>\n";

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("plot: cannot write " + path.string());
    out << svg.str();
    if (!out) throw std::runtime_error("plot: write failed for " + path.string());
}

void plot_runs(const std::vector<fs::path>& runs, const std::string& metric, const std::string& x_axis,
               const fs::path& out) {
    if (runs.empty()) throw std::invalid_argument("plot: no runs");
    std::string axis = x_axis;
    if (axis.empty()) axis = identify_run(runs.front()).env == "cartpole" ? "episode" : "steps";
    if (axis != "episode" && axis != "steps") throw std::invalid_argument("plot: x axis must be episode or steps");
    std::vector<PlotSeries> series;
    for (const auto& path : runs) {
        auto records = read_csv(path);
        series.push_back({path.stem().string(), metric_column(records, axis), metric_column(records, metric)});
    }
    emit_plot(series, axis, metric, out);
}

// ---------------------------------------------------------------------------
// Comparison

RunIdentity identify_run(const fs::path& path) {
    const std::string stem = path.stem().string();
    auto seed_pos = stem.rfind("_seed");
    auto alg_end = stem.find('_');
    if (seed_pos == std::string::npos || alg_end == std::string::npos || seed_pos <= alg_end)
        throw std::invalid_argument("cannot identify run from name '" + stem + "'");
    RunIdentity id;
    // weak_r3 is the only algorithm name with an underscore
    if (stem.rfind("weak_r3_", 0) == 0) alg_end = 7;
    id.algorithm = stem.substr(0, alg_end);
    id.env = stem.substr(alg_end + 1, seed_pos - alg_end - 1);
    const std::string seed = stem.substr(seed_pos + 5);
    auto res = std::from_chars(seed.data(), seed.data() + seed.size(), id.seed);
    if (seed.empty() || res.ec != std::errc() || res.ptr != seed.data() + seed.size())
        throw std::invalid_argument("cannot identify run from name '" + stem + "'");
    if (id.env.empty()) throw std::invalid_argument("cannot identify run from name '" + stem + "'");
    return id;
}

double final_window_mean(const std::vector<double>& values, std::size_t window) {
    if (values.empty()) throw std::invalid_argument("final_window_mean: empty series");
    if (window == 0) throw std::invalid_argument("final_window_mean: window must be positive");
    const std::size_t n = std::min(window, values.size());
    double sum = 0.0;
    for (std::size_t i = values.size() - n; i < values.size(); ++i) sum += values[i];
    return sum / static_cast<double>(n);
}

ComparisonReport compare_runs(const std::vector<fs::path>& runs, std::size_t window) {
    if (runs.empty()) throw std::invalid_argument("compare: no runs");
    ComparisonReport report;
    report.runs = runs;
    std::set<std::string> envs;
    for (const auto& path : runs) {
        RunIdentity id = identify_run(path);
        envs.insert(id.env);
        auto records = read_csv(path);
        if (records.empty()) throw std::runtime_error("compare: " + path.string() + " has no rows");
        auto& slot = report.final_means[id.algorithm];
        if (slot.count(id.seed))
            throw std::invalid_argument("compare: duplicate run for " + id.algorithm + " seed " + std::to_string(id.seed));
        slot[id.seed] = final_window_mean(metric_column(records, "smoothed"), window);
    }
    if (envs.size() > 1) throw std::invalid_argument("compare: runs span more than one env");

    for (auto a = report.final_means.begin(); a != report.final_means.end(); ++a) {
        for (auto b = std::next(a); b != report.final_means.end(); ++b) {
            PairTally tally;
            for (const auto& [seed, va] : a->second) {
                auto it = b->second.find(seed);
                if (it == b->second.end()) continue;
                if (va > it->second) ++tally.wins;
                else if (va < it->second) ++tally.losses;
                else ++tally.ties;
            }
            report.tallies[{a->first, b->first}] = tally;
        }
    }
    return report;
}

std::string format_report(const ComparisonReport& report) {
    std::ostringstream out;
    out << "final-window mean of smoothed reward\n";
    for (const auto& [alg, seeds] : report.final_means) {
        out << "  " << alg << ":";
        for (const auto& [seed, v] : seeds) out << " seed" << seed << "=" << fixed(v, 4);
        out << '\n';
    }
    if (!report.tallies.empty()) out << "pairwise (wins-losses-ties per seed)\n";
    for (const auto& [pair, t] : report.tallies)
        out << "  " << pair.first << " vs " << pair.second << ": " << t.wins << "-" << t.losses << "-" << t.ties << '\n';
    for (const auto& p : report.plots) out << "plot: " << p.string() << '\n';
    return out.str();
}

json report_to_json(const ComparisonReport& report) {
    json j;
    json means = json::object();
    for (const auto& [alg, seeds] : report.final_means) {
        json per = json::object();
        for (const auto& [seed, v] : seeds) per[std::to_string(seed)] = v;
        means[alg] = per;
    }
    j["final_means"] = means;
    json tallies = json::array();
    for (const auto& [pair, t] : report.tallies)
        tallies.push_back({{"first", pair.first}, {"second", pair.second}, {"wins", t.wins}, {"losses", t.losses},
                           {"ties", t.ties}});
    j["tallies"] = tallies;
    json runs = json::array();
    for (const auto& p : report.runs) runs.push_back(p.string());
    j["runs"] = runs;
    json plots = json::array();
    for (const auto& p : report.plots) plots.push_back(p.string());
    j["plots"] = plots;
    return j;
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
    glob_t g{};
    int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<fs::path> out;
    if (rc == 0) {
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
    if (rc != 0 && rc != GLOB_NOMATCH) throw std::runtime_error("glob failed for '" + pattern + "'");
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace r3
