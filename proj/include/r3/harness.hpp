#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "r3/algorithms.hpp"
#include "r3/envs.hpp"

namespace r3 {

struct ExperimentConfig {
    Algorithm algorithm = Algorithm::Ppo;
    EnvKind env = EnvKind::DoorKey;
    std::optional<int> size;
    std::vector<std::uint64_t> seeds;
    TrainerConfig trainer;
    EnvOptions env_options;
    std::filesystem::path out_dir = "runs";
    /// Writes per-episode wall-clock into the ms column. Off by default so that run
    /// artifacts are byte-for-byte reproducible.
    bool log_wall_clock = false;
    bool dump_buffers = false;

    void validate() const;
    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Reads a JSON config; absent keys take their defaults, unknown keys are errors.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// File stem of one run's artifacts, e.g. "r3_doorkey6_seed10".
std::string run_name(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunResult {
    std::uint64_t seed = 0;
    std::vector<RunRecord> records;
    std::vector<PhaseEvent> events;
    std::filesystem::path csv_path;
    double wall_ms = 0.0;
};

/// Called after every episode with the trainer state at the episode boundary.
using EpisodeObserver = std::function<void(const Trainer&, const RunRecord&)>;

/// Runs one seed to its budget; writes CSV (and events) when write_files is set.
RunResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const EpisodeObserver& observer = {},
                   bool write_files = true);
std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, const EpisodeObserver& observer = {});

// ---------------------------------------------------------------------------
// Metrics files

inline constexpr const char* kCsvHeader = "episode,steps,reward,success,smoothed,phase,buf_b,buf_blarge,ms";

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const RunRecord& rec);
/// Throws std::runtime_error on a header mismatch or malformed row.
std::vector<RunRecord> read_csv(std::istream& in);
std::vector<RunRecord> read_csv(const std::filesystem::path& path);

/// Named numeric column of a record list (episode, steps, reward, success, smoothed, buf_b, buf_blarge, ms).
std::vector<double> metric_column(const std::vector<RunRecord>& records, const std::string& metric);

/// Exponential moving average y_t = alpha x_t + (1 - alpha) y_{t-1}, y_0 = x_0.
std::vector<double> smooth(const std::vector<double>& series, double alpha);

// ---------------------------------------------------------------------------
// Plots

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Static SVG line chart with one polyline per series.
void emit_plot(const std::vector<PlotSeries>& series, const std::string& x_label, const std::string& metric,
               const std::filesystem::path& path);

/// Loads CSV runs and plots metric against episodes, or cumulative steps when x_axis is "steps".
void plot_runs(const std::vector<std::filesystem::path>& runs, const std::string& metric,
               const std::string& x_axis, const std::filesystem::path& out);

// ---------------------------------------------------------------------------
// Comparison

struct RunIdentity {
    std::string algorithm;
    std::string env;
    std::uint64_t seed = 0;
};

/// Parses "<algorithm>_<env>_seed<N>" stems.
RunIdentity identify_run(const std::filesystem::path& path);

struct PairTally {
    int wins = 0;    // seeds where the first algorithm is strictly higher
    int losses = 0;  // seeds where the second algorithm is strictly higher
    int ties = 0;
};

struct ComparisonReport {
    /// algorithm -> seed -> mean smoothed value over the final window
    std::map<std::string, std::map<std::uint64_t, double>> final_means;
    /// (first, second) with first < second lexicographically
    std::map<std::pair<std::string, std::string>, PairTally> tallies;
    std::vector<std::filesystem::path> runs;
    std::vector<std::filesystem::path> plots;
};

/// Mean of the last min(window, n) values.
double final_window_mean(const std::vector<double>& values, std::size_t window);

ComparisonReport compare_runs(const std::vector<std::filesystem::path>& runs, std::size_t window);
std::string format_report(const ComparisonReport& report);
nlohmann::json report_to_json(const ComparisonReport& report);

/// Expands a shell glob; results are sorted.
std::vector<std::filesystem::path> expand_glob(const std::string& pattern);

}  // namespace r3
