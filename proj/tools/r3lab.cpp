#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "r3/harness.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        unsigned long long v = std::stoull(item, &used);
        if (used != item.size()) throw std::invalid_argument("bad seed '" + item + "'");
        seeds.push_back(v);
    }
    if (seeds.empty()) throw std::invalid_argument("--seeds needs at least one seed");
    return seeds;
}

std::vector<fs::path> runs_or_throw(const std::string& pattern) {
    auto runs = r3::expand_glob(pattern);
    if (runs.empty()) throw std::runtime_error("no files match '" + pattern + "'");
    return runs;
}

int cmd_run(const std::string& config_path, const std::string& seeds, const std::string& out, bool quiet) {
    auto cfg = r3::parse_config(config_path);
    if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
    if (!out.empty()) cfg.out_dir = out;
    cfg.validate();

    for (auto seed : cfg.seeds) {
        r3::EpisodeObserver progress;
        if (!quiet) {
            progress = [](const r3::Trainer& t, const r3::RunRecord& r) {
                if (r.episode % 100 == 0)
                    std::cerr << "  episode " << r.episode << " steps " << t.steps() << " smoothed " << r.smoothed
                              << " phase " << r.phase << '\n';
            };
        }
        auto result = r3::run_seed(cfg, seed, progress);
        std::cerr << r3::run_name(cfg, seed) << ": " << result.records.size() << " episodes, "
                  << (result.records.empty() ? 0 : result.records.back().steps) << " steps, "
                  << static_cast<long>(result.wall_ms) << " ms wall clock\n";
        std::cout << result.csv_path.string() << '\n';
    }
    return 0;
}

int cmd_plot(const std::string& pattern, const std::string& metric, const std::string& out, const std::string& x) {
    r3::plot_runs(runs_or_throw(pattern), metric, x, out);
    std::cout << out << '\n';
    return 0;
}

int cmd_compare(const std::string& pattern, std::size_t window, const std::string& plot, bool as_json) {
    auto runs = runs_or_throw(pattern);
    auto report = r3::compare_runs(runs, window);
    if (!plot.empty()) {
        r3::plot_runs(runs, "smoothed", "", plot);
        report.plots.push_back(plot);
    }
    if (as_json)
        std::cout << r3::report_to_json(report).dump(2) << '\n';
    else
        std::cout << r3::format_report(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Replay-based policy optimization lab"};
    app.require_subcommand(1);

    std::string config, seeds, out;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "train every seed of a config and write metrics CSVs");
    run->add_option("--config", config, "JSON experiment config")->required()->check(CLI::ExistingFile);
    run->add_option("--seeds", seeds, "comma-separated seed list overriding the config");
    run->add_option("--out", out, "output directory overriding the config");
    run->add_flag("--quiet", quiet, "no per-episode progress");

    std::string plot_glob, metric = "smoothed", plot_out, x_axis;
    auto* plot = app.add_subcommand("plot", "draw an SVG line chart from run CSVs");
    plot->add_option("--runs", plot_glob, "glob of run CSVs")->required();
    plot->add_option("--metric", metric, "column to plot");
    plot->add_option("--out", plot_out, "SVG output path")->required();
    plot->add_option("--x", x_axis, "episode or steps (default: episode for cartpole, steps otherwise)")
        ->check(CLI::IsMember({"episode", "steps"}));

    std::string cmp_glob, cmp_plot;
    std::size_t window = 100;
    bool as_json = false;
    auto* compare = app.add_subcommand("compare", "final-window comparison of runs across seeds");
    compare->add_option("--runs", cmp_glob, "glob of run CSVs")->required();
    compare->add_option("--window", window, "episodes in the final window")->check(CLI::PositiveNumber);
    compare->add_option("--plot", cmp_plot, "also write an SVG of the smoothed curves");
    compare->add_flag("--json", as_json, "print the report as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config, seeds, out, quiet);
        if (*plot) return cmd_plot(plot_glob, metric, plot_out, x_axis);
        if (*compare) return cmd_compare(cmp_glob, window, cmp_plot, as_json);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
