#include "fsstab/errors.hpp"
#include "fsstab/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

namespace {

struct CommonOpts {
    std::string out_dir;
    unsigned long long seed = 0;
    bool seed_set = false;
};

fsstab::ExperimentConfig load_with_opts(const std::string& path, const CommonOpts& opts) {
    fsstab::ExperimentConfig cfg = fsstab::load_config(path);
    if (!opts.out_dir.empty()) cfg.output_directory = opts.out_dir;
    if (opts.seed_set) cfg.seed = opts.seed;
    return cfg;
}

int run_one(const fsstab::ExperimentConfig& cfg) {
    const fsstab::ExperimentSummary s = fsstab::run_experiment(cfg);
    std::cout << "lambda = " << s.lambda << ", N = " << s.unstable_dimension
              << ", kalman rank = " << s.kalman_rank
              << (s.controllable ? " (controllable)" : " (NOT controllable)") << "\n"
              << "measured closed-loop rate = " << s.measured_rate
              << " (open loop " << s.open_loop_rate << ")\n"
              << "outputs in " << s.output_directory << "\n";
    return 0;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coupled fluid-solid boundary-feedback stabilization laboratory"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string config_path;
    std::string sweep_param;
    int jobs = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "experiment config file")->required();
        cmd->add_option("--out", opts.out_dir, "output directory override");
        cmd->add_option("--seed", opts.seed, "random seed override")
            ->each([&](const std::string&) { opts.seed_set = true; });
    };

    CLI::App* cmd_run = app.add_subcommand("run", "run the full pipeline");
    add_common(cmd_run);

    CLI::App* cmd_verify = app.add_subcommand("verify", "run the invariant suite");
    add_common(cmd_verify);

    CLI::App* cmd_sweep = app.add_subcommand("sweep", "run over a parameter list");
    add_common(cmd_sweep);
    cmd_sweep->add_option("--param", sweep_param, "key=v1,v2,... sweep values")->required();
    cmd_sweep->add_option("--jobs", jobs, "parallel sweep workers");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            return run_one(load_with_opts(config_path, opts));
        }
        if (cmd_verify->parsed()) {
            const fsstab::ExperimentConfig cfg = load_with_opts(config_path, opts);
            const fsstab::VerificationReport report = fsstab::verify(cfg);
            fsstab::print_report(std::cout, report);
            std::filesystem::create_directories(cfg.output_directory);
            fsstab::write_report_json(
                (std::filesystem::path(cfg.output_directory) / "verify.json").string(),
                report);
            return 0;
        }
        if (cmd_sweep->parsed()) {
            const auto eq = sweep_param.find('=');
            if (eq == std::string::npos)
                throw fsstab::ConfigError("--param expects key=v1,v2,...");
            const std::string key = sweep_param.substr(0, eq);
            const std::vector<std::string> values = split_csv(sweep_param.substr(eq + 1));
            if (values.empty()) throw fsstab::ConfigError("--param has no values");

            const fsstab::ExperimentConfig base = load_with_opts(config_path, opts);
            std::vector<fsstab::ExperimentConfig> entries;
            for (const auto& v : values) {
                fsstab::ExperimentConfig cfg = base;
                fsstab::apply_override(cfg, key, v);
                std::string safe_key = key;
                for (auto& ch : safe_key)
                    if (ch == '.' || ch == '/') ch = '_';
                const std::string tag = "sweep_" + safe_key + "_" + v;
                cfg.output_directory =
                    (std::filesystem::path(base.output_directory) / tag).string();
                entries.push_back(std::move(cfg));
            }

            std::mutex io;
            std::vector<std::thread> pool;
            std::atomic<size_t> next{0};
            std::atomic<int> failures{0};
            const int workers = std::max(1, std::min<int>(jobs, entries.size()));
            for (int w = 0; w < workers; ++w)
                pool.emplace_back([&] {
                    for (size_t i = next++; i < entries.size(); i = next++) {
                        try {
                            const auto s = fsstab::run_experiment(entries[i]);
                            std::lock_guard<std::mutex> lock(io);
                            std::cout << entries[i].output_directory
                                      << ": rate = " << s.measured_rate << "\n";
                        } catch (const std::exception& e) {
                            ++failures;
                            std::lock_guard<std::mutex> lock(io);
                            std::cerr << entries[i].output_directory << ": " << e.what()
                                      << "\n";
                        }
                    }
                });
            for (auto& t : pool) t.join();
            return failures == 0 ? 0 : 1;
        }
    } catch (const fsstab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
