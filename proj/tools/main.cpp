#include "elte/scenario_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace elte;

namespace {

constexpr int kOk = 0;
constexpr int kEpisodeFailed = 1;
constexpr int kConfigError = 2;

std::string default_out()
{
    const char* env = std::getenv("ELTE_ADAPT_OUT");
    return env && *env ? env : "out";
}

HmmModel load_model(const fs::path& path)
{
    if (!fs::exists(path)) {
        throw ConfigError("HMM model " + path.string() + " not found; create it with `elte-adapt train-hmm --hmm-model "
                          + path.string() + "`");
    }
    try {
        return read_hmm(path);
    } catch (const std::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
}

fs::path prepare_out(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
    }
    return dir;
}

struct RunArgs {
    std::string scenario;
    std::string method = "elte";
    std::optional<std::uint64_t> seed;
    std::string out = default_out();
    std::string hmm = "models/hmm_default.txt";
};

int cmd_run(const RunArgs& a)
{
    auto sc = load_scenario(a.scenario);
    if (a.seed) {
        sc.seed = *a.seed;
    }
    const Method method = parse_method(a.method);
    const auto hmm = load_model(a.hmm);
    const auto dir = prepare_out(a.out);

    const auto report = run_episode(sc, method, hmm);
    const std::string stem = sc.id + "_" + to_string(method);
    std::ostringstream ticks;
    write_ticks_csv(ticks, report.records);
    write_text(dir / (stem + "_ticks.csv"), ticks.str());
    write_text(dir / (stem + "_summary.csv"), summary_header() + "\n" + summary_line(report.summary) + "\n");

    std::cout << summary_header() << "\n" << summary_line(report.summary) << "\n";
    if (report.failed) {
        std::cerr << "episode failed: " << report.error << "\n";
        return kEpisodeFailed;
    }
    return kOk;
}

struct SweepArgs {
    std::string manifest;
    int jobs = 1;
    std::string out = default_out();
    std::string hmm = "models/hmm_default.txt";
};

int cmd_sweep(const SweepArgs& a)
{
    const auto plan = load_sweep(a.manifest);
    const auto hmm = load_model(a.hmm);
    const auto dir = prepare_out(a.out);
    const auto result = run_sweep(plan, hmm, a.jobs);

    std::string table = sweep_header() + "\n";
    for (const auto& row : result.rows) {
        table += sweep_line(row) + "\n";
    }
    std::string episodes = summary_header() + "\n";
    int failed = 0;
    for (const auto& ep : result.episodes) {
        episodes += summary_line(ep.summary) + "\n";
        if (ep.failed) {
            ++failed;
            std::cerr << "episode " << ep.summary.scenario_id << " (" << to_string(ep.summary.method)
                      << ") failed: " << ep.error << "\n";
        }
    }
    const std::string stem = fs::path(a.manifest).stem().string();
    write_text(dir / (stem + "_table.csv"), table);
    write_text(dir / (stem + "_episodes.csv"), episodes);
    std::cout << table;
    return failed ? kEpisodeFailed : kOk;
}

struct TrainArgs {
    std::string hmm = "models/hmm_default.txt";
    std::uint64_t seed = 1;
    int sequences = 40;
    int max_iter = 200;
};

int cmd_train(const TrainArgs& a)
{
    CorpusConfig cc;
    cc.seed = a.seed;
    cc.sequences = a.sequences;
    BaumWelchOptions opts;
    opts.max_iter = a.max_iter;
    if (a.sequences < 1 || a.max_iter < 1) {
        throw ConfigError("--sequences and --max-iter must be positive");
    }
    const auto trained = train_safety_hmm(generate_corpus(cc), opts);
    const auto& fit = trained.fit;
    const fs::path path = a.hmm;
    if (path.has_parent_path()) {
        prepare_out(path.parent_path().string());
    }
    write_hmm(path, fit.model);
    if (!fit.converged) {
        std::cerr << "warning: Baum-Welch stopped at max_iter " << a.max_iter << " before converging\n";
    }
    const auto& m = fit.model;
    if (!(m.means(0) < m.means(1) && m.means(1) < m.means(2))) {
        std::cerr << "warning: emission means are not strictly ordered\n";
    }
    std::printf("log_likelihood %.10g after %d iterations\n", fit.log_likelihoods.back(), fit.iterations);
    std::printf("means %.6g %.6g %.6g\n", m.means(0), m.means(1), m.means(2));
    std::printf("wrote %s\n", path.string().c_str());
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Adaptive trajectory execution on moving targets"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run one scenario");
    run_cmd->add_option("--scenario", run.scenario, "Scenario JSON file")->required();
    run_cmd->add_option("--method", run.method, "elte or dmp")->check(CLI::IsMember({"elte", "dmp"}));
    run_cmd->add_option("--seed", run.seed, "Override the scenario seed");
    run_cmd->add_option("--out", run.out, "Output directory (default $ELTE_ADAPT_OUT or ./out)");
    run_cmd->add_option("--hmm-model", run.hmm, "Safety HMM model file");

    SweepArgs sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run a regimes x methods x seeds sweep");
    sweep_cmd->add_option("--scenario,--manifest", sweep.manifest, "Sweep manifest JSON file")->required();
    sweep_cmd->add_option("--jobs", sweep.jobs, "Parallel episodes (0 = one per core)")->check(CLI::NonNegativeNumber);
    sweep_cmd->add_option("--out", sweep.out, "Output directory (default $ELTE_ADAPT_OUT or ./out)");
    sweep_cmd->add_option("--hmm-model", sweep.hmm, "Safety HMM model file");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train-hmm", "Train the safety HMM on the synthetic corpus");
    train_cmd->add_option("--hmm-model", train.hmm, "Where to write the model");
    train_cmd->add_option("--seed", train.seed, "Corpus seed");
    train_cmd->add_option("--sequences", train.sequences, "Corpus sequences");
    train_cmd->add_option("--max-iter", train.max_iter, "Baum-Welch iteration cap");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (*run_cmd) {
            return cmd_run(run);
        }
        if (*sweep_cmd) {
            return cmd_sweep(sweep);
        }
        return cmd_train(train);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kEpisodeFailed;
    }
}
