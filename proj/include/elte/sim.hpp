#pragma once

#include "elte/executor.hpp"
#include "elte/hmm.hpp"
#include "elte/trajectory.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace elte {

enum class Shape { SCurve, SquareCorner };

/// Analytic demonstrations. The S-curve is a 0.6 m reach with a 0.12 m
/// lateral swing and minimum-jerk timing. The square corner walks three sides
/// of a 0.3 m square at constant speed, so `nodes` - 1 must be a multiple of
/// 3 for the corners to land on nodes.
Trajectory builtin_shape(Shape shape, Eigen::Index nodes, double dt);
std::optional<Shape> parse_shape(const std::string& name);
const char* to_string(Shape s);

struct StaticMotion {};
struct StepMotion {
    Eigen::Index tick = 0;
    Eigen::VectorXd offset;
};
struct DriftMotion {
    Eigen::VectorXd velocity; // m per tick
};
/// Platform pitch and sway mapped onto the target. Pitch swings the target
/// on a lever arm (vertical axis); sway is attenuated by the mounting before
/// it reaches the target (horizontal axis).
struct PeriodicMotion {
    double pitch_deg = 0.0;
    double pitch_hz = 0.0;
    double sway_m = 0.0;
    double sway_hz = 0.0;
    double lever_arm = 0.5;
    double sway_transmission = 0.02;
    double phase = 0.0; // rad, shared by both components
};
using TargetMotion = std::variant<StaticMotion, StepMotion, DriftMotion, PeriodicMotion>;

/// Extra periodic motion superimposed on ticks [start, stop).
struct Burst {
    Eigen::Index start = 0;
    Eigen::Index stop = 0;
    PeriodicMotion motion;
};

/// Named motion regimes.
PeriodicMotion light_motion();
PeriodicMotion heavy_motion();

struct DemoSource {
    std::optional<Shape> shape = Shape::SCurve;
    std::filesystem::path csv; // used when shape is empty
    Eigen::Index nodes = 100;
};

struct ScenarioConfig {
    std::string id = "scenario";
    DemoSource demo;
    TargetMotion motion = StaticMotion{};
    std::optional<Burst> burst;
    double noise_std = 0.0;
    double dropout_prob = 0.0;
    Eigen::Index duration_ticks = 250;
    double dt = 0.02;
    std::uint64_t seed = 0;
    double success_threshold = 0.03; // m, final tracking distance
    PipelineConfig pipeline;         // method and dt are set by run_episode
};

void validate(const ScenarioConfig& config);

/// Demonstration at the scenario timestep (CSV demos are resampled to
/// `nodes` when nodes > 0).
Trajectory load_demo(const ScenarioConfig& config);

/// Target displacement from its nominal position at `tick`.
Eigen::VectorXd target_displacement(const ScenarioConfig& config, Eigen::Index dims, Eigen::Index tick);

/// True target position: nominal (demo end minus standoff) plus displacement.
Eigen::VectorXd generate_target(const ScenarioConfig& config, const Trajectory& demo, Eigen::Index tick);

/// Noisy observation or dropout (nullopt).
std::optional<Eigen::VectorXd> observe(const Eigen::VectorXd& truth, const ScenarioConfig& config,
                                       std::mt19937_64& rng);

struct EpisodeSummary {
    std::string scenario_id;
    Method method = Method::Elte;
    double mean_mm = 0.0; // over the tracking window; NaN if it is empty
    double std_mm = 0.0;
    bool success = false;
    int pause_ticks = 0;
    int reverse_ticks = 0; // Reverse plus Retract
    int tracking_ticks = 0;
};

struct EpisodeReport {
    std::vector<TickRecord> records;
    EpisodeSummary summary;
    int solves = 0;
    Eigen::MatrixXd approach; // executed plan when tracking began; empty if it never did
    std::vector<double> tracking_distances; // m, the scored window
    bool failed = false;
    std::string error;
};

/// Runs one scenario end to end. Pipeline errors become a failed report.
EpisodeReport run_episode(const ScenarioConfig& config, Method method, const HmmModel& hmm);

void write_ticks_csv(std::ostream& out, const std::vector<TickRecord>& records);
std::string summary_header();
std::string summary_line(const EpisodeSummary& s);

struct SweepRegime {
    std::string name;
    ScenarioConfig scenario; // seed is replaced per run
};

struct SweepPlan {
    std::vector<SweepRegime> regimes;
    std::vector<Method> methods;
    std::vector<std::uint64_t> seeds;
};

/// Distances pooled over every seed of one (regime, method) cell.
struct SweepRow {
    std::string regime;
    Method method = Method::Elte;
    double mean_mm = 0.0;
    double std_mm = 0.0;
    int episodes = 0;
    int failures = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;           // regime-major, then method
    std::vector<EpisodeReport> episodes;  // regime, method, seed order
};

/// Runs regimes x methods x seeds on up to `jobs` threads (0 means one per
/// core). Output order does not depend on scheduling.
SweepResult run_sweep(const SweepPlan& plan, const HmmModel& hmm, int jobs = 1);

std::string sweep_header();
std::string sweep_line(const SweepRow& row);

struct CornerOptions {
    double min_angle_deg = 30.0;
    Eigen::Index window = 0; // 0 means T / 10
};

/// Largest distance from the reproduction to the demonstration's corners,
/// after shifting each corner by the reproduction's local displacement.
double corner_metric(const Trajectory& demo, const Trajectory& repro, const CornerOptions& options = {});

/// Indices of the demonstration's corners (turning-angle peaks).
std::vector<Eigen::Index> detect_corners(const Trajectory& demo, double min_angle_deg = 30.0);

struct CorpusRegime {
    std::string label;
    PeriodicMotion motion;
};

struct CorpusConfig {
    std::vector<CorpusRegime> regimes; // empty means the default calm/marginal/violent set
    int sequences = 40;
    int segments_per_sequence = 4;     // regime switches inside a sequence
    Eigen::Index segment_length = 100;
    double dt = 0.02;
    double noise_std = 0.002;
    std::uint64_t seed = 1;
    UkfParams ukf;
};

/// Calm covers still water through the heavy regime; marginal and violent
/// are well beyond anything the tracker should work through.
std::vector<CorpusRegime> default_corpus_regimes();

struct Corpus {
    std::vector<std::string> labels;          // distinct, in first-seen order
    std::vector<std::vector<double>> speeds;  // UKF speed estimates
    std::vector<std::vector<int>> label_ids;  // per step, index into labels
};

/// Each sequence chains randomly drawn regimes, each with a random phase.
Corpus generate_corpus(const CorpusConfig& config);

/// Labeled starting point for EM: per-label speed mean and variance,
/// transitions counted from the label sequences, states in label order.
HmmModel labeled_initial_model(const Corpus& corpus, double variance_floor = 1e-8);

struct TrainedHmm {
    BaumWelchResult fit;  // model sorted by emission mean
    HmmModel start;
};

/// labeled_initial_model followed by Baum-Welch and mean-ordering.
TrainedHmm train_safety_hmm(const Corpus& corpus, const BaumWelchOptions& options = {});

} // namespace elte
