#include "elte/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace elte {

namespace {

double min_jerk(double t)
{
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

std::string fmt(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Eigen::VectorXd periodic_displacement(const PeriodicMotion& m, Eigen::Index dims, double t)
{
    const double two_pi = 2.0 * std::numbers::pi;
    const double theta = m.pitch_deg * std::numbers::pi / 180.0 * std::sin(two_pi * m.pitch_hz * t + m.phase);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dims);
    const Eigen::Index vertical = dims - 1;
    const Eigen::Index horizontal = dims - 2;
    out(vertical) = m.lever_arm * std::sin(theta);
    out(horizontal) = m.sway_transmission * m.sway_m * std::sin(two_pi * m.sway_hz * t + m.phase);
    return out;
}

double turning_angle(const Trajectory& traj, Eigen::Index i)
{
    const Eigen::VectorXd a = traj.point(i) - traj.point(i - 1);
    const Eigen::VectorXd b = traj.point(i + 1) - traj.point(i);
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

double point_to_polyline(const Eigen::VectorXd& p, const Eigen::MatrixXd& poly)
{
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i + 1 < poly.rows(); ++i) {
        const Eigen::VectorXd a = poly.row(i).transpose();
        const Eigen::VectorXd ab = poly.row(i + 1).transpose() - a;
        const double len2 = ab.squaredNorm();
        const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, (a + t * ab - p).norm());
    }
    return best;
}

} // namespace

Trajectory builtin_shape(Shape shape, Eigen::Index nodes, double dt)
{
    if (nodes < 4) {
        throw DimensionError("builtin_shape: need at least 4 nodes");
    }
    Eigen::MatrixXd pts(nodes, 2);
    const double last = static_cast<double>(nodes - 1);
    if (shape == Shape::SCurve) {
        for (Eigen::Index i = 0; i < nodes; ++i) {
            const double s = min_jerk(static_cast<double>(i) / last);
            pts.row(i) << 0.6 * s, 0.12 * std::sin(2.0 * std::numbers::pi * s);
        }
    } else {
        if ((nodes - 1) % 3 != 0) {
            throw DimensionError("builtin_shape: square corner needs nodes - 1 divisible by 3");
        }
        const Eigen::Index side = (nodes - 1) / 3;
        const double a = 0.3;
        for (Eigen::Index i = 0; i < nodes; ++i) {
            const Eigen::Index leg = std::min<Eigen::Index>(i / side, 2);
            const double u = static_cast<double>(i - leg * side) / static_cast<double>(side) * a;
            switch (leg) {
            case 0: pts.row(i) << 0.0, u; break;
            case 1: pts.row(i) << u, a; break;
            default: pts.row(i) << a, a - u; break;
            }
        }
    }
    return Trajectory(pts, dt);
}

std::optional<Shape> parse_shape(const std::string& name)
{
    if (name == "s_curve") {
        return Shape::SCurve;
    }
    if (name == "square_corner") {
        return Shape::SquareCorner;
    }
    return std::nullopt;
}

const char* to_string(Shape s)
{
    return s == Shape::SCurve ? "s_curve" : "square_corner";
}

PeriodicMotion light_motion()
{
    PeriodicMotion m;
    m.pitch_deg = 3.0;
    m.pitch_hz = 1.5;
    m.sway_m = 0.5;
    m.sway_hz = 2.0;
    return m;
}

PeriodicMotion heavy_motion()
{
    PeriodicMotion m;
    m.pitch_deg = 8.0;
    m.pitch_hz = 2.4;
    m.sway_m = 0.5;
    m.sway_hz = 2.4;
    return m;
}

void validate(const ScenarioConfig& c)
{
    if (!(c.dt > 0.0)) {
        throw std::invalid_argument("scenario: dt must be positive");
    }
    if (c.duration_ticks < 1) {
        throw std::invalid_argument("scenario: duration_ticks must be positive");
    }
    if (!(c.noise_std >= 0.0)) {
        throw std::invalid_argument("scenario: noise_std must be non-negative");
    }
    if (!(c.dropout_prob >= 0.0 && c.dropout_prob <= 1.0)) {
        throw std::invalid_argument("scenario: dropout_prob must lie in [0, 1]");
    }
    auto check_periodic = [](const PeriodicMotion& m) {
        if (m.pitch_hz < 0.0 || m.sway_hz < 0.0) {
            throw std::invalid_argument("scenario: frequencies must be non-negative");
        }
    };
    if (const auto* p = std::get_if<PeriodicMotion>(&c.motion)) {
        check_periodic(*p);
    }
    if (c.burst) {
        check_periodic(c.burst->motion);
        if (c.burst->stop < c.burst->start) {
            throw std::invalid_argument("scenario: burst ends before it starts");
        }
    }
}

Trajectory load_demo(const ScenarioConfig& c)
{
    if (c.demo.shape) {
        return builtin_shape(*c.demo.shape, c.demo.nodes, c.dt);
    }
    const auto raw = read_trajectory_csv(c.demo.csv);
    const auto sized = c.demo.nodes > 0 ? resample(raw, c.demo.nodes) : raw;
    return Trajectory(sized.points(), c.dt); // one node per tick
}

Eigen::VectorXd target_displacement(const ScenarioConfig& c, Eigen::Index dims, Eigen::Index tick)
{
    const double t = static_cast<double>(tick) * c.dt;
    Eigen::VectorXd out = std::visit(
        [&](const auto& m) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, StaticMotion>) {
                return Eigen::VectorXd::Zero(dims);
            } else if constexpr (std::is_same_v<T, StepMotion>) {
                if (m.offset.size() != dims) {
                    throw DimensionError("scenario: step offset has the wrong dimension");
                }
                return tick >= m.tick ? m.offset : Eigen::VectorXd(Eigen::VectorXd::Zero(dims));
            } else if constexpr (std::is_same_v<T, DriftMotion>) {
                if (m.velocity.size() != dims) {
                    throw DimensionError("scenario: drift velocity has the wrong dimension");
                }
                return m.velocity * static_cast<double>(tick);
            } else {
                return periodic_displacement(m, dims, t);
            }
        },
        c.motion);
    if (c.burst && tick >= c.burst->start && tick < c.burst->stop) {
        out += periodic_displacement(c.burst->motion, dims, t);
    }
    return out;
}

Eigen::VectorXd generate_target(const ScenarioConfig& c, const Trajectory& demo, Eigen::Index tick)
{
    Eigen::VectorXd nominal = demo.back();
    if (c.pipeline.standoff.size() == demo.dims()) {
        nominal -= c.pipeline.standoff;
    }
    return nominal + target_displacement(c, demo.dims(), tick);
}

std::optional<Eigen::VectorXd> observe(const Eigen::VectorXd& truth, const ScenarioConfig& c, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < c.dropout_prob) {
        return std::nullopt;
    }
    Eigen::VectorXd z = truth;
    if (c.noise_std > 0.0) {
        std::normal_distribution<double> g(0.0, c.noise_std);
        for (Eigen::Index k = 0; k < z.size(); ++k) {
            z(k) += g(rng);
        }
    }
    return z;
}

EpisodeReport run_episode(const ScenarioConfig& config, Method method, const HmmModel& hmm)
{
    EpisodeReport report;
    report.summary.scenario_id = config.id;
    report.summary.method = method;
    report.summary.mean_mm = std::numeric_limits<double>::quiet_NaN();
    report.summary.std_mm = std::numeric_limits<double>::quiet_NaN();
    try {
        validate(config);
        const auto demo = load_demo(config);
        PipelineConfig pc = config.pipeline;
        pc.method = method;
        pc.dt = config.dt;
        if (pc.standoff.size() == 0) {
            pc.standoff = Eigen::VectorXd::Zero(demo.dims());
        }
        Pipeline pipeline(demo, hmm, pc);
        std::mt19937_64 rng(config.seed);

        std::vector<double> window;
        bool tracking = false;
        for (Eigen::Index k = 0; k < config.duration_ticks; ++k) {
            const Eigen::VectorXd truth = generate_target(config, demo, k);
            auto rec = pipeline.tick(observe(truth, config, rng));
            rec.target = truth;
            // The command is reached on the next tick, so score it there.
            rec.distance = (rec.command - generate_target(config, demo, k + 1) - pc.standoff).norm();
            tracking = tracking || rec.phase == ExecPhase::TargetTracking;
            if (tracking) {
                window.push_back(rec.distance);
            }
            if (rec.phase == ExecPhase::TargetTracking && report.approach.size() == 0) {
                report.approach = pipeline.plan().points();
            }
            report.summary.pause_ticks += rec.phase == ExecPhase::Pause;
            report.summary.reverse_ticks += rec.phase == ExecPhase::Reverse || rec.phase == ExecPhase::Retract;
            report.records.push_back(std::move(rec));
        }
        report.solves = pipeline.solves();
        report.tracking_distances = window;
        report.summary.tracking_ticks = static_cast<int>(window.size());
        if (!window.empty()) {
            double mean = 0.0;
            for (double v : window) {
                mean += v;
            }
            mean /= static_cast<double>(window.size());
            double var = 0.0;
            for (double v : window) {
                var += (v - mean) * (v - mean);
            }
            var /= static_cast<double>(window.size());
            report.summary.mean_mm = 1000.0 * mean;
            report.summary.std_mm = 1000.0 * std::sqrt(var);
            report.summary.success = report.records.back().distance < config.success_threshold;
        }
    } catch (const std::exception& e) {
        report.failed = true;
        report.error = e.what();
        report.summary.success = false;
    }
    return report;
}

void write_ticks_csv(std::ostream& out, const std::vector<TickRecord>& records)
{
    const Eigen::Index d = records.empty() ? 2 : records.front().command.size();
    const char* axes[] = {"x", "y", "z"};
    out << "tick,phase,cursor";
    for (const char* group : {"target", "obs", "forecast", "cmd"}) {
        for (Eigen::Index k = 0; k < d; ++k) {
            out << ',' << group << '_' << axes[k];
        }
    }
    out << ",speed_est,distance\n";
    for (const auto& r : records) {
        out << r.tick << ',' << to_string(r.phase) << ',' << r.cursor;
        for (const Eigen::VectorXd* v : {&r.target, &r.observation, &r.forecast, &r.command}) {
            for (Eigen::Index k = 0; k < d; ++k) {
                out << ',' << fmt((*v)(k));
            }
        }
        out << ',' << fmt(r.speed) << ',' << fmt(r.distance) << '\n';
    }
}

std::string summary_header()
{
    return "scenario_id,method,mean_mm,std_mm,success,pause_ticks,reverse_ticks";
}

std::string summary_line(const EpisodeSummary& s)
{
    char buf[64];
    std::string line = s.scenario_id + ',' + to_string(s.method) + ',';
    auto mm = [&](double v) {
        if (std::isnan(v)) {
            return std::string("nan");
        }
        std::snprintf(buf, sizeof buf, "%.3f", v);
        return std::string(buf);
    };
    line += mm(s.mean_mm) + ',' + mm(s.std_mm) + ',' + (s.success ? "1" : "0") + ',' + std::to_string(s.pause_ticks)
            + ',' + std::to_string(s.reverse_ticks);
    return line;
}

std::vector<Eigen::Index> detect_corners(const Trajectory& demo, double min_angle_deg)
{
    const double threshold = min_angle_deg * std::numbers::pi / 180.0;
    const Eigen::Index n = demo.size();
    std::vector<double> angle(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        angle[static_cast<std::size_t>(i)] = turning_angle(demo, i);
    }
    std::vector<Eigen::Index> corners;
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        const double a = angle[static_cast<std::size_t>(i)];
        if (a >= threshold && a > angle[static_cast<std::size_t>(i - 1)] && a >= angle[static_cast<std::size_t>(i + 1)]) {
            corners.push_back(i);
        }
    }
    return corners;
}

double corner_metric(const Trajectory& demo, const Trajectory& repro, const CornerOptions& options)
{
    if (repro.dims() != demo.dims()) {
        throw DimensionError("corner_metric: dimension mismatch");
    }
    const auto corners = detect_corners(demo, options.min_angle_deg);
    if (corners.empty()) {
        throw std::invalid_argument("corner_metric: no corners detected in the demonstration");
    }
    const Trajectory r = repro.size() == demo.size() ? repro : resample(repro, demo.size());
    const Eigen::Index n = demo.size();
    const Eigen::Index k = options.window > 0 ? options.window : std::max<Eigen::Index>(n / 10, 1);
    double worst = 0.0;
    for (Eigen::Index c : corners) {
        const Eigen::Index lo = std::max<Eigen::Index>(c - k, 0);
        const Eigen::Index hi = std::min<Eigen::Index>(c + k, n - 1);
        const Eigen::VectorXd d_lo = r.point(lo) - demo.point(lo);
        const Eigen::VectorXd d_hi = r.point(hi) - demo.point(hi);
        const double w = hi > lo ? static_cast<double>(c - lo) / static_cast<double>(hi - lo) : 0.0;
        const Eigen::VectorXd target = demo.point(c) + (1.0 - w) * d_lo + w * d_hi;
        worst = std::max(worst, point_to_polyline(target, r.points()));
    }
    return worst;
}

SweepResult run_sweep(const SweepPlan& plan, const HmmModel& hmm, int jobs)
{
    struct Job {
        std::size_t regime;
        std::size_t method;
        std::uint64_t seed;
    };
    std::vector<Job> work;
    for (std::size_t r = 0; r < plan.regimes.size(); ++r) {
        for (std::size_t m = 0; m < plan.methods.size(); ++m) {
            for (auto seed : plan.seeds) {
                work.push_back({r, m, seed});
            }
        }
    }
    SweepResult result;
    result.episodes.resize(work.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < work.size(); i = next++) {
            const auto& job = work[i];
            ScenarioConfig sc = plan.regimes[job.regime].scenario;
            sc.seed = job.seed;
            sc.id = plan.regimes[job.regime].name + "_s" + std::to_string(job.seed);
            result.episodes[i] = run_episode(sc, plan.methods[job.method], hmm);
        }
    };
    unsigned n = jobs > 0 ? static_cast<unsigned>(jobs) : std::max(1u, std::thread::hardware_concurrency());
    n = std::min<unsigned>(n, static_cast<unsigned>(std::max<std::size_t>(work.size(), 1)));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    const std::size_t per_cell = plan.seeds.size();
    for (std::size_t cell = 0; cell * per_cell < work.size() && per_cell > 0; ++cell) {
        SweepRow row;
        row.regime = plan.regimes[work[cell * per_cell].regime].name;
        row.method = plan.methods[work[cell * per_cell].method];
        std::vector<double> pooled;
        for (std::size_t i = cell * per_cell; i < (cell + 1) * per_cell; ++i) {
            const auto& ep = result.episodes[i];
            ++row.episodes;
            row.failures += ep.failed;
            pooled.insert(pooled.end(), ep.tracking_distances.begin(), ep.tracking_distances.end());
        }
        row.mean_mm = std::numeric_limits<double>::quiet_NaN();
        row.std_mm = std::numeric_limits<double>::quiet_NaN();
        if (!pooled.empty()) {
            double mean = 0.0;
            for (double v : pooled) {
                mean += v;
            }
            mean /= static_cast<double>(pooled.size());
            double var = 0.0;
            for (double v : pooled) {
                var += (v - mean) * (v - mean);
            }
            row.mean_mm = 1000.0 * mean;
            row.std_mm = 1000.0 * std::sqrt(var / static_cast<double>(pooled.size()));
        }
        result.rows.push_back(row);
    }
    return result;
}

std::string sweep_header()
{
    return "regime,method,mean_mm,std_mm";
}

std::string sweep_line(const SweepRow& row)
{
    char buf[96];
    if (std::isnan(row.mean_mm)) {
        std::snprintf(buf, sizeof buf, "nan,nan");
    } else {
        std::snprintf(buf, sizeof buf, "%.3f,%.3f", row.mean_mm, row.std_mm);
    }
    return row.regime + ',' + to_string(row.method) + ',' + buf;
}

std::vector<CorpusRegime> default_corpus_regimes()
{
    PeriodicMotion still;
    PeriodicMotion marginal;
    marginal.pitch_deg = 30.0;
    marginal.pitch_hz = 3.0;
    marginal.sway_m = 0.5;
    marginal.sway_hz = 3.0;
    PeriodicMotion violent;
    violent.pitch_deg = 60.0;
    violent.pitch_hz = 4.0;
    violent.sway_m = 0.5;
    violent.sway_hz = 4.0;
    return {{"calm", still}, {"calm", light_motion()}, {"calm", heavy_motion()},
            {"marginal", marginal}, {"violent", violent}};
}

Corpus generate_corpus(const CorpusConfig& config)
{
    const auto regimes = config.regimes.empty() ? default_corpus_regimes() : config.regimes;
    if (config.sequences < 1 || config.segments_per_sequence < 1 || config.segment_length < 2) {
        throw std::invalid_argument("corpus: need at least one sequence of one segment of 2 steps");
    }
    Corpus corpus;
    std::vector<int> label_of;
    for (const auto& r : regimes) {
        auto it = std::find(corpus.labels.begin(), corpus.labels.end(), r.label);
        if (it == corpus.labels.end()) {
            corpus.labels.push_back(r.label);
            it = corpus.labels.end() - 1;
        }
        label_of.push_back(static_cast<int>(it - corpus.labels.begin()));
    }
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_int_distribution<std::size_t> pick(0, regimes.size() - 1);
    ScenarioConfig sc;
    sc.dt = config.dt;
    sc.noise_std = config.noise_std;
    for (int s = 0; s < config.sequences; ++s) {
        TargetTracker tracker(config.ukf, config.dt);
        std::vector<double> speeds;
        std::vector<int> ids;
        Eigen::Index tick = 0;
        for (int g = 0; g < config.segments_per_sequence; ++g) {
            const std::size_t r = pick(rng);
            PeriodicMotion m = regimes[r].motion;
            m.phase = phase(rng);
            sc.motion = m;
            for (Eigen::Index k = 0; k < config.segment_length; ++k, ++tick) {
                tracker.observe(observe(target_displacement(sc, 2, tick), sc, rng));
                speeds.push_back(tracker.speed());
                ids.push_back(label_of[r]);
            }
        }
        corpus.speeds.push_back(std::move(speeds));
        corpus.label_ids.push_back(std::move(ids));
    }
    return corpus;
}

HmmModel labeled_initial_model(const Corpus& corpus, double variance_floor)
{
    const auto k = static_cast<Eigen::Index>(corpus.labels.size());
    Eigen::VectorXd n = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd sum2 = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd trans = Eigen::MatrixXd::Ones(k, k); // add-one smoothing
    Eigen::VectorXd first = Eigen::VectorXd::Ones(k);
    for (std::size_t s = 0; s < corpus.speeds.size(); ++s) {
        const auto& ids = corpus.label_ids[s];
        first(ids.front()) += 1.0;
        for (std::size_t t = 0; t < ids.size(); ++t) {
            const double v = corpus.speeds[s][t];
            n(ids[t]) += 1.0;
            sum(ids[t]) += v;
            sum2(ids[t]) += v * v;
            if (t > 0) {
                trans(ids[t - 1], ids[t]) += 1.0;
            }
        }
    }
    HmmModel m;
    m.means.resize(k);
    m.variances.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        if (n(i) == 0.0) {
            throw std::invalid_argument("corpus: label '" + corpus.labels[static_cast<std::size_t>(i)]
                                        + "' never occurs");
        }
        m.means(i) = sum(i) / n(i);
        m.variances(i) = std::max(variance_floor, sum2(i) / n(i) - m.means(i) * m.means(i));
    }
    m.transition = trans;
    for (Eigen::Index i = 0; i < k; ++i) {
        m.transition.row(i) /= m.transition.row(i).sum();
    }
    m.initial = first / first.sum();
    return m;
}

TrainedHmm train_safety_hmm(const Corpus& corpus, const BaumWelchOptions& options)
{
    TrainedHmm out;
    out.start = labeled_initial_model(corpus, options.variance_floor);
    out.fit = baum_welch_from(out.start, corpus.speeds, options);
    out.fit.model = sort_states_by_mean(out.fit.model);
    return out;
}

} // namespace elte
