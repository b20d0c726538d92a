// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "elte/scenario_io.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace elte;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void report(int id, const Verdict& v)
{
    std::printf("criterion %d: %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const fs::path kRoot = ELTE_SOURCE_DIR;

Eigen::VectorXd jitter(std::mt19937_64& rng, Eigen::VectorXd p, double s)
{
    std::uniform_real_distribution<double> u(-s, s);
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        p(k) += u(rng);
    }
    return p;
}

// 1. Offline solve against the dense KKT oracle, plus solve time at T=500.
Verdict criterion_1()
{
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    int solved = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng() % 196);
        const Eigen::Index d = trial % 2 ? 3 : 2;
        const auto demo = oracle::random_demo(rng, n, d);
        ElasticProblem p{demo, {0.1 * u(rng), 0.1 * u(rng)}, {}, {}};
        p.constraints.push_back(PointConstraint::attract(0, demo.front()));
        // The oracle enumerates every face combination of the balls, so the
        // number of balls shrinks as T grows.
        const int balls = n <= 30 ? 2 : n <= 120 ? 1 : 0;
        const Eigen::Index last = n - 1;
        if (balls >= 1) {
            p.constraints.push_back(PointConstraint::attract(last, jitter(rng, demo.back(), 0.3), 0.02 + 0.1 * u(rng)));
        } else {
            p.constraints.push_back(PointConstraint::attract(last, jitter(rng, demo.back(), 0.3)));
        }
        if (balls == 2) {
            const Eigen::Index via = 1 + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n - 2));
            p.constraints.push_back(PointConstraint::attract(via, jitter(rng, demo.point(via), 0.2), 0.05 * u(rng) + 0.01));
        }
        const int pins = static_cast<int>(rng() % 3);
        for (int k = 0; k < pins; ++k) {
            const Eigen::Index i = 1 + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n - 2));
            bool taken = false;
            for (const auto& c : p.constraints) {
                taken = taken || c.index == i;
            }
            if (!taken) {
                p.constraints.push_back(PointConstraint::attract(i, jitter(rng, demo.point(i), 0.1)));
            }
        }
        const auto y = reproduce(p);
        const auto want = oracle::dense_kkt_solution(p);
        worst = std::max(worst, oracle::relative_error(y.points(), want));
        ++solved;
    }

    const auto big = oracle::random_demo(rng, 500, 3);
    ElasticProblem p{big, {}, {}, {}};
    p.constraints.push_back(PointConstraint::attract(0, big.front()));
    p.constraints.push_back(PointConstraint::attract(499, jitter(rng, big.back(), 0.2), 0.02));
    p.constraints.push_back(PointConstraint::attract(250, jitter(rng, big.point(250), 0.1), 0.01));
    std::vector<double> times;
    for (int rep = 0; rep < 5; ++rep) {
        const auto t0 = Clock::now();
        const auto y = reproduce(p);
        times.push_back(ms_since(t0));
    }
    std::sort(times.begin(), times.end());
    const double median = times[2];
    return {worst < 1e-8 && median < 50.0,
            fmt("max rel err %.2e over %d problems; T=500 d=3 solve median %.1f ms", worst, solved, median)};
}

// 2. Zero smoothness weights and both ends pinned give back the demonstration.
Verdict criterion_2()
{
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng() % 198);
        const Eigen::Index d = trial % 2 ? 3 : 2;
        const auto demo = oracle::random_demo(rng, n, d);
        ElasticProblem p{demo, {0.0, 0.0}, {}, {}};
        p.constraints.push_back(PointConstraint::attract(0, demo.front()));
        p.constraints.push_back(PointConstraint::attract(n - 1, demo.back()));
        const auto y = reproduce(p);
        worst = std::max(worst, (y.points() - demo.points()).cwiseAbs().maxCoeff());
    }
    return {worst < 1e-10, fmt("max abs deviation %.2e over 50 demos", worst)};
}

// 3. Online suffix: bit-exact prefix, partitioned oracle on the rest.
Verdict criterion_3()
{
    std::mt19937_64 rng(303);
    double worst = 0.0;
    bool prefix_exact = true;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng() % 196);
        const Eigen::Index d = trial % 2 ? 3 : 2;
        const Eigen::Index t = 1 + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n - 2)); // 1..n-2
        const auto demo = oracle::random_demo(rng, n, d);
        ElasticProblem p{demo, {0.01, 0.01}, {}, {}};
        p.constraints.push_back(PointConstraint::attract(0, demo.front()));
        Eigen::MatrixXd prefix = demo.points().topRows(t + 1);
        for (Eigen::Index i = 1; i <= t; ++i) {
            prefix.row(i) = jitter(rng, prefix.row(i).transpose(), 0.01).transpose();
        }
        p.prefix = prefix;
        const Eigen::VectorXd target = jitter(rng, demo.back(), 0.3);
        const auto y = adapt_suffix(p, target, 0.0);
        for (Eigen::Index i = 0; i <= t; ++i) {
            for (Eigen::Index k = 0; k < d; ++k) {
                prefix_exact = prefix_exact && y.points()(i, k) == prefix(i, k);
            }
        }
        worst = std::max(worst, oracle::relative_error(y.points(), oracle::partitioned_suffix(p, target)));
    }
    return {prefix_exact && worst < 1e-8,
            fmt("prefix %s; max rel err %.2e over 100 (T, t) pairs", prefix_exact ? "bit-exact" : "CHANGED", worst)};
}

// Textbook linear Kalman filter for the constant-velocity model.
struct Kalman {
    Eigen::VectorXd x;
    Eigen::MatrixXd P;

    void predict(double dt, double q)
    {
        const Eigen::Index d = x.size() / 2;
        Eigen::MatrixXd F = Eigen::MatrixXd::Identity(2 * d, 2 * d);
        F.topRightCorner(d, d).diagonal().setConstant(dt);
        Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(2 * d, 2 * d);
        Q.topLeftCorner(d, d).diagonal().setConstant(q * dt * dt * dt / 3.0);
        Q.topRightCorner(d, d).diagonal().setConstant(q * dt * dt / 2.0);
        Q.bottomLeftCorner(d, d).diagonal().setConstant(q * dt * dt / 2.0);
        Q.bottomRightCorner(d, d).diagonal().setConstant(q * dt);
        x = F * x;
        P = F * P * F.transpose() + Q;
    }
    void update(const Eigen::VectorXd& z, double r)
    {
        const Eigen::Index d = z.size();
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d, 2 * d);
        H.leftCols(d).setIdentity();
        const Eigen::MatrixXd S = H * P * H.transpose() + r * Eigen::MatrixXd::Identity(d, d);
        const Eigen::MatrixXd K = P * H.transpose() * S.inverse();
        x += K * (z - H * x);
        const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(2 * d, 2 * d) - K * H;
        P = IKH * P * IKH.transpose() + r * K * K.transpose();
    }
};

// 4. UKF against the exact KF, and forecast against zero-order hold.
Verdict criterion_4()
{
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g;
        const Eigen::Index d = seed % 2 ? 2 : 3;
        UkfParams params;
        params.q = 0.3;
        params.r_obs = 4e-4;
        const double dt = 0.02 + 0.01 * static_cast<double>(seed % 3);
        Eigen::VectorXd truth = Eigen::VectorXd::NullaryExpr(2 * d, [&] { return g(rng); });
        auto noisy = [&] {
            return Eigen::VectorXd(truth.head(d)
                                   + std::sqrt(params.r_obs) * Eigen::VectorXd::NullaryExpr(d, [&] { return g(rng); }));
        };
        UkfBelief b = ukf_init(noisy(), params);
        Kalman kf{b.mean, b.covariance};
        for (int k = 0; k < 50; ++k) {
            truth.head(d) += dt * truth.tail(d);
            truth.tail(d) += std::sqrt(params.q * dt) * Eigen::VectorXd::NullaryExpr(d, [&] { return g(rng); });
            const Eigen::VectorXd z = noisy();
            b = update(predict(b, params, dt), params, z).belief;
            kf.predict(dt, params.q);
            kf.update(z, params.r_obs);
            worst = std::max(worst, (b.mean - kf.x).norm() / kf.x.norm());
            worst = std::max(worst, (b.covariance - kf.P).norm() / kf.P.norm());
        }
    }

    // Light platform motion as the simulator renders it, deployed filter
    // settings, 5-tick horizon.
    ScenarioConfig sc;
    sc.motion = light_motion();
    const PipelineConfig deployed;
    TargetTracker tracker(deployed.ukf, sc.dt);
    std::mt19937_64 rng(44);
    std::normal_distribution<double> noise(0.0, 0.002);
    const int horizon = 5;
    const int n = 1500;
    double se_ukf = 0.0;
    double se_hold = 0.0;
    int count = 0;
    for (int k = 0; k + horizon < n; ++k) {
        const Eigen::VectorXd truth = target_displacement(sc, 2, k);
        const Eigen::VectorXd z = truth + Eigen::Vector2d(noise(rng), noise(rng));
        tracker.observe(z);
        if (k < 50) {
            continue; // filter warm-up
        }
        const Eigen::VectorXd ahead = target_displacement(sc, 2, k + horizon);
        se_ukf += (tracker.forecast(horizon * sc.dt).position - ahead).squaredNorm();
        se_hold += (z - ahead).squaredNorm();
        ++count;
    }
    const double rms_ukf = std::sqrt(se_ukf / count);
    const double rms_hold = std::sqrt(se_hold / count);
    return {worst < 1e-9 && rms_ukf < rms_hold,
            fmt("UKF vs KF max rel diff %.2e over 10x50 steps; light-regime forecast RMS %.2f mm vs hold %.2f mm",
                worst, 1000 * rms_ukf, 1000 * rms_hold)};
}

double gauss(double x, double m, double v)
{
    return std::exp(-0.5 * (x - m) * (x - m) / v) / std::sqrt(2.0 * std::numbers::pi * v);
}

double brute_force_likelihood(const HmmModel& m, const std::vector<double>& obs)
{
    const auto s = static_cast<int>(m.states());
    const auto len = obs.size();
    int paths = 1;
    for (std::size_t i = 0; i < len; ++i) {
        paths *= s;
    }
    double total = 0.0;
    for (int code = 0; code < paths; ++code) {
        int c = code;
        int prev = -1;
        double p = 1.0;
        for (std::size_t t = 0; t < len; ++t) {
            const int st = c % s;
            c /= s;
            p *= (prev < 0 ? m.initial(st) : m.transition(prev, st)) * gauss(obs[t], m.means(st), m.variances(st));
            prev = st;
        }
        total += p;
    }
    return total;
}

HmmModel random_hmm(std::mt19937_64& rng, Eigen::Index s)
{
    std::uniform_real_distribution<double> u(0.05, 1.0);
    HmmModel m;
    m.transition = Eigen::MatrixXd::NullaryExpr(s, s, [&] { return u(rng); });
    for (Eigen::Index i = 0; i < s; ++i) {
        m.transition.row(i) /= m.transition.row(i).sum();
    }
    m.initial = Eigen::VectorXd::NullaryExpr(s, [&] { return u(rng); });
    m.initial /= m.initial.sum();
    m.means = Eigen::VectorXd::NullaryExpr(s, [&] { return 3.0 * u(rng); });
    m.variances = Eigen::VectorXd::NullaryExpr(s, [&] { return 0.5 * u(rng) + 0.1; });
    return m;
}

// 5. Forward likelihood vs path enumeration; EM monotonicity.
Verdict criterion_5()
{
    std::mt19937_64 rng(505);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    double worst = 0.0;
    int cases = 0;
    for (Eigen::Index s = 1; s <= 3; ++s) {
        for (std::size_t len = 1; len <= 8; ++len) {
            for (int rep = 0; rep < 5; ++rep) {
                const auto m = random_hmm(rng, s);
                std::vector<double> obs(len);
                for (auto& x : obs) {
                    x = u(rng);
                }
                const double want = std::log(brute_force_likelihood(m, obs));
                const double got = forward_filter(m, obs).log_likelihood;
                worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
                ++cases;
            }
        }
    }

    double worst_drop = 0.0;
    int corpora = 0;
    auto check = [&](const BaumWelchResult& r) {
        for (std::size_t i = 1; i < r.log_likelihoods.size(); ++i) {
            worst_drop = std::max(worst_drop, r.log_likelihoods[i - 1] - r.log_likelihoods[i]);
        }
        ++corpora;
    };
    check(train_safety_hmm(generate_corpus({})).fit);
    for (std::uint64_t seed = 2; seed <= 4; ++seed) {
        CorpusConfig cc;
        cc.seed = seed;
        cc.sequences = 10;
        const auto corpus = generate_corpus(cc);
        check(train_safety_hmm(corpus).fit);
        check(baum_welch(corpus.speeds, 3));
    }
    for (int rep = 0; rep < 4; ++rep) {
        const auto m = random_hmm(rng, 2 + rep % 2);
        std::vector<std::vector<double>> seqs(5, std::vector<double>(60));
        for (auto& seq : seqs) {
            for (auto& x : seq) {
                x = u(rng);
            }
        }
        check(baum_welch_from(m, seqs));
    }
    return {worst < 1e-12 && worst_drop <= 1e-9,
            fmt("forward vs enumeration max rel err %.2e over %d sequences; largest EM drop %.2e over %d corpora",
                worst, cases, worst_drop, corpora)};
}

std::vector<fs::path> bundled_scenarios()
{
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(kRoot / "scenarios")) {
        if (e.path().extension() == ".json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

// 6. FSM safety over every bundled scenario and both methods.
Verdict criterion_6(const HmmModel& hmm)
{
    int episodes = 0;
    int reverse_advances = 0;
    int big_steps = 0;
    int calm = 0;
    int calm_tracking = 0;
    std::string bad;
    for (const auto& file : bundled_scenarios()) {
        const auto sc = load_scenario(file);
        for (auto method : {Method::Elte, Method::Dmp}) {
            const auto rep = run_episode(sc, method, hmm);
            ++episodes;
            if (rep.failed) {
                bad += " " + sc.id + "/" + to_string(method) + " failed";
                continue;
            }
            Eigen::Index prev = 0;
            for (const auto& r : rep.records) {
                reverse_advances += r.safety == SafetyState::Reverse && r.cursor > prev;
                big_steps += std::abs(r.cursor - prev) > 1;
                prev = r.cursor;
            }
            if (!sc.burst) {
                ++calm;
                if (rep.records.back().phase == ExecPhase::TargetTracking) {
                    ++calm_tracking;
                } else {
                    bad += " " + sc.id + "/" + to_string(method) + " ended in " + to_string(rep.records.back().phase);
                }
            }
        }
    }
    const bool ok = bad.empty() && reverse_advances == 0 && big_steps == 0 && calm_tracking == calm;
    return {ok, fmt("%d episodes: %d advances on Reverse ticks, %d cursor jumps > 1, %d/%d calm episodes tracking%s",
                    episodes, reverse_advances, big_steps, calm_tracking, calm, bad.c_str())};
}

// 7. Square corner with a mid-run endpoint shift.
Verdict criterion_7(const HmmModel& hmm)
{
    const auto t0 = Clock::now();
    const auto sc = load_scenario(kRoot / "scenarios" / "square_corner.json");
    const auto demo = load_demo(sc);
    const auto e = run_episode(sc, Method::Elte, hmm);
    const auto d = run_episode(sc, Method::Dmp, hmm);
    if (e.failed || d.failed || e.approach.rows() != demo.size() || d.approach.rows() != demo.size()) {
        return {false, "episode failed or never reached tracking: " + e.error + d.error};
    }
    const double me = corner_metric(demo, Trajectory(e.approach, demo.dt()));
    const double md = corner_metric(demo, Trajectory(d.approach, demo.dt()));
    const double ms = ms_since(t0);
    return {me < md && ms < 5000.0, fmt("corner metric ELTE %.2f mm vs DMP %.2f mm in %.0f ms", 1000 * me, 1000 * md, ms)};
}

// 8. Three regimes x two methods x three seeds.
Verdict criterion_8(const HmmModel& hmm)
{
    const auto t0 = Clock::now();
    const auto plan = load_sweep(kRoot / "sweeps" / "table2.json");
    const auto result = run_sweep(plan, hmm, 0);
    const double ms = ms_since(t0);
    auto mean = [&](const std::string& regime, Method m) {
        for (const auto& r : result.rows) {
            if (r.regime == regime && r.method == m) {
                return r.mean_mm;
            }
        }
        return std::numeric_limits<double>::quiet_NaN();
    };
    bool ok = result.rows.size() == 6 && result.episodes.size() == 18 && ms < 60000.0;
    std::string detail;
    for (const char* regime : {"none", "light", "heavy"}) {
        const double e = mean(regime, Method::Elte);
        const double d = mean(regime, Method::Dmp);
        ok = ok && e <= d;
        detail += fmt("%s %.2f/%.2f mm, ", regime, e, d);
    }
    for (auto m : {Method::Elte, Method::Dmp}) {
        ok = ok && mean("none", m) <= mean("light", m) && mean("light", m) <= mean("heavy", m);
    }
    for (const auto& ep : result.episodes) {
        ok = ok && !ep.failed;
    }
    return {ok, detail + fmt("ELTE/DMP; %zu episodes in %.0f ms", result.episodes.size(), ms)};
}

std::uint64_t fnv1a(const std::string& bytes)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h = (h ^ c) * 1099511628211ull;
    }
    return h;
}

std::string report_bytes(const EpisodeReport& r)
{
    std::ostringstream out;
    write_ticks_csv(out, r.records);
    out << summary_header() << '\n' << summary_line(r.summary) << '\n';
    return out.str();
}

// 9. Same seed, same bytes.
Verdict criterion_9(const HmmModel& hmm)
{
    int compared = 0;
    int mismatched = 0;
    for (const auto& file : bundled_scenarios()) {
        auto sc = load_scenario(file);
        sc.seed = 7;
        for (auto method : {Method::Elte, Method::Dmp}) {
            const auto a = fnv1a(report_bytes(run_episode(sc, method, hmm)));
            const auto b = fnv1a(report_bytes(run_episode(sc, method, hmm)));
            mismatched += a != b;
            ++compared;
        }
    }
    const auto plan = load_sweep(kRoot / "sweeps" / "table2.json");
    auto table = [&](int jobs) {
        std::string s;
        for (const auto& r : run_sweep(plan, hmm, jobs).rows) {
            s += sweep_line(r) + '\n';
        }
        return fnv1a(s);
    };
    const bool sweep_same = table(1) == table(4);
    return {mismatched == 0 && sweep_same,
            fmt("%d/%d episode reports hash-identical; sweep table %s across 1 and 4 jobs", compared - mismatched,
                compared, sweep_same ? "identical" : "DIFFERS")};
}

} // namespace

int main()
{
    const std::function<Verdict()> offline[] = {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5};
    int id = 1;
    for (const auto& c : offline) {
        try {
            report(id, c());
        } catch (const std::exception& e) {
            report(id, {false, std::string("threw: ") + e.what()});
        }
        ++id;
    }
    HmmModel hmm;
    try {
        hmm = read_hmm(kRoot / "models" / "hmm_default.txt");
    } catch (const std::exception& e) {
        for (; id <= 9; ++id) {
            report(id, {false, std::string("bundled HMM unavailable: ") + e.what()});
        }
        return 1;
    }
    const std::function<Verdict(const HmmModel&)> online[] = {criterion_6, criterion_7, criterion_8, criterion_9};
    for (const auto& c : online) {
        try {
            report(id, c(hmm));
        } catch (const std::exception& e) {
            report(id, {false, std::string("threw: ") + e.what()});
        }
        ++id;
    }
    return failures == 0 ? 0 : 1;
}
