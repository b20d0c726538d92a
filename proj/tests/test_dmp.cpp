#include "elte/dmp.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace elte;

namespace {

double min_jerk(double t)
{
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

Trajectory min_jerk_curve(Eigen::Index n, double bow = 0.3)
{
    Eigen::MatrixXd p(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = min_jerk(static_cast<double>(i) / static_cast<double>(n - 1));
        p.row(i) << s, bow * std::sin(3.0 * s) + 0.2 * s;
    }
    return Trajectory(p, 0.01);
}

double rms(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    return std::sqrt((a - b).rowwise().squaredNorm().mean());
}

} // namespace

TEST(DmpTrain, GainsAreCriticallyDamped)
{
    DmpOptions opt;
    opt.stiffness = 49.0;
    const auto m = dmp_train(min_jerk_curve(50), opt);
    EXPECT_DOUBLE_EQ(m.damping, 14.0);
    EXPECT_EQ(m.n_basis(), 30);
    EXPECT_EQ(m.dims(), 2);
}

TEST(DmpTrain, UnforcedRolloutIsRecoveredWithNearZeroForcing)
{
    // Demo produced by the bare transformation system: a straight line that
    // the spring-damper already follows on its own. Stiff enough to settle on
    // the goal within the duration, so the learned goal is the true one.
    DmpModel bare;
    bare.stiffness = 400.0;
    bare.damping = 40.0;
    bare.alpha = 15.0;
    bare.weights = Eigen::MatrixXd::Zero(5, 2);
    bare.centers = Eigen::VectorXd::LinSpaced(5, 1.0, 0.02);
    bare.widths = Eigen::VectorXd::Constant(5, 10.0);
    bare.start = Eigen::Vector2d(0.0, 0.0);
    bare.goal = Eigen::Vector2d(1.0, 0.5);
    bare.duration = 1.0;
    const auto demo = dmp_rollout(bare, bare.start, {{0, bare.goal}}, 0.01, 100);

    DmpOptions opt;
    opt.n_basis = 10;
    opt.stiffness = 400.0;
    opt.alpha = 15.0;
    const auto m = dmp_train(demo, opt);
    double worst = 0.0;
    for (double ph = 1.0; ph > 1e-6; ph *= 0.9) {
        worst = std::max(worst, m.forcing(ph).norm());
    }
    EXPECT_LT(worst, 1e-4 * demo.path_length());
    const auto r = dmp_rollout(m, demo.front(), {{0, demo.back()}}, demo.dt(), demo.size() - 1);
    EXPECT_LT(rms(r.points(), demo.points()), 1e-3 * demo.path_length());
    // Straight line: every sample is collinear, so is the rollout.
    const Eigen::Vector2d dir = (demo.back() - demo.front()).normalized();
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        const Eigen::Vector2d p = r.point(i) - demo.front();
        EXPECT_LT(std::abs(dir.x() * p.y() - dir.y() * p.x()), 1e-9);
    }
}

TEST(DmpTrain, MoreBasesFitAtLeastAsWell)
{
    const auto demo = min_jerk_curve(150);
    auto fit = [&](Eigen::Index nb) {
        DmpOptions opt;
        opt.n_basis = nb;
        const auto m = dmp_train(demo, opt);
        return rms(dmp_rollout(m, demo.front(), {{0, demo.back()}}, demo.dt(), demo.size() - 1).points(),
                   demo.points());
    };
    EXPECT_LE(fit(20), fit(5));
    EXPECT_LE(fit(30), fit(10));
}

TEST(DmpTrain, RejectsDegenerateInput)
{
    EXPECT_THROW(dmp_train(Trajectory(Eigen::MatrixXd::Ones(10, 2), 0.1)), std::invalid_argument);
    DmpOptions opt;
    opt.n_basis = 1;
    EXPECT_THROW(dmp_train(min_jerk_curve(20), opt), std::invalid_argument);
    EXPECT_THROW(dmp_train(Trajectory(Eigen::MatrixXd::Random(2, 2), 0.1)), DimensionError);
}

TEST(DmpRollout, TrainedGoalReproducesDemo)
{
    const auto demo = min_jerk_curve(200);
    const auto m = dmp_train(demo);
    const auto r = dmp_rollout(m, demo.front(), {{0, demo.back()}}, demo.dt(), demo.size() - 1);
    EXPECT_EQ(r.size(), demo.size());
    EXPECT_LT(rms(r.points(), demo.points()), 0.01 * demo.path_length());
    EXPECT_LT((r.back() - demo.back()).norm(), 0.01 * demo.path_length());
}

TEST(DmpRollout, ShiftedGoalConvergesAsIntegrationContinues)
{
    const auto demo = min_jerk_curve(100);
    const auto m = dmp_train(demo);
    const Eigen::Vector2d goal = demo.back() + Eigen::Vector2d(0.3, -0.2);
    const Eigen::Index n = demo.size() - 1;
    const auto r = dmp_rollout(m, demo.front(), {{0, goal}}, demo.dt(), 4 * n);
    double previous = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 1; k <= 4; ++k) {
        const double err = (r.point(k * n) - goal).norm();
        EXPECT_LT(err, previous);
        previous = err;
    }
    EXPECT_LT(previous, 0.01 * demo.path_length());
}

TEST(DmpRollout, GoalChangeFirstAffectsTheNextPoint)
{
    const auto demo = min_jerk_curve(80);
    const auto m = dmp_train(demo);
    const Eigen::Vector2d shifted = demo.back() + Eigen::Vector2d(0.0, 0.4);
    const auto plain = dmp_rollout(m, demo.front(), {{0, demo.back()}}, demo.dt(), 79);
    const auto moved = dmp_rollout(m, demo.front(), {{0, demo.back()}, {40, shifted}}, demo.dt(), 79);
    EXPECT_TRUE(plain.points().topRows(41) == moved.points().topRows(41));
    EXPECT_GT((plain.point(41) - moved.point(41)).norm(), 0.0);
}

TEST(DmpRollout, SpatialScalingCommutes)
{
    const auto demo = min_jerk_curve(120);
    const double s = 3.5;
    const Trajectory scaled(demo.points() * s, demo.dt());
    const auto m = dmp_train(demo);
    const auto ms = dmp_train(scaled);
    const auto r = dmp_rollout(m, demo.front(), {{0, demo.back()}}, demo.dt(), 119);
    const auto rs = dmp_rollout(ms, scaled.front(), {{0, scaled.back()}}, demo.dt(), 119);
    EXPECT_LT((rs.points() - s * r.points()).cwiseAbs().maxCoeff(), 1e-9 * s);
    EXPECT_LT(rms(rs.points(), scaled.points()), 0.01 * scaled.path_length());
}

TEST(DmpRollout, RejectsBadGoalStreams)
{
    const auto m = dmp_train(min_jerk_curve(30));
    const Eigen::Vector2d x0(0, 0);
    EXPECT_THROW(dmp_rollout(m, x0, {}, 0.01, 10), std::invalid_argument);
    EXPECT_THROW(dmp_rollout(m, x0, {{2, x0}}, 0.01, 10), std::invalid_argument);
    EXPECT_THROW(dmp_rollout(m, x0, {{0, Eigen::Vector2d(std::nan(""), 0)}}, 0.01, 10), std::invalid_argument);
    EXPECT_THROW(dmp_rollout(m, x0, {{0, x0}, {5, x0}, {3, x0}}, 0.01, 10), std::invalid_argument);
}
