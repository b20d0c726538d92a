#include "elte/dmp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace elte {

Eigen::VectorXd DmpModel::forcing(double s) const
{
    const Eigen::ArrayXd psi = (-widths.array() * (s - centers.array()).square()).exp();
    const double total = psi.sum();
    if (total < 1e-300) {
        return Eigen::VectorXd::Zero(dims());
    }
    return weights.transpose() * (psi * s / total).matrix();
}

DmpModel dmp_train(const Trajectory& demo, const DmpOptions& options)
{
    if (options.n_basis < 2) {
        throw std::invalid_argument("dmp_train: n_basis must be at least 2");
    }
    if (!(options.stiffness > 0.0) || !(options.alpha > 0.0)) {
        throw std::invalid_argument("dmp_train: stiffness and alpha must be positive");
    }
    const Eigen::Index n = demo.size();
    const Eigen::Index d = demo.dims();
    if (n < 3) {
        throw DimensionError("dmp_train: demonstration needs at least 3 points");
    }
    if (demo.path_length() <= 0.0) {
        throw std::invalid_argument("dmp_train: demonstration does not move");
    }

    DmpModel m;
    m.alpha = options.alpha;
    m.stiffness = options.stiffness;
    m.damping = 2.0 * std::sqrt(options.stiffness);
    m.start = demo.front();
    m.goal = demo.back();
    m.duration = demo.duration();

    const Eigen::Index nb = options.n_basis;
    m.centers.resize(nb);
    for (Eigen::Index i = 0; i < nb; ++i) {
        m.centers(i) = std::exp(-m.alpha * static_cast<double>(i) / static_cast<double>(nb - 1));
    }
    m.widths.resize(nb);
    for (Eigen::Index i = 0; i + 1 < nb; ++i) {
        const double gap = m.centers(i) - m.centers(i + 1);
        m.widths(i) = 1.0 / (gap * gap);
    }
    m.widths(nb - 1) = m.widths(nb - 2);

    // Targets are taken from the same semi-implicit Euler scheme the
    // integrator uses, in normalized time h = dt / tau, so a perfect forcing
    // fit replays the demonstration exactly.
    const double h = demo.dt() / m.duration;
    if (m.alpha * h >= 1.0) {
        throw std::invalid_argument("dmp_train: phase decay too fast for the sample rate");
    }
    const auto& y = demo.points();
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, d);
    for (Eigen::Index i = 1; i < n; ++i) {
        v.row(i) = (y.row(i) - y.row(i - 1)) / h;
    }
    Eigen::VectorXd s(n - 1);
    s(0) = 1.0;
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        s(i) = s(i - 1) * (1.0 - m.alpha * h);
    }
    const double k = m.stiffness;
    Eigen::MatrixXd f_target(n - 1, d);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const Eigen::RowVectorXd accel = (v.row(i + 1) - v.row(i)) / h;
        f_target.row(i) = (accel - k * (m.goal.transpose() - y.row(i)) + m.damping * v.row(i)) / k
                          + (m.goal - m.start).transpose() * s(i);
    }

    m.weights.resize(nb, d);
    for (Eigen::Index b = 0; b < nb; ++b) {
        const Eigen::ArrayXd psi = (-m.widths(b) * (s.array() - m.centers(b)).square()).exp();
        const double den = (psi * s.array().square()).sum();
        for (Eigen::Index a = 0; a < d; ++a) {
            const double num = (psi * s.array() * f_target.col(a).array()).sum();
            m.weights(b, a) = den > 1e-300 ? num / den : 0.0;
        }
    }
    return m;
}

DmpIntegrator::DmpIntegrator(const DmpModel& model, Eigen::VectorXd start, double dt)
    : model_(model), dt_(dt), x0_(start), x_(std::move(start)), v_(Eigen::VectorXd::Zero(model.dims()))
{
    if (!(dt > 0.0) || dt * model.alpha >= model.duration) {
        throw std::invalid_argument("dmp: dt must be positive and well below the duration");
    }
    if (x_.size() != model.dims()) {
        throw DimensionError("dmp: start has the wrong dimension");
    }
}

const Eigen::VectorXd& DmpIntegrator::step(const Eigen::VectorXd& goal)
{
    if (goal.size() != model_.dims()) {
        throw DimensionError("dmp: goal has the wrong dimension");
    }
    if (!goal.allFinite()) {
        throw std::invalid_argument("dmp: goal is not finite");
    }
    const auto& m = model_;
    const double tau = m.duration;
    const double k = m.stiffness;
    const Eigen::VectorXd accel =
        k * (goal - x_) - m.damping * v_ - k * (goal - x0_) * s_ + k * m.forcing(s_);
    v_ += accel * (dt_ / tau);
    x_ += v_ * (dt_ / tau);
    s_ -= m.alpha * s_ * (dt_ / tau);
    return x_;
}

Trajectory dmp_rollout(const DmpModel& model, const Eigen::VectorXd& start,
                       const std::vector<GoalUpdate>& goal_stream, double dt, Eigen::Index steps)
{
    if (goal_stream.empty() || goal_stream.front().tick != 0) {
        throw std::invalid_argument("dmp_rollout: goal stream must begin at tick 0");
    }
    if (steps < 1) {
        throw std::invalid_argument("dmp_rollout: need at least one step");
    }
    for (std::size_t i = 1; i < goal_stream.size(); ++i) {
        if (goal_stream[i].tick < goal_stream[i - 1].tick) {
            throw std::invalid_argument("dmp_rollout: goal stream is not sorted by tick");
        }
    }
    for (const auto& u : goal_stream) {
        if (!u.goal.allFinite()) {
            throw std::invalid_argument("dmp_rollout: goal at tick " + std::to_string(u.tick) + " is not finite");
        }
    }
    DmpIntegrator integ(model, start, dt);
    Eigen::MatrixXd pts(steps + 1, model.dims());
    pts.row(0) = start.transpose();
    std::size_t next = 0;
    Eigen::VectorXd goal = goal_stream.front().goal;
    for (Eigen::Index c = 0; c < steps; ++c) {
        while (next < goal_stream.size() && goal_stream[next].tick <= c) {
            goal = goal_stream[next].goal;
            ++next;
        }
        pts.row(c + 1) = integ.step(goal).transpose();
    }
    return Trajectory(pts, dt);
}

} // namespace elte
