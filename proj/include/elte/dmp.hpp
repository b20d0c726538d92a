#pragma once

#include "elte/trajectory.hpp"

#include <Eigen/Dense>

#include <vector>

namespace elte {

/// Discrete movement primitive in the goal-shift-friendly form
///
///     tau v' = K (g - x) - D v - K (g - x0) s + K f(s)
///     tau x' = v,   tau s' = -alpha s,   D = 2 sqrt(K)
///
/// with one forcing term per axis over Gaussian bases in phase s.
struct DmpModel {
    Eigen::MatrixXd weights;  // n_basis x d
    Eigen::VectorXd centers;  // in phase
    Eigen::VectorXd widths;
    double alpha = 4.0;       // canonical decay
    double stiffness = 25.0;
    double damping = 10.0;
    Eigen::VectorXd start;
    Eigen::VectorXd goal;
    double duration = 0.0;    // tau, seconds

    Eigen::Index n_basis() const { return weights.rows(); }
    Eigen::Index dims() const { return weights.cols(); }
    /// Forcing term f(s), one entry per axis.
    Eigen::VectorXd forcing(double s) const;
};

struct DmpOptions {
    Eigen::Index n_basis = 30;
    double stiffness = 25.0;
    double alpha = 4.0;
};

/// Locally weighted regression of the forcing term from one demonstration.
DmpModel dmp_train(const Trajectory& demo, const DmpOptions& options = {});

/// Goal that becomes active at `tick` and stays until the next update.
struct GoalUpdate {
    Eigen::Index tick = 0;
    Eigen::VectorXd goal;
};

/// Integrator state, advanced one tick at a time. The goal passed to step()
/// is used for that tick's integration, so a change arriving at tick c first
/// shows up in the point emitted for c + 1.
class DmpIntegrator {
public:
    DmpIntegrator(const DmpModel& model, Eigen::VectorXd start, double dt);

    const Eigen::VectorXd& position() const { return x_; }
    const Eigen::VectorXd& velocity() const { return v_; }
    double phase() const { return s_; }

    /// Semi-implicit Euler step; returns the new position.
    const Eigen::VectorXd& step(const Eigen::VectorXd& goal);

private:
    DmpModel model_;
    double dt_;
    Eigen::VectorXd x0_;
    Eigen::VectorXd x_;
    Eigen::VectorXd v_;
    double s_ = 1.0;
};

/// Rolls out `steps` ticks (steps + 1 points, the first being `start`).
/// goal_stream must start at tick 0 and be sorted by tick.
Trajectory dmp_rollout(const DmpModel& model, const Eigen::VectorXd& start,
                       const std::vector<GoalUpdate>& goal_stream, double dt, Eigen::Index steps);

} // namespace elte
