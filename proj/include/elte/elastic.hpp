#pragma once

#include "elte/trajectory.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace elte {

/// Stretching (first-difference) and bending (second-difference) weights.
struct EnergyWeights {
    double stretch = 0.001;
    double bend = 0.001;
};

enum class ConstraintKind { Attract, Repel };

/// L1 ball around `center` bound to waypoint `index`. Attract keeps the
/// reproduced point inside the ball, Repel keeps it outside. A zero-radius
/// Attract is an exact pin.
struct PointConstraint {
    Eigen::Index index = 0;
    Eigen::VectorXd center;
    double radius = 0.0;
    ConstraintKind kind = ConstraintKind::Attract;

    static PointConstraint attract(Eigen::Index index, Eigen::VectorXd center, double radius = 0.0)
    {
        return {index, std::move(center), radius, ConstraintKind::Attract};
    }
    static PointConstraint repel(Eigen::Index index, Eigen::VectorXd center, double radius)
    {
        return {index, std::move(center), radius, ConstraintKind::Repel};
    }
};

/// Everything the solver needs. `prefix` holds already-executed waypoints
/// 0..t (t+1 rows); it is empty for an offline solve. Prefix rows are held
/// fixed and constraints on prefix nodes are ignored.
struct ElasticProblem {
    Trajectory demonstration;
    EnergyWeights weights;
    std::vector<PointConstraint> constraints;
    Eigen::MatrixXd prefix;
    Eigen::Index max_nodes = kDefaultMaxNodes;
};

/// Quadratic form of the shape energy: y'Ay - 2 tr(b'y) + const, solved
/// column-by-column (one column per spatial axis).
struct QuadraticForm {
    Eigen::MatrixXd system; // A = L'L + wE E'E + wR R'R
    Eigen::MatrixXd rhs;    // b = L'L zeta
};

class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& what, std::vector<std::size_t> constraint_ids)
        : std::runtime_error(what), constraint_ids(std::move(constraint_ids))
    {
    }
    /// Positions in ElasticProblem::constraints that cannot hold together.
    std::vector<std::size_t> constraint_ids;
};

class UnderdeterminedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

QuadraticForm assemble_objective(const ElasticProblem& problem);

/// Shape energy U_Y + U_E + U_R of a candidate reproduction.
double energy(const ElasticProblem& problem, const Eigen::MatrixXd& y);

/// Full solve with all constraints (and prefix, when present).
Trajectory reproduce(const ElasticProblem& problem);

/// Re-solves nodes t+1..T-1 with the executed prefix 0..t (problem.prefix)
/// held fixed, binding the final node to the L1 ball of `radius` around
/// `endpoint_target`. Existing Attract constraints on the final node are
/// replaced; all other future constraints stay active.
Trajectory adapt_suffix(const ElasticProblem& problem, const Eigen::VectorXd& endpoint_target, double radius);

/// Linear shrink from `initial_radius` at progress 0 to `final_radius` at 1.
double shrink_radius_schedule(double initial_radius, double final_radius, double progress);

} // namespace elte
