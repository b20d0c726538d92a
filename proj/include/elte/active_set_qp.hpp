#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace elte {

/// Thrown by the QP when the inequality set has an empty intersection.
/// `conflicting` lists the rows that were active when infeasibility was proven.
class QpInfeasible : public std::runtime_error {
public:
    QpInfeasible(const std::string& what, std::vector<Eigen::Index> conflicting)
        : std::runtime_error(what), conflicting(std::move(conflicting))
    {
    }
    std::vector<Eigen::Index> conflicting;
};

struct QpSolution {
    Eigen::VectorXd x;
    std::vector<Eigen::Index> active; // rows of the inequality set that hold with equality
    Eigen::VectorXd multipliers;      // one per active row, all >= 0
    int iterations = 0;
};

/// Strictly convex dense QP
///
///     minimize   1/2 x' G x + a' x
///     subject to N' x >= b          (one column of N per inequality)
///
/// solved with the Goldfarb-Idnani dual active-set method. The dual method
/// starts at the unconstrained minimizer, so no feasible starting point is
/// needed and an empty feasible set is detected rather than looped on.
/// G must be symmetric positive definite. Ties between equally violated
/// rows go to the lowest row index.
QpSolution solve_dual_active_set(const Eigen::MatrixXd& G, const Eigen::VectorXd& a, const Eigen::MatrixXd& N,
                                 const Eigen::VectorXd& b);

} // namespace elte
