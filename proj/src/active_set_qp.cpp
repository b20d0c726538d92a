#include "elte/active_set_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace elte {

namespace {

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& N, const std::vector<Eigen::Index>& cols)
{
    Eigen::MatrixXd out(N.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) = N.col(cols[i]);
    }
    return out;
}

} // namespace

QpSolution solve_dual_active_set(const Eigen::MatrixXd& G, const Eigen::VectorXd& a, const Eigen::MatrixXd& N,
                                 const Eigen::VectorXd& b)
{
    const Eigen::Index n = G.rows();
    const Eigen::Index m = N.cols();
    if (G.cols() != n || a.size() != n || (m > 0 && N.rows() != n) || b.size() != m) {
        throw std::invalid_argument("solve_dual_active_set: inconsistent dimensions");
    }

    const Eigen::LLT<Eigen::MatrixXd> chol(G);
    if (chol.info() != Eigen::Success) {
        throw std::invalid_argument("solve_dual_active_set: Hessian is not positive definite");
    }
    const Eigen::MatrixXd g_inv = chol.solve(Eigen::MatrixXd::Identity(n, n));

    QpSolution sol;
    sol.x = -(g_inv * a);
    std::vector<Eigen::Index> active;
    std::vector<double> u;

    auto violation_tol = [&](Eigen::Index j) {
        return 1e-12 * std::max({1.0, std::abs(b(j)), N.col(j).norm() * sol.x.norm()});
    };

    const int max_iter = static_cast<int>(10 * (m + n) + 100);
    int iter = 0;
    for (;;) {
        // Most violated inactive row; ties to the lowest index.
        Eigen::Index p = -1;
        double worst = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (std::find(active.begin(), active.end(), j) != active.end()) {
                continue;
            }
            const double s = N.col(j).dot(sol.x) - b(j);
            if (s < -violation_tol(j) && s < worst) {
                worst = s;
                p = j;
            }
        }
        if (p < 0) {
            break;
        }

        double u_p = 0.0;
        for (;;) {
            if (++iter > max_iter) {
                throw std::runtime_error("solve_dual_active_set: iteration limit reached");
            }
            const Eigen::VectorXd np = N.col(p);
            Eigen::VectorXd r;
            Eigen::VectorXd z;
            if (active.empty()) {
                z = g_inv * np;
            } else {
                const Eigen::MatrixXd na = gather_columns(N, active);
                const Eigen::MatrixXd gna = g_inv * na;
                const Eigen::MatrixXd m_act = na.transpose() * gna;
                r = m_act.ldlt().solve(gna.transpose() * np);
                z = g_inv * (np - na * r);
            }

            // Largest dual step keeping active multipliers non-negative.
            double t1 = std::numeric_limits<double>::infinity();
            std::size_t k = active.size();
            for (std::size_t i = 0; i < active.size(); ++i) {
                const double ri = r(static_cast<Eigen::Index>(i));
                if (ri > 1e-14) {
                    const double ratio = u[i] / ri;
                    if (ratio < t1) {
                        t1 = ratio;
                        k = i;
                    }
                }
            }

            // Full primal step that makes row p hold with equality.
            const double zn = z.dot(np);
            const double scale = np.dot(g_inv * np);
            double t2 = std::numeric_limits<double>::infinity();
            if (zn > 1e-12 * scale) {
                t2 = -(np.dot(sol.x) - b(p)) / zn;
            }

            const double t = std::min(t1, t2);
            if (!std::isfinite(t)) {
                std::vector<Eigen::Index> conflict = active;
                conflict.push_back(p);
                std::sort(conflict.begin(), conflict.end());
                throw QpInfeasible("solve_dual_active_set: inequality set is infeasible", std::move(conflict));
            }

            if (!std::isfinite(t2)) {
                // Row p is dependent on the active rows: pure dual step.
                for (std::size_t i = 0; i < active.size(); ++i) {
                    u[i] -= t * r(static_cast<Eigen::Index>(i));
                }
                u_p += t;
                active.erase(active.begin() + static_cast<std::ptrdiff_t>(k));
                u.erase(u.begin() + static_cast<std::ptrdiff_t>(k));
                continue;
            }

            sol.x += t * z;
            for (std::size_t i = 0; i < active.size(); ++i) {
                u[i] -= t * r(static_cast<Eigen::Index>(i));
            }
            u_p += t;
            if (t == t2) {
                active.push_back(p);
                u.push_back(u_p);
                break;
            }
            active.erase(active.begin() + static_cast<std::ptrdiff_t>(k));
            u.erase(u.begin() + static_cast<std::ptrdiff_t>(k));
        }
    }

    // Polish: re-solve the equality-constrained problem on the final active set.
    if (!active.empty()) {
        const Eigen::MatrixXd na = gather_columns(N, active);
        const Eigen::MatrixXd gna = g_inv * na;
        Eigen::VectorXd b_act(static_cast<Eigen::Index>(active.size()));
        for (std::size_t i = 0; i < active.size(); ++i) {
            b_act(static_cast<Eigen::Index>(i)) = b(active[i]);
        }
        const Eigen::VectorXd lambda = (na.transpose() * gna).ldlt().solve(b_act + gna.transpose() * a);
        sol.x = g_inv * (na * lambda - a);
        sol.multipliers = lambda;
    } else {
        sol.x = -(g_inv * a);
        sol.multipliers.resize(0);
    }
    sol.active = std::move(active);
    sol.iterations = iter;
    return sol;
}

} // namespace elte
