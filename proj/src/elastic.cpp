#include "elte/elastic.hpp"

#include "elte/active_set_qp.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace elte {

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr std::size_t kNoSource = std::numeric_limits<std::size_t>::max();
constexpr int kMaxRelinearizations = 5;

// Same stencils as build_operators, kept sparse so assembly stays O(T).
SparseMatrix sparse_laplacian(Eigen::Index n)
{
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(3 * n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double degree = 0.0;
        if (i > 0) {
            trips.emplace_back(i, i - 1, -1.0);
            degree += 1.0;
        }
        if (i + 1 < n) {
            trips.emplace_back(i, i + 1, -1.0);
            degree += 1.0;
        }
        trips.emplace_back(i, i, degree);
    }
    SparseMatrix m(n, n);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

SparseMatrix sparse_stencil(Eigen::Index n, std::initializer_list<double> taps)
{
    const auto width = static_cast<Eigen::Index>(taps.size());
    const Eigen::Index rows = n - width + 1;
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(rows * width));
    for (Eigen::Index i = 0; i < rows; ++i) {
        Eigen::Index j = 0;
        for (double tap : taps) {
            trips.emplace_back(i, i + j, tap);
            ++j;
        }
    }
    SparseMatrix m(rows, n);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

void check_weights(const EnergyWeights& w)
{
    if (!std::isfinite(w.stretch) || !std::isfinite(w.bend) || w.stretch < 0.0 || w.bend < 0.0) {
        throw std::invalid_argument("energy weights must be finite and non-negative");
    }
}

struct Facet {
    Eigen::Index node;
    Eigen::VectorXd normal; // normal' y_node >= rhs
    double rhs;
    std::size_t source;
};

// Cross-polytope {y : |y - p|_1 <= r} as 2^d half-spaces.
void append_ball_facets(std::vector<Facet>& out, const PointConstraint& c, std::size_t source)
{
    const auto d = c.center.size();
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
        Eigen::VectorXd s(d);
        for (Eigen::Index k = 0; k < d; ++k) {
            s(k) = (mask >> k) & 1u ? -1.0 : 1.0;
        }
        out.push_back({c.index, -s, -c.radius - s.dot(c.center), source});
    }
}

// Supporting half-space of the repel ball in the orthant of `at`.
Facet repel_cut(const PointConstraint& c, const Eigen::VectorXd& at, std::size_t source)
{
    Eigen::VectorXd s(c.center.size());
    for (Eigen::Index k = 0; k < s.size(); ++k) {
        s(k) = at(k) - c.center(k) >= 0.0 ? 1.0 : -1.0;
    }
    return {c.index, s, c.radius + s.dot(c.center), source};
}

std::string describe(const ElasticProblem& problem, const std::vector<std::size_t>& ids)
{
    std::ostringstream os;
    os << "infeasible constraint set:";
    for (std::size_t id : ids) {
        if (id == kNoSource) {
            os << " [executed prefix]";
            continue;
        }
        const auto& c = problem.constraints[id];
        os << " #" << id << (c.kind == ConstraintKind::Attract ? " (attract" : " (repel") << " node " << c.index
           << " radius " << c.radius << ")";
    }
    return os.str();
}

std::vector<Eigen::Index> to_index(const std::vector<char>& mask, char value)
{
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] == value) {
            out.push_back(static_cast<Eigen::Index>(i));
        }
    }
    return out;
}

bool node_feasible(const std::vector<Facet>& facets, Eigen::Index node, const std::vector<std::size_t>& sources,
                   Eigen::Index d)
{
    std::vector<const Facet*> rows;
    for (const auto& f : facets) {
        if (f.node == node && std::find(sources.begin(), sources.end(), f.source) != sources.end()) {
            rows.push_back(&f);
        }
    }
    Eigen::MatrixXd N(d, static_cast<Eigen::Index>(rows.size()));
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        N.col(static_cast<Eigen::Index>(j)) = rows[j]->normal;
        b(static_cast<Eigen::Index>(j)) = rows[j]->rhs;
    }
    try {
        solve_dual_active_set(Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d), N, b);
        return true;
    } catch (const QpInfeasible&) {
        return false;
    }
}

// Facets only ever bind their own node, so an empty feasible set is always a
// per-node conflict. Shrink the QP's certificate to the constraints that
// actually clash, dropping whatever merely happened to be active.
std::vector<std::size_t> minimal_conflict(const std::vector<Facet>& facets, const std::vector<Eigen::Index>& rows,
                                          Eigen::Index d)
{
    std::vector<Eigen::Index> nodes;
    for (Eigen::Index row : rows) {
        nodes.push_back(facets[static_cast<std::size_t>(row)].node);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

    std::vector<std::size_t> ids;
    for (Eigen::Index node : nodes) {
        std::vector<std::size_t> sources;
        for (const auto& f : facets) {
            if (f.node == node) {
                sources.push_back(f.source);
            }
        }
        std::sort(sources.begin(), sources.end());
        sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
        if (node_feasible(facets, node, sources, d)) {
            continue;
        }
        for (std::size_t i = 0; i < sources.size();) {
            auto trial = sources;
            trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
            if (!node_feasible(facets, node, trial, d)) {
                sources = std::move(trial);
            } else {
                ++i;
            }
        }
        ids.insert(ids.end(), sources.begin(), sources.end());
    }
    if (ids.empty()) {
        for (Eigen::Index row : rows) {
            ids.push_back(facets[static_cast<std::size_t>(row)].source);
        }
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

// b - A zeta without the cancellation: only the smoothing terms survive.
Eigen::MatrixXd deviation_rhs(const ElasticProblem& problem)
{
    const auto& zeta = problem.demonstration.points();
    const Eigen::Index n = zeta.rows();
    const SparseMatrix e = sparse_stencil(n, {-1.0, 1.0});
    const SparseMatrix r = sparse_stencil(n, {1.0, -2.0, 1.0});
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, zeta.cols());
    if (problem.weights.stretch != 0.0) {
        out -= problem.weights.stretch * (e.transpose() * (e * zeta));
    }
    if (problem.weights.bend != 0.0) {
        out -= problem.weights.bend * (r.transpose() * (r * zeta));
    }
    return out;
}

// Minimizes y'Ay - 2 tr(b'y) with pinned rows fixed and facet half-spaces on
// the remaining constrained rows. Unconstrained rows are eliminated through
// the Schur complement so the QP only sees the constrained nodes.
// Works on the deviation z = y - zeta, which is small (often exactly zero)
// where the demonstration already satisfies the constraints.
Eigen::MatrixXd solve_pinned(const ElasticProblem& problem, const QuadraticForm& q, const std::vector<char>& pinned,
                             const Eigen::MatrixXd& pin_values, const std::vector<Facet>& facets)
{
    const Eigen::Index n = q.system.rows();
    const Eigen::Index d = q.rhs.cols();
    const auto& zeta = problem.demonstration.points();
    const Eigen::MatrixXd rhs = deviation_rhs(problem);

    enum : char { kFree = 0, kPinned = 1, kConstrained = 2 };
    std::vector<char> role(static_cast<std::size_t>(n), kFree);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (pinned[static_cast<std::size_t>(i)]) {
            role[static_cast<std::size_t>(i)] = kPinned;
        }
    }
    for (const auto& f : facets) {
        role[static_cast<std::size_t>(f.node)] = kConstrained;
    }
    const auto P = to_index(role, kPinned);
    const auto C = to_index(role, kConstrained);
    const auto F = to_index(role, kFree);

    const auto& A = q.system;
    const Eigen::MatrixXd y_p = pin_values(P, Eigen::all) - zeta(P, Eigen::all);

    Eigen::MatrixXd w;      // |F| x d, free rows with constrained rows at zero
    Eigen::MatrixXd m_fc;   // |F| x |C|, sensitivity of free rows to constrained rows
    Eigen::MatrixXd schur;  // |C| x |C|
    Eigen::MatrixXd c_lin;  // |C| x d
    if (!F.empty()) {
        const Eigen::LLT<Eigen::MatrixXd> chol(A(F, F));
        if (chol.info() != Eigen::Success) {
            throw UnderdeterminedError("elastic solve: free block is not positive definite");
        }
        w = chol.solve(rhs(F, Eigen::all) - A(F, P) * y_p);
        if (!C.empty()) {
            m_fc = chol.solve(A(F, C));
            schur = A(C, C) - A(C, F) * m_fc;
            c_lin = rhs(C, Eigen::all) - A(C, P) * y_p - A(C, F) * w;
        }
    } else if (!C.empty()) {
        schur = A(C, C);
        c_lin = rhs(C, Eigen::all) - A(C, P) * y_p;
    }

    Eigen::MatrixXd u;
    if (!C.empty()) {
        const auto nc = static_cast<Eigen::Index>(C.size());
        std::vector<Eigen::Index> slot(static_cast<std::size_t>(n), -1);
        for (Eigen::Index i = 0; i < nc; ++i) {
            slot[static_cast<std::size_t>(C[static_cast<std::size_t>(i)])] = i;
        }
        const Eigen::Index nv = nc * d;
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nv, nv);
        Eigen::VectorXd a(nv);
        for (Eigen::Index i = 0; i < nc; ++i) {
            for (Eigen::Index k = 0; k < d; ++k) {
                a(i * d + k) = -2.0 * c_lin(i, k);
                for (Eigen::Index j = 0; j < nc; ++j) {
                    G(i * d + k, j * d + k) = 2.0 * schur(i, j);
                }
            }
        }
        const auto nf = static_cast<Eigen::Index>(facets.size());
        Eigen::MatrixXd N = Eigen::MatrixXd::Zero(nv, nf);
        Eigen::VectorXd b(nf);
        for (Eigen::Index f = 0; f < nf; ++f) {
            const auto& facet = facets[static_cast<std::size_t>(f)];
            const Eigen::Index base = slot[static_cast<std::size_t>(facet.node)] * d;
            N.block(base, f, d, 1) = facet.normal;
            b(f) = facet.rhs - facet.normal.dot(zeta.row(facet.node).transpose());
        }
        QpSolution sol;
        try {
            sol = solve_dual_active_set(G, a, N, b);
        } catch (const QpInfeasible& e) {
            auto ids = minimal_conflict(facets, e.conflicting, d);
            throw InfeasibleError(describe(problem, ids), ids);
        }
        u.resize(nc, d);
        for (Eigen::Index i = 0; i < nc; ++i) {
            u.row(i) = sol.x.segment(i * d, d).transpose();
        }
    }

    Eigen::MatrixXd y = zeta;
    y(P, Eigen::all) = pin_values(P, Eigen::all);
    if (!C.empty()) {
        y(C, Eigen::all) += u;
    }
    if (!F.empty()) {
        y(F, Eigen::all) += C.empty() ? w : Eigen::MatrixXd(w - m_fc * u);
    }
    return y;
}

void validate(const ElasticProblem& problem)
{
    check_weights(problem.weights);
    const Eigen::Index n = problem.demonstration.size();
    const Eigen::Index d = problem.demonstration.dims();
    if (n < 3) {
        throw DimensionError("elastic problem: demonstration needs at least 3 waypoints");
    }
    if (n > problem.max_nodes) {
        throw DimensionError("elastic problem: " + std::to_string(n) + " waypoints exceeds the cap of "
                             + std::to_string(problem.max_nodes));
    }
    if (problem.prefix.rows() > 0 && problem.prefix.cols() != d) {
        throw DimensionError("elastic problem: prefix dimension does not match the demonstration");
    }
    if (problem.prefix.rows() >= n) {
        throw DimensionError("elastic problem: executed prefix must be shorter than the trajectory");
    }
    if (!problem.prefix.allFinite()) {
        throw std::invalid_argument("elastic problem: non-finite prefix value");
    }
    for (std::size_t i = 0; i < problem.constraints.size(); ++i) {
        const auto& c = problem.constraints[i];
        if (c.index < 0 || c.index >= n) {
            throw DimensionError("constraint #" + std::to_string(i) + ": node " + std::to_string(c.index)
                                 + " out of range");
        }
        if (c.center.size() != d) {
            throw DimensionError("constraint #" + std::to_string(i) + ": center dimension mismatch");
        }
        if (!c.center.allFinite() || !std::isfinite(c.radius) || c.radius < 0.0) {
            throw std::invalid_argument("constraint #" + std::to_string(i)
                                        + ": center must be finite and radius non-negative");
        }
    }
}

double pin_tolerance(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    return 1e-12 * std::max({1.0, a.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>()});
}

} // namespace

QuadraticForm assemble_objective(const ElasticProblem& problem)
{
    check_weights(problem.weights);
    const Eigen::Index n = problem.demonstration.size();
    if (n < 3) {
        throw DimensionError("assemble_objective: need at least 3 waypoints");
    }
    if (n > problem.max_nodes) {
        throw DimensionError("assemble_objective: waypoint count exceeds the cap");
    }
    const SparseMatrix lap = sparse_laplacian(n);
    const SparseMatrix e = sparse_stencil(n, {-1.0, 1.0});
    const SparseMatrix r = sparse_stencil(n, {1.0, -2.0, 1.0});
    const SparseMatrix ltl = SparseMatrix(lap.transpose() * lap);
    SparseMatrix a = ltl + problem.weights.stretch * SparseMatrix(e.transpose() * e)
                     + problem.weights.bend * SparseMatrix(r.transpose() * r);
    QuadraticForm q;
    q.system = Eigen::MatrixXd(a);
    q.rhs = ltl * problem.demonstration.points();
    return q;
}

double energy(const ElasticProblem& problem, const Eigen::MatrixXd& y)
{
    const auto& zeta = problem.demonstration.points();
    if (y.rows() != zeta.rows() || y.cols() != zeta.cols()) {
        throw DimensionError("energy: candidate shape does not match the demonstration");
    }
    const Eigen::Index n = y.rows();
    const SparseMatrix lap = sparse_laplacian(n);
    const SparseMatrix e = sparse_stencil(n, {-1.0, 1.0});
    const SparseMatrix r = sparse_stencil(n, {1.0, -2.0, 1.0});
    return (lap * (y - zeta)).squaredNorm() + problem.weights.stretch * (e * y).squaredNorm()
           + problem.weights.bend * (r * y).squaredNorm();
}

Trajectory reproduce(const ElasticProblem& problem)
{
    validate(problem);
    const auto& demo = problem.demonstration;
    const Eigen::Index n = demo.size();
    const Eigen::Index d = demo.dims();
    const Eigen::Index n_prefix = problem.prefix.rows();

    std::vector<char> pinned(static_cast<std::size_t>(n), 0);
    std::vector<std::size_t> pin_source(static_cast<std::size_t>(n), kNoSource);
    Eigen::MatrixXd pin_values = Eigen::MatrixXd::Zero(n, d);
    for (Eigen::Index i = 0; i < n_prefix; ++i) {
        pinned[static_cast<std::size_t>(i)] = 1;
        pin_values.row(i) = problem.prefix.row(i);
    }

    std::vector<std::size_t> balls;
    std::vector<std::size_t> repels;
    for (std::size_t id = 0; id < problem.constraints.size(); ++id) {
        const auto& c = problem.constraints[id];
        if (c.index < n_prefix) {
            continue;
        }
        if (c.kind == ConstraintKind::Repel) {
            repels.push_back(id);
        } else if (c.radius == 0.0) {
            const auto node = static_cast<std::size_t>(c.index);
            if (pinned[node]) {
                const Eigen::VectorXd existing = pin_values.row(c.index).transpose();
                if ((existing - c.center).lpNorm<Eigen::Infinity>() > pin_tolerance(existing, c.center)) {
                    std::vector<std::size_t> ids{pin_source[node], id};
                    std::sort(ids.begin(), ids.end());
                    throw InfeasibleError(describe(problem, ids), ids);
                }
            } else {
                pinned[node] = 1;
                pin_source[node] = id;
                pin_values.row(c.index) = c.center.transpose();
            }
        } else {
            balls.push_back(id);
        }
    }
    if (std::none_of(pinned.begin(), pinned.end(), [](char p) { return p != 0; })) {
        throw UnderdeterminedError(
            "elastic problem has no pinned waypoint: add a zero-radius attract constraint (start pin) "
            "or an executed prefix");
    }

    std::vector<Facet> base_facets;
    for (std::size_t id : balls) {
        const auto& c = problem.constraints[id];
        const auto node = static_cast<std::size_t>(c.index);
        if (pinned[node]) {
            const Eigen::VectorXd at = pin_values.row(c.index).transpose();
            if ((at - c.center).lpNorm<1>() > c.radius + 1e-12 * std::max(1.0, c.radius)) {
                std::vector<std::size_t> ids{pin_source[node], id};
                std::sort(ids.begin(), ids.end());
                throw InfeasibleError(describe(problem, ids), ids);
            }
            continue;
        }
        append_ball_facets(base_facets, c, id);
    }
    std::vector<std::size_t> free_repels;
    for (std::size_t id : repels) {
        const auto& c = problem.constraints[id];
        const auto node = static_cast<std::size_t>(c.index);
        if (pinned[node]) {
            const Eigen::VectorXd at = pin_values.row(c.index).transpose();
            if ((at - c.center).lpNorm<1>() < c.radius - 1e-12 * std::max(1.0, c.radius)) {
                std::vector<std::size_t> ids{pin_source[node], id};
                std::sort(ids.begin(), ids.end());
                throw InfeasibleError(describe(problem, ids), ids);
            }
            continue;
        }
        free_repels.push_back(id);
    }

    const QuadraticForm q = assemble_objective(problem);
    Eigen::MatrixXd y = solve_pinned(problem, q, pinned, pin_values, base_facets);

    // Repel balls are non-convex: cut with the supporting half-space in the
    // orthant of the current iterate and re-linearize.
    std::vector<std::optional<Facet>> cuts(free_repels.size());
    for (int pass = 0; pass < kMaxRelinearizations && !free_repels.empty(); ++pass) {
        bool changed = false;
        for (std::size_t r = 0; r < free_repels.size(); ++r) {
            const auto& c = problem.constraints[free_repels[r]];
            const Eigen::VectorXd at = y.row(c.index).transpose();
            const bool inside = (at - c.center).lpNorm<1>() < c.radius * (1.0 - 1e-12);
            if (!inside && !cuts[r]) {
                continue;
            }
            Facet cut = repel_cut(c, at, free_repels[r]);
            if (!cuts[r] || cuts[r]->normal != cut.normal) {
                cuts[r] = std::move(cut);
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        std::vector<Facet> facets = base_facets;
        for (const auto& cut : cuts) {
            if (cut) {
                facets.push_back(*cut);
            }
        }
        y = solve_pinned(problem, q, pinned, pin_values, facets);
    }
    for (std::size_t id : free_repels) {
        const auto& c = problem.constraints[id];
        const Eigen::VectorXd at = y.row(c.index).transpose();
        if ((at - c.center).lpNorm<1>() < c.radius - 1e-9) {
            throw InfeasibleError(describe(problem, {id}), {id});
        }
    }

    // Executed rows are reproduced verbatim.
    if (n_prefix > 0) {
        y.topRows(n_prefix) = problem.prefix;
    }
    return Trajectory(std::move(y), demo.dt());
}

Trajectory adapt_suffix(const ElasticProblem& problem, const Eigen::VectorXd& endpoint_target, double radius)
{
    const Eigen::Index n = problem.demonstration.size();
    const Eigen::Index n_prefix = problem.prefix.rows();
    if (n_prefix < 2) {
        throw std::invalid_argument("adapt_suffix: executed prefix must cover at least nodes 0..1");
    }
    if (n_prefix >= n) {
        throw std::invalid_argument("adapt_suffix: nothing left to adapt, prefix covers the whole trajectory");
    }
    if (endpoint_target.size() != problem.demonstration.dims() || !endpoint_target.allFinite()) {
        throw DimensionError("adapt_suffix: endpoint target has wrong dimension or is not finite");
    }
    if (!std::isfinite(radius) || radius < 0.0) {
        throw std::invalid_argument("adapt_suffix: endpoint radius must be finite and non-negative");
    }
    // Constraint ids in errors refer to `problem.constraints`; the endpoint
    // ball gets id problem.constraints.size().
    ElasticProblem online = problem;
    online.constraints.clear();
    std::vector<std::size_t> origin;
    for (std::size_t id = 0; id < problem.constraints.size(); ++id) {
        const auto& c = problem.constraints[id];
        if (c.kind == ConstraintKind::Attract && c.index == n - 1) {
            continue;
        }
        online.constraints.push_back(c);
        origin.push_back(id);
    }
    online.constraints.push_back(PointConstraint::attract(n - 1, endpoint_target, radius));
    origin.push_back(problem.constraints.size());
    try {
        return reproduce(online);
    } catch (const InfeasibleError& e) {
        std::vector<std::size_t> ids;
        for (std::size_t id : e.constraint_ids) {
            ids.push_back(id < origin.size() ? origin[id] : id);
        }
        throw InfeasibleError(e.what(), ids);
    }
}

double shrink_radius_schedule(double initial_radius, double final_radius, double progress)
{
    if (!(initial_radius >= final_radius) || !(final_radius >= 0.0)) {
        throw std::invalid_argument("shrink_radius_schedule: need initial >= final >= 0");
    }
    const double p = std::clamp(progress, 0.0, 1.0);
    return (1.0 - p) * initial_radius + p * final_radius;
}

} // namespace elte
