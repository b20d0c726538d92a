#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace elte {

/// Raised when matrix or trajectory shapes do not line up.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Largest node count any operator or solver will accept.
inline constexpr Eigen::Index kDefaultMaxNodes = 2000;

/// Ordered waypoints (one row per node, one column per spatial axis) sampled
/// at a fixed timestep. Used for demonstrations and reproductions alike.
class Trajectory {
public:
    Trajectory(Eigen::MatrixXd points, double dt);

    const Eigen::MatrixXd& points() const { return points_; }
    double dt() const { return dt_; }
    Eigen::Index size() const { return points_.rows(); }
    Eigen::Index dims() const { return points_.cols(); }
    double duration() const { return dt_ * static_cast<double>(size() - 1); }

    Eigen::VectorXd point(Eigen::Index i) const { return points_.row(i).transpose(); }
    Eigen::VectorXd front() const { return point(0); }
    Eigen::VectorXd back() const { return point(size() - 1); }

    /// Sum of segment lengths.
    double path_length() const;

    bool operator==(const Trajectory& other) const
    {
        return dt_ == other.dt_ && points_ == other.points_;
    }

private:
    Eigen::MatrixXd points_;
    double dt_;
};

/// Path-graph Laplacian plus first and second finite-difference stencils.
template <typename Scalar>
struct OperatorSet {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Matrix laplacian;   // T x T
    Matrix first_diff;  // (T-1) x T
    Matrix second_diff; // (T-2) x T
};

/// Builds the dense operators for a chain of `nodes` waypoints.
template <typename Scalar = double>
OperatorSet<Scalar> build_operators(Eigen::Index nodes, Eigen::Index max_nodes = kDefaultMaxNodes)
{
    if (nodes < 3) {
        throw DimensionError("build_operators: need at least 3 nodes for the second difference, got "
                             + std::to_string(nodes));
    }
    if (nodes > max_nodes) {
        throw DimensionError("build_operators: " + std::to_string(nodes) + " nodes exceeds the cap of "
                             + std::to_string(max_nodes));
    }
    using Matrix = typename OperatorSet<Scalar>::Matrix;
    OperatorSet<Scalar> ops;
    ops.laplacian = Matrix::Zero(nodes, nodes);
    for (Eigen::Index i = 0; i < nodes; ++i) {
        if (i > 0) {
            ops.laplacian(i, i - 1) = Scalar(-1);
            ops.laplacian(i, i) += Scalar(1);
        }
        if (i + 1 < nodes) {
            ops.laplacian(i, i + 1) = Scalar(-1);
            ops.laplacian(i, i) += Scalar(1);
        }
    }
    ops.first_diff = Matrix::Zero(nodes - 1, nodes);
    for (Eigen::Index i = 0; i + 1 < nodes; ++i) {
        ops.first_diff(i, i) = Scalar(-1);
        ops.first_diff(i, i + 1) = Scalar(1);
    }
    ops.second_diff = Matrix::Zero(nodes - 2, nodes);
    for (Eigen::Index i = 0; i + 2 < nodes; ++i) {
        ops.second_diff(i, i) = Scalar(1);
        ops.second_diff(i, i + 1) = Scalar(-2);
        ops.second_diff(i, i + 2) = Scalar(1);
    }
    return ops;
}

/// Uniform index-parameter resampling to `nodes` points. Endpoints are copied
/// verbatim and total duration is preserved.
Trajectory resample(const Trajectory& traj, Eigen::Index nodes);

/// CSV with header `t,x,y` or `t,x,y,z`, one row per waypoint.
Trajectory read_trajectory_csv(std::istream& in);
Trajectory read_trajectory_csv(const std::filesystem::path& path);
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);

} // namespace elte
