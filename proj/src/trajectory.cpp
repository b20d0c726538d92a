#include "elte/trajectory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace elte {

Trajectory::Trajectory(Eigen::MatrixXd points, double dt) : points_(std::move(points)), dt_(dt)
{
    if (points_.rows() < 2) {
        throw DimensionError("Trajectory: need at least 2 waypoints, got " + std::to_string(points_.rows()));
    }
    if (points_.cols() != 2 && points_.cols() != 3) {
        throw DimensionError("Trajectory: waypoints must be 2-D or 3-D, got " + std::to_string(points_.cols()));
    }
    if (!points_.allFinite()) {
        throw std::invalid_argument("Trajectory: non-finite coordinate");
    }
    if (!(dt_ > 0.0) || !std::isfinite(dt_)) {
        throw std::invalid_argument("Trajectory: dt must be positive and finite");
    }
}

double Trajectory::path_length() const
{
    double length = 0.0;
    for (Eigen::Index i = 1; i < size(); ++i) {
        length += (points_.row(i) - points_.row(i - 1)).norm();
    }
    return length;
}

Trajectory resample(const Trajectory& traj, Eigen::Index nodes)
{
    if (nodes < 3) {
        throw DimensionError("resample: need at least 3 output nodes, got " + std::to_string(nodes));
    }
    const Eigen::Index n_in = traj.size();
    if (nodes == n_in) {
        return traj;
    }
    const auto& src = traj.points();
    Eigen::MatrixXd out(nodes, traj.dims());
    const double scale = static_cast<double>(n_in - 1) / static_cast<double>(nodes - 1);
    out.row(0) = src.row(0);
    out.row(nodes - 1) = src.row(n_in - 1);
    for (Eigen::Index k = 1; k + 1 < nodes; ++k) {
        const double s = scale * static_cast<double>(k);
        auto lo = static_cast<Eigen::Index>(std::floor(s));
        lo = std::min(lo, n_in - 2);
        const double frac = s - static_cast<double>(lo);
        out.row(k) = (1.0 - frac) * src.row(lo) + frac * src.row(lo + 1);
    }
    return Trajectory(std::move(out), traj.duration() / static_cast<double>(nodes - 1));
}

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
            cell.pop_back();
        }
        while (!cell.empty() && cell.front() == ' ') {
            cell.erase(cell.begin());
        }
        cells.push_back(cell);
    }
    return cells;
}

} // namespace

Trajectory read_trajectory_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("trajectory csv: empty input");
    }
    const auto header = split_csv(line);
    Eigen::Index dims = 0;
    if (header == std::vector<std::string>{"t", "x", "y"}) {
        dims = 2;
    } else if (header == std::vector<std::string>{"t", "x", "y", "z"}) {
        dims = 3;
    } else {
        throw std::runtime_error("trajectory csv: first line must be 't,x,y' or 't,x,y,z', got '" + line + "'");
    }

    std::vector<double> times;
    std::vector<double> coords;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != static_cast<std::size_t>(dims + 1)) {
            throw std::runtime_error("trajectory csv: row " + std::to_string(row) + " has "
                                     + std::to_string(cells.size()) + " columns");
        }
        try {
            times.push_back(std::stod(cells[0]));
            for (Eigen::Index k = 0; k < dims; ++k) {
                coords.push_back(std::stod(cells[static_cast<std::size_t>(k + 1)]));
            }
        } catch (const std::logic_error&) {
            throw std::runtime_error("trajectory csv: row " + std::to_string(row) + " is not numeric");
        }
    }
    const auto n = static_cast<Eigen::Index>(times.size());
    if (n < 2) {
        throw std::runtime_error("trajectory csv: need at least 2 rows");
    }
    const double dt = (times.back() - times.front()) / static_cast<double>(n - 1);
    for (Eigen::Index i = 1; i < n; ++i) {
        const double step = times[static_cast<std::size_t>(i)] - times[static_cast<std::size_t>(i - 1)];
        if (std::abs(step - dt) > 1e-6 * std::max(1.0, std::abs(dt))) {
            throw std::runtime_error("trajectory csv: timestamps are not uniformly spaced");
        }
    }
    Eigen::MatrixXd points =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(coords.data(), n,
                                                                                                  dims);
    return Trajectory(std::move(points), dt);
}

Trajectory read_trajectory_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open trajectory file " + path.string());
    }
    return read_trajectory_csv(in);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj)
{
    out << (traj.dims() == 2 ? "t,x,y\n" : "t,x,y,z\n");
    char buf[64];
    for (Eigen::Index i = 0; i < traj.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", traj.dt() * static_cast<double>(i));
        out << buf;
        for (Eigen::Index k = 0; k < traj.dims(); ++k) {
            std::snprintf(buf, sizeof buf, ",%.17g", traj.points()(i, k));
            out << buf;
        }
        out << '\n';
    }
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write trajectory file " + path.string());
    }
    write_trajectory_csv(out, traj);
}

} // namespace elte
