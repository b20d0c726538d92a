#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>

namespace elte {

/// Spread parameters of the scaled unscented transform plus the noise model.
/// q is the white-acceleration intensity (m^2/s^3), r_obs the per-axis
/// observation variance (m^2).
struct UkfParams {
    double alpha = 1.0;
    double beta = 2e-6;
    double kappa = 0.0;
    double q = 1.0;
    double r_obs = 0.005 * 0.005;
};

/// State [positions; velocities] for d axes, so 2d entries.
struct UkfBelief {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;

    Eigen::Index dims() const { return mean.size() / 2; }
    Eigen::VectorXd position() const { return mean.head(dims()); }
    Eigen::VectorXd velocity() const { return mean.tail(dims()); }
};

/// Sigma points are stored as columns; column 0 is the mean.
struct SigmaPointSet {
    Eigen::MatrixXd points;
    Eigen::VectorXd mean_weights;
    Eigen::VectorXd cov_weights;
};

class FactorizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void validate(const UkfParams& params, Eigen::Index state_dim);

SigmaPointSet sigma_points(const UkfBelief& belief, const UkfParams& params);

/// First-observation prior: position from z with variance r_obs, velocity 0
/// with unit variance.
UkfBelief ukf_init(const Eigen::VectorXd& z, const UkfParams& params);

/// Constant-velocity motion with white-noise acceleration.
UkfBelief predict(const UkfBelief& belief, const UkfParams& params, double dt);

struct UpdateResult {
    UkfBelief belief;
    bool accepted = true; // false when z was not finite; belief is then unchanged
};

UpdateResult update(const UkfBelief& belief, const UkfParams& params, const Eigen::VectorXd& z);

struct Forecast {
    Eigen::VectorXd position;
    Eigen::MatrixXd covariance;
};

/// Open-loop prediction `horizon` seconds ahead.
Forecast forecast(const UkfBelief& belief, const UkfParams& params, double horizon);

/// Single-owner tracking loop: lazily initialized on the first usable
/// observation, predict-only on dropouts.
class TargetTracker {
public:
    TargetTracker(UkfParams params, double dt);

    struct Step {
        bool dropout = false;  // no observation this tick
        bool rejected = false; // observation present but not finite
    };
    Step observe(const std::optional<Eigen::VectorXd>& z);

    bool initialized() const { return belief_.has_value(); }
    const UkfBelief& belief() const { return *belief_; }
    /// Norm of the estimated velocity; 0 before initialization.
    double speed() const;
    Forecast forecast(double horizon) const;

private:
    UkfParams params_;
    double dt_;
    std::optional<UkfBelief> belief_;
};

} // namespace elte
