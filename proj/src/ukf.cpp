#include "elte/ukf.hpp"

#include <cmath>
#include <string>

namespace elte {

namespace {

void symmetrize(Eigen::MatrixXd& c)
{
    c = 0.5 * (c + c.transpose()).eval();
}

double lambda_of(const UkfParams& p, Eigen::Index m)
{
    const double md = static_cast<double>(m);
    return p.alpha * p.alpha * (md + p.kappa) - md;
}

Eigen::MatrixXd process_noise(Eigen::Index d, double dt, double q)
{
    const Eigen::Index m = 2 * d;
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(m, m);
    const double dt2 = dt * dt;
    Q.topLeftCorner(d, d).diagonal().setConstant(q * dt2 * dt / 3.0);
    Q.topRightCorner(d, d).diagonal().setConstant(q * dt2 / 2.0);
    Q.bottomLeftCorner(d, d).diagonal().setConstant(q * dt2 / 2.0);
    Q.bottomRightCorner(d, d).diagonal().setConstant(q * dt);
    return Q;
}

Eigen::VectorXd propagate(const Eigen::VectorXd& x, double dt)
{
    const Eigen::Index d = x.size() / 2;
    Eigen::VectorXd y = x;
    y.head(d) += dt * x.tail(d);
    return y;
}

} // namespace

void validate(const UkfParams& p, Eigen::Index m)
{
    if (!(p.alpha > 0.0 && p.alpha <= 1.0)) {
        throw std::invalid_argument("ukf: alpha must lie in (0, 1]");
    }
    if (!(p.q > 0.0) || !(p.r_obs > 0.0)) {
        throw std::invalid_argument("ukf: q and r_obs must be positive");
    }
    if (!(static_cast<double>(m) + lambda_of(p, m) > 0.0)) {
        throw std::invalid_argument("ukf: m + lambda must be positive");
    }
}

SigmaPointSet sigma_points(const UkfBelief& belief, const UkfParams& params)
{
    const Eigen::Index m = belief.mean.size();
    validate(params, m);
    const double lambda = lambda_of(params, m);
    const double spread = static_cast<double>(m) + lambda;

    Eigen::LLT<Eigen::MatrixXd> llt(spread * belief.covariance);
    if (llt.info() != Eigen::Success) {
        llt.compute(spread * (belief.covariance + 1e-12 * Eigen::MatrixXd::Identity(m, m)));
        if (llt.info() != Eigen::Success) {
            throw FactorizationError("ukf: covariance is not positive definite");
        }
    }
    const Eigen::MatrixXd root = llt.matrixL();

    SigmaPointSet s;
    s.points.resize(m, 2 * m + 1);
    s.points.col(0) = belief.mean;
    for (Eigen::Index i = 0; i < m; ++i) {
        s.points.col(1 + i) = belief.mean + root.col(i);
        s.points.col(1 + m + i) = belief.mean - root.col(i);
    }
    s.mean_weights = Eigen::VectorXd::Constant(2 * m + 1, 0.5 / spread);
    s.cov_weights = s.mean_weights;
    s.mean_weights(0) = lambda / spread;
    s.cov_weights(0) = lambda / spread + (1.0 - params.alpha * params.alpha + params.beta);
    return s;
}

UkfBelief ukf_init(const Eigen::VectorXd& z, const UkfParams& params)
{
    if (!z.allFinite()) {
        throw std::invalid_argument("ukf_init: observation is not finite");
    }
    const Eigen::Index d = z.size();
    UkfBelief b;
    b.mean = Eigen::VectorXd::Zero(2 * d);
    b.mean.head(d) = z;
    b.covariance = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    b.covariance.topLeftCorner(d, d).diagonal().setConstant(params.r_obs);
    b.covariance.bottomRightCorner(d, d).diagonal().setConstant(1.0);
    return b;
}

UkfBelief predict(const UkfBelief& belief, const UkfParams& params, double dt)
{
    if (!(dt > 0.0)) {
        throw std::invalid_argument("ukf predict: dt must be positive");
    }
    const auto s = sigma_points(belief, params);
    const Eigen::Index m = belief.mean.size();
    Eigen::MatrixXd y(m, s.points.cols());
    for (Eigen::Index i = 0; i < y.cols(); ++i) {
        y.col(i) = propagate(s.points.col(i), dt);
    }
    UkfBelief out;
    out.mean = y * s.mean_weights;
    const Eigen::MatrixXd dev = y.colwise() - out.mean;
    out.covariance = dev * s.cov_weights.asDiagonal() * dev.transpose() + process_noise(m / 2, dt, params.q);
    symmetrize(out.covariance);
    return out;
}

UpdateResult update(const UkfBelief& belief, const UkfParams& params, const Eigen::VectorXd& z)
{
    const Eigen::Index d = belief.dims();
    if (z.size() != d) {
        throw std::invalid_argument("ukf update: observation has " + std::to_string(z.size()) + " axes, expected "
                                    + std::to_string(d));
    }
    if (!z.allFinite()) {
        return {belief, false};
    }
    const auto s = sigma_points(belief, params);
    const Eigen::MatrixXd zs = s.points.topRows(d); // H picks the position block
    const Eigen::VectorXd z_hat = zs * s.mean_weights;
    const Eigen::MatrixXd dz = zs.colwise() - z_hat;
    const Eigen::MatrixXd dx = s.points.colwise() - (s.points * s.mean_weights);
    Eigen::MatrixXd S = dz * s.cov_weights.asDiagonal() * dz.transpose();
    S.diagonal().array() += params.r_obs;
    const Eigen::MatrixXd pxz = dx * s.cov_weights.asDiagonal() * dz.transpose();
    const Eigen::MatrixXd gain = S.llt().solve(pxz.transpose()).transpose();

    UpdateResult r;
    r.belief.mean = belief.mean + gain * (z - z_hat);
    r.belief.covariance = belief.covariance - gain * S * gain.transpose();
    symmetrize(r.belief.covariance);
    return r;
}

Forecast forecast(const UkfBelief& belief, const UkfParams& params, double horizon)
{
    if (!(horizon >= 0.0)) {
        throw std::invalid_argument("ukf forecast: horizon must be non-negative");
    }
    const Eigen::Index d = belief.dims();
    if (horizon == 0.0) {
        return {belief.position(), belief.covariance.topLeftCorner(d, d)};
    }
    // The motion model is closed under composition, so one step of length
    // `horizon` equals any chain of shorter predictions.
    const auto ahead = predict(belief, params, horizon);
    return {ahead.position(), ahead.covariance.topLeftCorner(d, d)};
}

TargetTracker::TargetTracker(UkfParams params, double dt) : params_(params), dt_(dt)
{
    if (!(dt > 0.0)) {
        throw std::invalid_argument("tracker: dt must be positive");
    }
}

TargetTracker::Step TargetTracker::observe(const std::optional<Eigen::VectorXd>& z)
{
    Step step;
    step.dropout = !z.has_value();
    step.rejected = z.has_value() && !z->allFinite();
    const bool usable = !step.dropout && !step.rejected;
    if (!belief_) {
        if (usable) {
            validate(params_, 2 * z->size());
            belief_ = ukf_init(*z, params_);
        }
        return step;
    }
    belief_ = predict(*belief_, params_, dt_);
    if (usable) {
        belief_ = update(*belief_, params_, *z).belief;
    }
    return step;
}

double TargetTracker::speed() const
{
    return belief_ ? belief_->velocity().norm() : 0.0;
}

Forecast TargetTracker::forecast(double horizon) const
{
    if (!belief_) {
        throw std::logic_error("tracker: forecast before the first observation");
    }
    return elte::forecast(*belief_, params_, horizon);
}

} // namespace elte
