#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace elte {

/// Hidden safety states, ordered from safest to least safe.
enum class SafetyState { Forward = 0, Pause = 1, Reverse = 2 };

const char* to_string(SafetyState s);

/// Gaussian-emission HMM over a scalar observation (target speed, m/s).
struct HmmModel {
    Eigen::MatrixXd transition; // row-stochastic, transition(i, j) = P(j | i)
    Eigen::VectorXd means;
    Eigen::VectorXd variances;
    Eigen::VectorXd initial;

    Eigen::Index states() const { return initial.size(); }
};

/// Throws std::invalid_argument unless the model is well formed.
void validate(const HmmModel& model);

/// Emission densities of every state for one observation.
Eigen::VectorXd emission_density(const HmmModel& model, double speed);

struct FilterResult {
    Eigen::MatrixXd posteriors; // one row per step
    double log_likelihood = 0.0;
    Eigen::Index most_probable = 0; // argmax of the last posterior
};

/// Scaled forward recursion: filtered posteriors P(state_t | obs_0..t).
FilterResult forward_filter(const HmmModel& model, const std::vector<double>& speeds);

/// The same recursion one observation at a time, for the tick loop.
class HmmFilter {
public:
    explicit HmmFilter(HmmModel model);

    const Eigen::VectorXd& step(double speed);
    const Eigen::VectorXd& posterior() const { return posterior_; }
    double log_likelihood() const { return log_likelihood_; }
    const HmmModel& model() const { return model_; }

private:
    HmmModel model_;
    Eigen::VectorXd posterior_;
    double log_likelihood_ = 0.0;
    bool started_ = false;
};

struct BaumWelchOptions {
    int max_iter = 200;
    double tol = 1e-6;
    double variance_floor = 1e-8;
};

struct BaumWelchResult {
    HmmModel model;
    /// Total log-likelihood of the corpus under the model entering each
    /// iteration, followed by the value under the returned model.
    std::vector<double> log_likelihoods;
    int iterations = 0;
    bool converged = false;
};

/// EM from a deterministic start: quantile means, pooled variance, sticky
/// transitions (0.8 on the diagonal), uniform initial. States are sorted by
/// emission mean afterwards, so with three states index 0 is Forward.
BaumWelchResult baum_welch(const std::vector<std::vector<double>>& sequences, Eigen::Index n_states,
                           const BaumWelchOptions& options = {});

/// EM from a caller-supplied model (no relabeling).
BaumWelchResult baum_welch_from(const HmmModel& start, const std::vector<std::vector<double>>& sequences,
                                const BaumWelchOptions& options = {});

/// Permutes states into ascending emission-mean order.
HmmModel sort_states_by_mean(const HmmModel& model);

/// Argmax over a 3-state posterior; exact ties go to the less safe state.
SafetyState classify(const Eigen::VectorXd& posterior);

void write_hmm(std::ostream& out, const HmmModel& model);
void write_hmm(const std::filesystem::path& path, const HmmModel& model);
HmmModel read_hmm(std::istream& in);
HmmModel read_hmm(const std::filesystem::path& path);

} // namespace elte
