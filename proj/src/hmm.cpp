#include "elte/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace elte {

namespace {

constexpr const char* kHeader = "elte-hmm v1";

// Log emission densities, shifted so the largest is zero; the shift is
// returned through `offset`.
Eigen::VectorXd shifted_emission(const HmmModel& m, double x, double& offset)
{
    const Eigen::ArrayXd diff = x - m.means.array();
    Eigen::VectorXd logp = -0.5 * (diff.square() / m.variances.array() + (2.0 * std::numbers::pi * m.variances.array()).log());
    offset = logp.maxCoeff();
    return (logp.array() - offset).exp();
}

void check_sequence(const std::vector<double>& seq)
{
    for (double v : seq) {
        if (!std::isfinite(v) || v < 0.0) {
            throw std::invalid_argument("hmm: observations must be finite and non-negative");
        }
    }
}

struct Pass {
    Eigen::MatrixXd alpha; // scaled forward
    Eigen::MatrixXd beta;  // scaled backward
    Eigen::MatrixXd dens;  // shifted emission densities
    Eigen::VectorXd scale;
    double log_likelihood = 0.0;
};

Pass forward_backward(const HmmModel& m, const std::vector<double>& seq)
{
    const auto n = static_cast<Eigen::Index>(seq.size());
    const Eigen::Index k = m.states();
    Pass p;
    p.alpha.resize(n, k);
    p.beta.resize(n, k);
    p.dens.resize(n, k);
    p.scale.resize(n);
    for (Eigen::Index t = 0; t < n; ++t) {
        double offset = 0.0;
        p.dens.row(t) = shifted_emission(m, seq[static_cast<std::size_t>(t)], offset).transpose();
        const Eigen::RowVectorXd prior =
            t == 0 ? Eigen::RowVectorXd(m.initial.transpose()) : Eigen::RowVectorXd(p.alpha.row(t - 1) * m.transition);
        const Eigen::RowVectorXd a = prior.cwiseProduct(p.dens.row(t));
        const double c = a.sum();
        if (!(c > 0.0)) {
            throw std::runtime_error("hmm: observation sequence has zero probability under the model");
        }
        p.alpha.row(t) = a / c;
        p.scale(t) = c;
        p.log_likelihood += std::log(c) + offset;
    }
    p.beta.row(n - 1).setOnes();
    for (Eigen::Index t = n - 2; t >= 0; --t) {
        p.beta.row(t) = (m.transition * p.dens.row(t + 1).cwiseProduct(p.beta.row(t + 1)).transpose()).transpose()
                        / p.scale(t + 1);
    }
    return p;
}

double corpus_log_likelihood(const HmmModel& m, const std::vector<std::vector<double>>& seqs)
{
    double total = 0.0;
    for (const auto& s : seqs) {
        total += forward_backward(m, s).log_likelihood;
    }
    return total;
}

HmmModel em_step(const HmmModel& m, const std::vector<std::vector<double>>& seqs, double floor, double& ll)
{
    const Eigen::Index k = m.states();
    Eigen::MatrixXd trans_num = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd init = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd wx = Eigen::VectorXd::Zero(k);
    std::vector<Eigen::VectorXd> gammas;
    ll = 0.0;
    for (const auto& seq : seqs) {
        const auto p = forward_backward(m, seq);
        ll += p.log_likelihood;
        const auto n = static_cast<Eigen::Index>(seq.size());
        Eigen::MatrixXd gamma = p.alpha.cwiseProduct(p.beta);
        for (Eigen::Index t = 0; t < n; ++t) {
            gamma.row(t) /= gamma.row(t).sum();
        }
        init += gamma.row(0).transpose();
        for (Eigen::Index t = 0; t + 1 < n; ++t) {
            Eigen::MatrixXd xi = m.transition.array()
                                 * (p.alpha.row(t).transpose()
                                    * p.dens.row(t + 1).cwiseProduct(p.beta.row(t + 1)))
                                       .array();
            trans_num += xi / xi.sum();
        }
        for (Eigen::Index t = 0; t < n; ++t) {
            const double x = seq[static_cast<std::size_t>(t)];
            w += gamma.row(t).transpose();
            wx += x * gamma.row(t).transpose();
        }
        gammas.emplace_back(Eigen::Map<const Eigen::VectorXd>(gamma.data(), gamma.size()));
    }

    HmmModel out;
    out.initial = init / init.sum();
    out.transition = m.transition;
    for (Eigen::Index i = 0; i < k; ++i) {
        const double row = trans_num.row(i).sum();
        if (row > 0.0) {
            out.transition.row(i) = trans_num.row(i) / row;
        }
    }
    out.means = m.means;
    out.variances = m.variances;
    for (Eigen::Index i = 0; i < k; ++i) {
        if (w(i) > 0.0) {
            out.means(i) = wx(i) / w(i);
        }
    }
    // Second pass for the variances around the new means.
    Eigen::VectorXd wss = Eigen::VectorXd::Zero(k);
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        const auto n = static_cast<Eigen::Index>(seqs[s].size());
        const Eigen::Map<const Eigen::MatrixXd> gamma(gammas[s].data(), n, k);
        for (Eigen::Index t = 0; t < n; ++t) {
            const Eigen::ArrayXd d = seqs[s][static_cast<std::size_t>(t)] - out.means.array();
            wss += (gamma.row(t).transpose().array() * d.square()).matrix();
        }
    }
    for (Eigen::Index i = 0; i < k; ++i) {
        if (w(i) > 0.0) {
            out.variances(i) = std::max(floor, wss(i) / w(i));
        }
    }
    return out;
}

} // namespace

const char* to_string(SafetyState s)
{
    switch (s) {
    case SafetyState::Forward: return "Forward";
    case SafetyState::Pause: return "Pause";
    case SafetyState::Reverse: return "Reverse";
    }
    return "?";
}

void validate(const HmmModel& m)
{
    const Eigen::Index k = m.initial.size();
    if (k < 1 || m.transition.rows() != k || m.transition.cols() != k || m.means.size() != k
        || m.variances.size() != k) {
        throw std::invalid_argument("hmm: inconsistent model dimensions");
    }
    if (!m.transition.allFinite() || !m.means.allFinite() || !m.variances.allFinite() || !m.initial.allFinite()) {
        throw std::invalid_argument("hmm: model has non-finite entries");
    }
    if ((m.transition.array() < 0.0).any() || (m.initial.array() < 0.0).any()) {
        throw std::invalid_argument("hmm: negative probability");
    }
    for (Eigen::Index i = 0; i < k; ++i) {
        if (std::abs(m.transition.row(i).sum() - 1.0) > 1e-12) {
            throw std::invalid_argument("hmm: transition row " + std::to_string(i) + " does not sum to 1");
        }
    }
    if (std::abs(m.initial.sum() - 1.0) > 1e-12) {
        throw std::invalid_argument("hmm: initial distribution does not sum to 1");
    }
    if (!(m.variances.array() > 0.0).all()) {
        throw std::invalid_argument("hmm: variances must be positive");
    }
}

Eigen::VectorXd emission_density(const HmmModel& m, double speed)
{
    double offset = 0.0;
    return shifted_emission(m, speed, offset) * std::exp(offset);
}

FilterResult forward_filter(const HmmModel& model, const std::vector<double>& speeds)
{
    validate(model);
    if (speeds.empty()) {
        throw std::invalid_argument("forward_filter: empty observation sequence");
    }
    check_sequence(speeds);
    HmmFilter f(model);
    FilterResult r;
    r.posteriors.resize(static_cast<Eigen::Index>(speeds.size()), model.states());
    for (std::size_t t = 0; t < speeds.size(); ++t) {
        r.posteriors.row(static_cast<Eigen::Index>(t)) = f.step(speeds[t]).transpose();
    }
    r.log_likelihood = f.log_likelihood();
    f.posterior().maxCoeff(&r.most_probable);
    return r;
}

HmmFilter::HmmFilter(HmmModel model) : model_(std::move(model))
{
    validate(model_);
    posterior_ = model_.initial;
}

const Eigen::VectorXd& HmmFilter::step(double speed)
{
    if (!std::isfinite(speed) || speed < 0.0) {
        throw std::invalid_argument("hmm filter: speed must be finite and non-negative");
    }
    double offset = 0.0;
    const Eigen::VectorXd dens = shifted_emission(model_, speed, offset);
    const Eigen::VectorXd prior = started_ ? Eigen::VectorXd(model_.transition.transpose() * posterior_) : model_.initial;
    Eigen::VectorXd a = prior.cwiseProduct(dens);
    const double c = a.sum();
    if (!(c > 0.0)) {
        // Nothing explains the observation; fall back to the prior belief.
        posterior_ = prior;
        log_likelihood_ = -std::numeric_limits<double>::infinity();
    } else {
        posterior_ = a / c;
        log_likelihood_ += std::log(c) + offset;
    }
    started_ = true;
    return posterior_;
}

HmmModel sort_states_by_mean(const HmmModel& m)
{
    const Eigen::Index k = m.states();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return m.means(a) < m.means(b); });
    HmmModel out;
    out.transition = m.transition(order, order);
    out.means = m.means(order);
    out.variances = m.variances(order);
    out.initial = m.initial(order);
    return out;
}

BaumWelchResult baum_welch_from(const HmmModel& start, const std::vector<std::vector<double>>& sequences,
                                const BaumWelchOptions& options)
{
    validate(start);
    if (sequences.empty()) {
        throw std::invalid_argument("baum_welch: no training sequences");
    }
    for (const auto& s : sequences) {
        if (s.size() < 2) {
            throw std::invalid_argument("baum_welch: every sequence needs at least 2 observations");
        }
        check_sequence(s);
    }
    if (options.max_iter < 1) {
        throw std::invalid_argument("baum_welch: max_iter must be at least 1");
    }
    BaumWelchResult r;
    r.model = start;
    double ll = 0.0;
    for (int it = 0; it < options.max_iter; ++it) {
        HmmModel next = em_step(r.model, sequences, options.variance_floor, ll);
        r.log_likelihoods.push_back(ll);
        r.model = std::move(next);
        ++r.iterations;
        if (r.log_likelihoods.size() >= 2) {
            const double gain = ll - r.log_likelihoods[r.log_likelihoods.size() - 2];
            if (gain < options.tol) {
                r.converged = true;
                break;
            }
        }
    }
    r.log_likelihoods.push_back(corpus_log_likelihood(r.model, sequences));
    if (!r.converged) {
        r.converged = r.log_likelihoods.back() - r.log_likelihoods[r.log_likelihoods.size() - 2] < options.tol;
    }
    // Row sums drift by an ulp or two; renormalize so validate() holds.
    for (Eigen::Index i = 0; i < r.model.states(); ++i) {
        r.model.transition.row(i) /= r.model.transition.row(i).sum();
    }
    r.model.initial /= r.model.initial.sum();
    return r;
}

BaumWelchResult baum_welch(const std::vector<std::vector<double>>& sequences, Eigen::Index n_states,
                           const BaumWelchOptions& options)
{
    if (n_states < 1) {
        throw std::invalid_argument("baum_welch: need at least one state");
    }
    std::vector<double> pooled;
    for (const auto& s : sequences) {
        pooled.insert(pooled.end(), s.begin(), s.end());
    }
    if (pooled.empty()) {
        throw std::invalid_argument("baum_welch: no training sequences");
    }
    check_sequence(pooled);
    std::sort(pooled.begin(), pooled.end());
    const double mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / static_cast<double>(pooled.size());
    double var = 0.0;
    for (double v : pooled) {
        var += (v - mean) * (v - mean);
    }
    var = std::max(options.variance_floor, var / static_cast<double>(pooled.size()));

    HmmModel start;
    const Eigen::Index k = n_states;
    start.means.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
        const auto at = static_cast<std::size_t>(q * static_cast<double>(pooled.size() - 1));
        start.means(i) = pooled[at];
    }
    start.variances = Eigen::VectorXd::Constant(k, var);
    start.initial = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    if (k == 1) {
        start.transition = Eigen::MatrixXd::Ones(1, 1);
    } else {
        start.transition = Eigen::MatrixXd::Constant(k, k, 0.2 / static_cast<double>(k - 1));
        start.transition.diagonal().setConstant(0.8);
    }
    auto r = baum_welch_from(start, sequences, options);
    r.model = sort_states_by_mean(r.model);
    return r;
}

SafetyState classify(const Eigen::VectorXd& posterior)
{
    if (posterior.size() != 3) {
        throw std::invalid_argument("classify: posterior must have 3 entries");
    }
    Eigen::Index best = 2;
    for (Eigen::Index i = 1; i >= 0; --i) {
        if (posterior(i) > posterior(best)) {
            best = i;
        }
    }
    return static_cast<SafetyState>(best);
}

void write_hmm(std::ostream& out, const HmmModel& m)
{
    validate(m);
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    out << kHeader << '\n';
    for (Eigen::Index i = 0; i < m.states(); ++i) {
        for (Eigen::Index j = 0; j < m.states(); ++j) {
            out << (j ? " " : "") << num(m.transition(i, j));
        }
        out << '\n';
    }
    for (Eigen::Index i = 0; i < m.states(); ++i) {
        out << num(m.means(i)) << ' ' << num(m.variances(i)) << '\n';
    }
    for (Eigen::Index i = 0; i < m.states(); ++i) {
        out << (i ? " " : "") << num(m.initial(i));
    }
    out << '\n';
}

void write_hmm(const std::filesystem::path& path, const HmmModel& m)
{
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    write_hmm(f, m);
}

HmmModel read_hmm(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line != kHeader) {
        throw std::runtime_error(std::string("hmm model: first line must be '") + kHeader + "'");
    }
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::vector<double> row;
        std::string tok;
        while (ss >> tok) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(tok, &used));
                if (used != tok.size()) {
                    throw std::invalid_argument(tok);
                }
            } catch (const std::exception&) {
                throw std::runtime_error("hmm model: line " + std::to_string(lineno) + ": bad number '" + tok + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    const std::size_t k = 3;
    if (rows.size() != 2 * k + 1) {
        throw std::runtime_error("hmm model: expected 7 data lines, found " + std::to_string(rows.size()));
    }
    HmmModel m;
    m.transition.resize(k, k);
    m.means.resize(k);
    m.variances.resize(k);
    m.initial.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        if (rows[i].size() != k || rows[k + i].size() != 2) {
            throw std::runtime_error("hmm model: malformed line " + std::to_string(i + 2));
        }
        for (std::size_t j = 0; j < k; ++j) {
            m.transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
        m.means(static_cast<Eigen::Index>(i)) = rows[k + i][0];
        m.variances(static_cast<Eigen::Index>(i)) = rows[k + i][1];
    }
    if (rows[2 * k].size() != k) {
        throw std::runtime_error("hmm model: malformed initial line");
    }
    for (std::size_t j = 0; j < k; ++j) {
        m.initial(static_cast<Eigen::Index>(j)) = rows[2 * k][j];
    }
    try {
        validate(m);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("hmm model: ") + e.what());
    }
    return m;
}

HmmModel read_hmm(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot open HMM model " + path.string());
    }
    return read_hmm(f);
}

} // namespace elte
