#include "elte/hmm.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace elte;

namespace {

double gauss(double x, double mean, double var)
{
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// Sum over every hidden path of P(path) P(obs | path).
double brute_force_likelihood(const HmmModel& m, const std::vector<double>& obs)
{
    const auto k = static_cast<std::size_t>(m.states());
    const std::size_t n = obs.size();
    std::vector<std::size_t> path(n, 0);
    double total = 0.0;
    for (;;) {
        double p = m.initial(static_cast<Eigen::Index>(path[0]))
                   * gauss(obs[0], m.means(static_cast<Eigen::Index>(path[0])), m.variances(static_cast<Eigen::Index>(path[0])));
        for (std::size_t t = 1; t < n; ++t) {
            const auto a = static_cast<Eigen::Index>(path[t - 1]);
            const auto b = static_cast<Eigen::Index>(path[t]);
            p *= m.transition(a, b) * gauss(obs[t], m.means(b), m.variances(b));
        }
        total += p;
        std::size_t i = 0;
        while (i < n && ++path[i] == k) {
            path[i] = 0;
            ++i;
        }
        if (i == n) {
            break;
        }
    }
    return total;
}

// Filtered posterior of the last step by brute force, with each step's
// densities multiplied by an arbitrary positive factor.
Eigen::VectorXd brute_force_last_posterior(const HmmModel& m, const std::vector<double>& obs,
                                           const std::vector<double>& factor)
{
    const auto k = static_cast<std::size_t>(m.states());
    const std::size_t n = obs.size();
    std::vector<std::size_t> path(n, 0);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m.states());
    for (;;) {
        auto e = [&](std::size_t t) {
            const auto s = static_cast<Eigen::Index>(path[t]);
            return factor[t] * gauss(obs[t], m.means(s), m.variances(s));
        };
        double p = m.initial(static_cast<Eigen::Index>(path[0])) * e(0);
        for (std::size_t t = 1; t < n; ++t) {
            p *= m.transition(static_cast<Eigen::Index>(path[t - 1]), static_cast<Eigen::Index>(path[t])) * e(t);
        }
        acc(static_cast<Eigen::Index>(path[n - 1])) += p;
        std::size_t i = 0;
        while (i < n && ++path[i] == k) {
            path[i] = 0;
            ++i;
        }
        if (i == n) {
            break;
        }
    }
    return acc / acc.sum();
}

HmmModel random_model(std::mt19937_64& rng, Eigen::Index k)
{
    std::uniform_real_distribution<double> u(0.05, 1.0);
    HmmModel m;
    m.transition = Eigen::MatrixXd::NullaryExpr(k, k, [&] { return u(rng); });
    for (Eigen::Index i = 0; i < k; ++i) {
        m.transition.row(i) /= m.transition.row(i).sum();
    }
    m.initial = Eigen::VectorXd::NullaryExpr(k, [&] { return u(rng); });
    m.initial /= m.initial.sum();
    m.means = Eigen::VectorXd::NullaryExpr(k, [&] { return u(rng); });
    m.variances = Eigen::VectorXd::NullaryExpr(k, [&] { return 0.1 * u(rng); });
    return m;
}

HmmModel truth_model()
{
    HmmModel m;
    m.transition.resize(3, 3);
    m.transition << 0.95, 0.04, 0.01, 0.05, 0.9, 0.05, 0.02, 0.08, 0.9;
    m.means = Eigen::Vector3d(0.02, 0.15, 0.5);
    m.variances = Eigen::Vector3d(0.01 * 0.01, 0.03 * 0.03, 0.08 * 0.08);
    m.initial = Eigen::Vector3d(0.6, 0.3, 0.1);
    return m;
}

std::vector<std::vector<double>> sample(const HmmModel& m, std::mt19937_64& rng, int count, int length)
{
    std::vector<std::vector<double>> out;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&](const Eigen::VectorXd& p) {
        double r = u(rng);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            r -= p(i);
            if (r < 0.0) {
                return i;
            }
        }
        return p.size() - 1;
    };
    for (int c = 0; c < count; ++c) {
        std::vector<double> seq;
        Eigen::Index s = draw(m.initial);
        for (int t = 0; t < length; ++t) {
            std::normal_distribution<double> g(m.means(s), std::sqrt(m.variances(s)));
            seq.push_back(std::abs(g(rng)));
            s = draw(m.transition.row(s).transpose());
        }
        out.push_back(std::move(seq));
    }
    return out;
}

} // namespace

TEST(HmmForward, AbsorbingChainStaysPut)
{
    HmmModel m;
    m.transition = Eigen::Matrix3d::Identity();
    m.initial = Eigen::Vector3d(1, 0, 0);
    m.means = Eigen::Vector3d(0.1, 0.1, 0.1);
    m.variances = Eigen::Vector3d(0.05, 0.05, 0.05);
    const auto r = forward_filter(m, {0.0, 3.0, 0.2, 7.0});
    for (Eigen::Index t = 0; t < 4; ++t) {
        EXPECT_EQ(r.posteriors.row(t), Eigen::RowVector3d(1, 0, 0));
    }
}

TEST(HmmForward, TwoStateLikelihoodMatchesPathEnumeration)
{
    std::mt19937_64 rng(3);
    const auto m = random_model(rng, 2);
    const std::vector<double> obs{0.1, 0.5, 0.3, 0.9, 0.2, 0.4};
    const auto r = forward_filter(m, obs);
    EXPECT_NEAR(r.log_likelihood, std::log(brute_force_likelihood(m, obs)), 1e-12);
}

TEST(HmmForward, LikelihoodMatchesEnumerationForShortSequences)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index k = 1; k <= 3; ++k) {
        for (std::size_t n = 1; n <= 8; ++n) {
            const auto m = random_model(rng, k);
            std::vector<double> obs;
            for (std::size_t t = 0; t < n; ++t) {
                obs.push_back(u(rng));
            }
            const auto r = forward_filter(m, obs);
            const double want = std::log(brute_force_likelihood(m, obs));
            EXPECT_NEAR(r.log_likelihood, want, 1e-12 * std::max(1.0, std::abs(want))) << "k=" << k << " n=" << n;
            for (Eigen::Index t = 0; t < r.posteriors.rows(); ++t) {
                EXPECT_NEAR(r.posteriors.row(t).sum(), 1.0, 1e-10);
            }
        }
    }
}

TEST(HmmForward, PosteriorIgnoresPerStepDensityScale)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto m = random_model(rng, 3);
    std::vector<double> obs;
    std::vector<double> ones;
    std::vector<double> scaled;
    for (int t = 0; t < 7; ++t) {
        obs.push_back(u(rng));
        ones.push_back(1.0);
        scaled.push_back(std::pow(10.0, 6.0 * u(rng) - 3.0));
    }
    const auto r = forward_filter(m, obs);
    const Eigen::VectorXd a = brute_force_last_posterior(m, obs, ones);
    const Eigen::VectorXd b = brute_force_last_posterior(m, obs, scaled);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((r.posteriors.row(6).transpose() - a).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(HmmForward, FastTargetIsReverse)
{
    HmmModel m;
    m.transition = Eigen::Matrix3d::Constant(1.0 / 3.0);
    m.initial = Eigen::Vector3d::Constant(1.0 / 3.0);
    m.means = Eigen::Vector3d(0.02, 0.15, 0.5);
    m.variances = Eigen::Vector3d(0.01, 0.01, 0.01);
    const auto r = forward_filter(m, std::vector<double>(10, 0.5));
    EXPECT_EQ(r.most_probable, 2);
    EXPECT_EQ(classify(r.posteriors.row(9).transpose()), SafetyState::Reverse);
}

TEST(HmmForward, LongSequencesDoNotUnderflow)
{
    const auto m = truth_model();
    std::mt19937_64 rng(6);
    const auto data = sample(m, rng, 1, 200000);
    const auto r = forward_filter(m, data[0]);
    EXPECT_TRUE(std::isfinite(r.log_likelihood));
    EXPECT_NEAR(r.posteriors.bottomRows(1).sum(), 1.0, 1e-10);
}

TEST(HmmForward, RejectsBadInput)
{
    const auto m = truth_model();
    EXPECT_THROW(forward_filter(m, {}), std::invalid_argument);
    EXPECT_THROW(forward_filter(m, {0.1, -0.2}), std::invalid_argument);
    EXPECT_THROW(forward_filter(m, {0.1, std::nan("")}), std::invalid_argument);
    auto bad = m;
    bad.transition(0, 0) += 1e-9;
    EXPECT_THROW(forward_filter(bad, {0.1}), std::invalid_argument);
}

TEST(HmmFilterIncremental, AgreesWithBatch)
{
    const auto m = truth_model();
    std::mt19937_64 rng(7);
    const auto seq = sample(m, rng, 1, 300)[0];
    const auto batch = forward_filter(m, seq);
    HmmFilter f(m);
    for (std::size_t t = 0; t < seq.size(); ++t) {
        f.step(seq[t]);
        EXPECT_LT((f.posterior() - batch.posteriors.row(static_cast<Eigen::Index>(t)).transpose()).cwiseAbs().maxCoeff(),
                  1e-15);
    }
}

TEST(BaumWelch, RecoversGeneratingModel)
{
    const auto truth = truth_model();
    std::mt19937_64 rng(8);
    const auto data = sample(truth, rng, 50, 200);
    const auto r = baum_welch(data, 3);
    for (Eigen::Index i = 0; i < 3; ++i) {
        EXPECT_NEAR(r.model.means(i), truth.means(i), 0.1 * truth.means(i)) << "state " << i;
    }
    EXPECT_NO_THROW(validate(r.model));
}

TEST(BaumWelch, LogLikelihoodIsMonotone)
{
    std::mt19937_64 rng(9);
    const auto truth = truth_model();
    std::vector<std::vector<std::vector<double>>> corpora{sample(truth, rng, 10, 100), sample(truth, rng, 3, 500)};
    for (Eigen::Index k = 2; k <= 3; ++k) {
        corpora.push_back(sample(random_model(rng, k), rng, 5, 80));
    }
    for (const auto& corpus : corpora) {
        const auto r = baum_welch(corpus, 3);
        for (std::size_t i = 1; i < r.log_likelihoods.size(); ++i) {
            EXPECT_GE(r.log_likelihoods[i], r.log_likelihoods[i - 1] - 1e-9);
        }
    }
}

TEST(BaumWelch, OneIterationFromTruthDoesNotLoseLikelihood)
{
    std::mt19937_64 rng(10);
    const auto truth = truth_model();
    const auto data = sample(truth, rng, 20, 100);
    BaumWelchOptions opt;
    opt.max_iter = 1;
    const auto r = baum_welch_from(truth, data, opt);
    ASSERT_EQ(r.log_likelihoods.size(), 2u);
    EXPECT_GE(r.log_likelihoods[1], r.log_likelihoods[0] - 1e-9);
}

TEST(BaumWelch, ConstantDataHitsVarianceFloor)
{
    BaumWelchOptions opt;
    const auto r = baum_welch({std::vector<double>(50, 0.3)}, 3, opt);
    for (Eigen::Index i = 0; i < 3; ++i) {
        EXPECT_EQ(r.model.variances(i), opt.variance_floor);
        EXPECT_DOUBLE_EQ(r.model.means(i), 0.3);
    }
    EXPECT_TRUE(r.converged);
}

TEST(BaumWelch, StatesComeOutSortedByMean)
{
    std::mt19937_64 rng(11);
    const auto r = baum_welch(sample(truth_model(), rng, 10, 200), 3);
    EXPECT_LT(r.model.means(0), r.model.means(1));
    EXPECT_LT(r.model.means(1), r.model.means(2));
}

TEST(BaumWelch, RejectsShortSequences)
{
    EXPECT_THROW(baum_welch({{0.1}}, 3), std::invalid_argument);
    EXPECT_THROW(baum_welch({}, 3), std::invalid_argument);
}

TEST(Classify, ArgmaxWithSafetyTieBreak)
{
    EXPECT_EQ(classify(Eigen::Vector3d(0.9, 0.05, 0.05)), SafetyState::Forward);
    EXPECT_EQ(classify(Eigen::Vector3d(0.4, 0.4, 0.2)), SafetyState::Pause);
    EXPECT_EQ(classify(Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3)), SafetyState::Reverse);
    EXPECT_EQ(classify(Eigen::Vector3d(0.1, 0.2, 0.1)), SafetyState::Pause);
}

TEST(Classify, ScaleInvariant)
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        Eigen::Vector3d p(u(rng), u(rng), u(rng));
        if (i % 5 == 0) {
            p(1) = p(0);
        }
        for (double c : {1e-3, 0.5, 2.0, 1e4}) {
            EXPECT_EQ(classify(c * p), classify(p));
        }
    }
}

TEST(HmmText, RoundTripIsExact)
{
    std::mt19937_64 rng(13);
    const auto m = random_model(rng, 3);
    std::stringstream ss;
    write_hmm(ss, m);
    const auto back = read_hmm(ss);
    EXPECT_EQ(back.transition, m.transition);
    EXPECT_EQ(back.means, m.means);
    EXPECT_EQ(back.variances, m.variances);
    EXPECT_EQ(back.initial, m.initial);
}

TEST(HmmText, RejectsMalformedFiles)
{
    std::stringstream no_header("0.9 0.1 0\n");
    EXPECT_THROW(read_hmm(no_header), std::runtime_error);
    std::stringstream short_file("elte-hmm v1\n1 0 0\n0 1 0\n0 0 1\n0.1 0.01\n");
    EXPECT_THROW(read_hmm(short_file), std::runtime_error);
    std::stringstream bad_row("elte-hmm v1\n0.5 0 0\n0 1 0\n0 0 1\n0.1 0.01\n0.2 0.01\n0.3 0.01\n1 0 0\n");
    EXPECT_THROW(read_hmm(bad_row), std::runtime_error);
}
