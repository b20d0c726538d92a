#include "elte/executor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace elte {

const char* to_string(ExecPhase p)
{
    switch (p) {
    case ExecPhase::Forward: return "Forward";
    case ExecPhase::Pause: return "Pause";
    case ExecPhase::Reverse: return "Reverse";
    case ExecPhase::TargetTracking: return "TargetTracking";
    case ExecPhase::Retract: return "Retract";
    case ExecPhase::Done: return "Done";
    }
    return "?";
}

const char* to_string(Method m)
{
    return m == Method::Elte ? "elte" : "dmp";
}

ExecState fsm_step(const ExecState& s, SafetyState safety)
{
    if (s.nodes < 1 || s.cursor < 0 || s.cursor >= s.nodes) {
        throw std::invalid_argument("fsm_step: cursor outside the plan");
    }
    ExecState n = s;
    n.tick = s.tick + 1;
    const Eigen::Index last = s.nodes - 1;
    switch (s.phase) {
    case ExecPhase::Done:
        break;
    case ExecPhase::Retract:
        if (safety == SafetyState::Forward) {
            n.phase = ExecPhase::Forward;
        } else if (s.cursor == 0) {
            n.phase = ExecPhase::Done;
        } else {
            n.cursor = s.cursor - 1;
        }
        break;
    case ExecPhase::TargetTracking:
        if (safety == SafetyState::Reverse) {
            n.phase = ExecPhase::Retract;
            n.cursor = std::max<Eigen::Index>(s.cursor - 1, 0);
        } else if (safety == SafetyState::Pause) {
            n.phase = ExecPhase::Pause;
        }
        break;
    case ExecPhase::Forward:
    case ExecPhase::Pause:
    case ExecPhase::Reverse:
        if (safety == SafetyState::Pause) {
            n.phase = ExecPhase::Pause;
        } else if (safety == SafetyState::Reverse) {
            n.phase = ExecPhase::Reverse;
            n.cursor = std::max<Eigen::Index>(s.cursor - 1, 0);
        } else if (s.phase == ExecPhase::Reverse) {
            // Leave the cursor where the retrace stopped; the suffix gets
            // re-solved from here before the next advance.
            n.phase = ExecPhase::Forward;
        } else if (s.cursor == last) {
            n.phase = ExecPhase::TargetTracking;
        } else {
            n.phase = ExecPhase::Forward;
            n.cursor = s.cursor + 1;
        }
        break;
    }
    return n;
}

class Planner {
public:
    virtual ~Planner() = default;
    /// Refreshes the plan toward `endpoint`. Returns true when a solve ran.
    virtual bool replan(Eigen::Index cursor, const Eigen::VectorXd& endpoint, double radius, bool force) = 0;
    virtual Eigen::VectorXd point(Eigen::Index cursor) = 0;
    /// Command while following the target; `endpoint` is the fresh forecast.
    virtual Eigen::VectorXd track(const Eigen::VectorXd& endpoint) = 0;
    virtual void rewind(Eigen::Index cursor) = 0;
    virtual Trajectory plan() const = 0;
    int solves = 0;
};

namespace {

class ElasticPlanner final : public Planner {
public:
    ElasticPlanner(const Trajectory& demo, const PipelineConfig& cfg, double threshold)
        : problem_{demo, cfg.weights, {}, {}}, current_(demo), threshold_(threshold)
    {
        problem_.constraints.push_back(PointConstraint::attract(0, demo.front()));
        problem_.constraints.insert(problem_.constraints.end(), cfg.constraints.begin(), cfg.constraints.end());
    }

    bool replan(Eigen::Index cursor, const Eigen::VectorXd& endpoint, double radius, bool force) override
    {
        if (solved_ && !force && (endpoint - last_endpoint_).norm() <= threshold_) {
            return false;
        }
        const Eigen::Index n = problem_.demonstration.size();
        const Eigen::Index rows = std::min(cursor + 1, n - 1);
        if (rows < 2) {
            auto p = problem_;
            const Eigen::Index last = n - 1;
            std::erase_if(p.constraints, [&](const PointConstraint& c) {
                return c.index == last && c.kind == ConstraintKind::Attract;
            });
            p.constraints.push_back(PointConstraint::attract(last, endpoint, radius));
            current_ = reproduce(p);
        } else {
            auto p = problem_;
            p.prefix = current_.points().topRows(rows);
            current_ = adapt_suffix(p, endpoint, radius);
        }
        solved_ = true;
        last_endpoint_ = endpoint;
        ++solves;
        return true;
    }

    Eigen::VectorXd point(Eigen::Index cursor) override { return current_.point(cursor); }
    Eigen::VectorXd track(const Eigen::VectorXd& endpoint) override { return endpoint; }
    void rewind(Eigen::Index) override {}
    Trajectory plan() const override { return current_; }

private:
    ElasticProblem problem_;
    Trajectory current_;
    double threshold_;
    bool solved_ = false;
    Eigen::VectorXd last_endpoint_;
};

class DmpPlanner final : public Planner {
public:
    DmpPlanner(const Trajectory& demo, const PipelineConfig& cfg)
        : model_(dmp_train(demo, cfg.dmp)), goal_(demo.back()), dt_(cfg.dt)
    {
        history_.emplace_back(model_, demo.front(), cfg.dt);
    }

    bool replan(Eigen::Index, const Eigen::VectorXd& endpoint, double, bool) override
    {
        goal_ = endpoint; // instantaneous substitution, no solve involved
        return false;
    }

    Eigen::VectorXd point(Eigen::Index cursor) override
    {
        while (static_cast<Eigen::Index>(history_.size()) <= cursor) {
            DmpIntegrator next = history_.back();
            next.step(goal_);
            history_.push_back(std::move(next));
        }
        return history_[static_cast<std::size_t>(cursor)].position();
    }

    Eigen::VectorXd track(const Eigen::VectorXd& endpoint) override
    {
        goal_ = endpoint;
        return history_.back().step(goal_);
    }

    void rewind(Eigen::Index cursor) override
    {
        history_.resize(static_cast<std::size_t>(cursor) + 1, history_.front());
    }

    Trajectory plan() const override
    {
        const auto n = static_cast<Eigen::Index>(history_.size());
        Eigen::MatrixXd pts(std::max<Eigen::Index>(n, 2), model_.dims());
        for (Eigen::Index i = 0; i < n; ++i) {
            pts.row(i) = history_[static_cast<std::size_t>(i)].position().transpose();
        }
        if (n == 1) {
            pts.row(1) = pts.row(0);
        }
        return Trajectory(pts, dt_);
    }

private:
    DmpModel model_;
    Eigen::VectorXd goal_;
    double dt_;
    std::vector<DmpIntegrator> history_;
};

} // namespace

Pipeline::Pipeline(const Trajectory& demo, HmmModel hmm, PipelineConfig config)
    : config_(std::move(config)), demo_(demo), tracker_(config_.ukf, config_.dt), hmm_(std::move(hmm))
{
    if (hmm_.model().states() != 3) {
        throw std::invalid_argument("pipeline: the safety HMM needs exactly 3 states");
    }
    if (config_.standoff.size() == 0) {
        config_.standoff = Eigen::VectorXd::Zero(demo.dims());
    }
    if (config_.standoff.size() != demo.dims()) {
        throw DimensionError("pipeline: standoff has the wrong dimension");
    }
    if (!(config_.final_radius >= 0.0) || config_.initial_radius < config_.final_radius) {
        throw std::invalid_argument("pipeline: need initial_radius >= final_radius >= 0");
    }
    state_.nodes = demo.size();
    if (config_.method == Method::Elte) {
        planner_ = std::make_unique<ElasticPlanner>(demo, config_, config_.replan_threshold);
    } else {
        planner_ = std::make_unique<DmpPlanner>(demo, config_);
    }
    command_ = demo.front();
}

Pipeline::~Pipeline() = default;
Pipeline::Pipeline(Pipeline&&) noexcept = default;
Pipeline& Pipeline::operator=(Pipeline&&) noexcept = default;

int Pipeline::solves() const
{
    return planner_->solves;
}

Trajectory Pipeline::plan() const
{
    return planner_->plan();
}

TickRecord Pipeline::tick(const std::optional<Eigen::VectorXd>& observation)
{
    const Eigen::Index d = demo_.dims();
    TickRecord rec;
    rec.tick = state_.tick;

    const auto seen = tracker_.observe(observation);
    rec.dropout = seen.dropout || seen.rejected;
    rec.observation = rec.dropout ? Eigen::VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN())
                                  : *observation;

    const Eigen::Index last = state_.nodes - 1;
    const Eigen::Index remaining = std::max<Eigen::Index>(last - state_.cursor, 1);
    Eigen::VectorXd endpoint = demo_.back();
    if (tracker_.initialized()) {
        endpoint = tracker_.forecast(static_cast<double>(remaining) * config_.dt).position + config_.standoff;
    }
    rec.forecast = endpoint - config_.standoff;

    const ExecPhase phase = state_.phase;
    const bool planning = phase == ExecPhase::Forward || phase == ExecPhase::Pause
                          || phase == ExecPhase::TargetTracking;
    if (planning) {
        const double progress = phase == ExecPhase::TargetTracking
                                    ? 1.0
                                    : static_cast<double>(state_.cursor) / static_cast<double>(last);
        const double radius = shrink_radius_schedule(config_.initial_radius, config_.final_radius, progress);
        try {
            rec.replanned = planner_->replan(state_.cursor, endpoint, radius, resume_pending_ || !have_plan_);
            have_plan_ = true;
            resume_pending_ = false;
        } catch (const InfeasibleError&) {
            rec.infeasible = true;
        }
    }

    rec.speed = tracker_.speed();
    rec.safety = classify(hmm_.step(rec.speed));

    const ExecState before = state_;
    if (retreating_) {
        // Latched: a retreat forced by infeasibility ignores the safety signal.
        state_.tick += 1;
        if (state_.cursor == 0) {
            state_.phase = ExecPhase::Done;
        } else {
            state_.cursor -= 1;
        }
    } else if (rec.infeasible) {
        ++infeasible_streak_;
        state_.tick += 1;
        state_.phase = ExecPhase::Pause;
        if (infeasible_streak_ > config_.max_infeasible_ticks) {
            state_.phase = ExecPhase::Retract;
            state_.cursor = std::max<Eigen::Index>(state_.cursor - 1, 0);
            retreating_ = true;
        }
    } else {
        infeasible_streak_ = 0;
        state_ = fsm_step(state_, rec.safety);
        if ((before.phase == ExecPhase::Reverse || before.phase == ExecPhase::Retract)
            && state_.phase == ExecPhase::Forward) {
            resume_pending_ = true;
        }
    }
    if (state_.cursor < before.cursor) {
        planner_->rewind(state_.cursor);
    }

    switch (state_.phase) {
    case ExecPhase::Forward:
    case ExecPhase::Reverse:
    case ExecPhase::Retract:
        if (have_plan_ || config_.method == Method::Dmp) {
            command_ = planner_->point(state_.cursor);
        }
        break;
    case ExecPhase::TargetTracking:
        command_ = planner_->track(endpoint);
        break;
    case ExecPhase::Pause:
    case ExecPhase::Done:
        break;
    }
    rec.phase = state_.phase;
    rec.cursor = state_.cursor;
    rec.command = command_;
    return rec;
}

} // namespace elte
