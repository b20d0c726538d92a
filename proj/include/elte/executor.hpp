#pragma once

#include "elte/dmp.hpp"
#include "elte/elastic.hpp"
#include "elte/hmm.hpp"
#include "elte/ukf.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>

namespace elte {

enum class ExecPhase { Forward, Pause, Reverse, TargetTracking, Retract, Done };

const char* to_string(ExecPhase p);

/// Position along the current plan. `nodes` is the plan length T.
struct ExecState {
    ExecPhase phase = ExecPhase::Forward;
    Eigen::Index cursor = 0;
    Eigen::Index nodes = 0;
    Eigen::Index tick = 0;
};

/// One transition of the execution state machine. Total: every (phase,
/// safety) pair has a successor, and the cursor moves by at most one.
ExecState fsm_step(const ExecState& state, SafetyState safety);

enum class Method { Elte, Dmp };

const char* to_string(Method m);

struct PipelineConfig {
    Method method = Method::Elte;
    double dt = 0.02;
    EnergyWeights weights;
    std::vector<PointConstraint> constraints; // extra via/obstacle constraints for ELTE
    double initial_radius = 0.05;
    double final_radius = 0.002;
    double replan_threshold = 0.005; // m of forecast motion before ELTE re-solves
    int max_infeasible_ticks = 10; // consecutive failed solves before a latched retreat
    Eigen::VectorXd standoff;        // demo end minus target; empty means zero
    UkfParams ukf;
    DmpOptions dmp;
};

/// Everything the loop knows after one tick. Truth-dependent fields
/// (target, distance) are filled in by the simulator.
struct TickRecord {
    Eigen::Index tick = 0;
    ExecPhase phase = ExecPhase::Forward;
    Eigen::Index cursor = 0;
    Eigen::VectorXd target;
    Eigen::VectorXd observation; // NaN on dropout
    Eigen::VectorXd forecast;
    Eigen::VectorXd command;
    double speed = 0.0;
    double distance = 0.0;
    SafetyState safety = SafetyState::Forward;
    bool dropout = false;
    bool replanned = false;
    bool infeasible = false;
};

class Planner;

/// Perception -> UKF -> planner -> HMM -> state machine -> command, one call
/// per tick. Single owner, deterministic.
class Pipeline {
public:
    Pipeline(const Trajectory& demo, HmmModel hmm, PipelineConfig config);
    ~Pipeline();
    Pipeline(Pipeline&&) noexcept;
    Pipeline& operator=(Pipeline&&) noexcept;

    TickRecord tick(const std::optional<Eigen::VectorXd>& observation);

    const ExecState& state() const { return state_; }
    /// Number of full ELTE solves (reproduce or adapt_suffix) so far.
    int solves() const;
    /// Current plan (ELTE) or the points generated so far (DMP).
    Trajectory plan() const;

private:
    PipelineConfig config_;
    Trajectory demo_;
    TargetTracker tracker_;
    HmmFilter hmm_;
    ExecState state_;
    std::unique_ptr<Planner> planner_;
    Eigen::VectorXd command_;
    Eigen::VectorXd last_endpoint_;
    bool have_plan_ = false;
    bool resume_pending_ = false;
    int infeasible_streak_ = 0;
    bool retreating_ = false;
};

} // namespace elte
