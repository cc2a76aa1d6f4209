#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cugro/error.hpp"
#include "cugro/rng.hpp"

namespace cugro {

enum class TaskFamily { kDirReward, kVelReward, kDynShift };

std::string family_name(TaskFamily f);
TaskFamily family_from_name(const std::string& name);

using State = std::array<double, 4>;   // px, py, vx, vy
using Action = std::array<double, 2>;  // ax, ay in [-1, 1]

constexpr std::size_t kStateDim = 4;
constexpr std::size_t kActionDim = 2;
constexpr double kDt = 0.05;
constexpr double kBaseFriction = 0.1;
constexpr double kBaseMass = 1.0;
constexpr double kMaxSpeed = 2.0;

/// One task of a continual sequence. Families vary either the reward
/// (target direction / target speed) or the dynamics (friction & mass
/// multipliers) of a 2-D point mass.
struct TaskSpec {
    TaskFamily family = TaskFamily::kDirReward;
    int task_id = 1;  // 1-based, consecutive within a sequence
    double dir_x = 1.0, dir_y = 0.0;
    double target_speed = 1.0;
    double friction_mult = 1.0, mass_mult = 1.0;
    int horizon = 50;

    static TaskSpec dir_reward(int id, double angle, int horizon = 50);
    static TaskSpec vel_reward(int id, double speed, int horizon = 50);
    static TaskSpec dyn_shift(int id, double friction_mult, double mass_mult, int horizon = 50);

    void validate() const;
};

struct Transition {
    State s;
    Action a;
    double r;
    State s_next;
    bool done;
};

struct Trajectory {
    std::vector<Transition> steps;
};

/// Counters surfaced by step() and the collectors.
struct EnvDiagnostics {
    std::uint64_t clamped_actions = 0;
};

/// Reward of being in state `s` under the task. DirReward: velocity dot
/// target direction. VelReward: negative speed error. DynShift: forward
/// velocity.
double task_reward(const TaskSpec& task, const State& s);

/// Deterministic point-mass step. Out-of-bounds action components are
/// clamped and counted in `diag` when provided.
struct StepResult {
    State s_next;
    double r;
    bool done;
};
StepResult step(const TaskSpec& task, const State& s, const Action& a,
                EnvDiagnostics* diag = nullptr);

enum class PolicyQuality { kExpert, kMedium, kReplay };

std::string quality_name(PolicyQuality q);
PolicyQuality quality_from_name(const std::string& name);

/// Scripted behavior policies standing in for trained data collectors.
/// `progress` in [0,1] is the fraction of the collection run completed; the
/// replay tier moves uniform -> medium -> expert as it advances.
Action scripted_policy(const TaskSpec& task, const State& s, PolicyQuality quality, Rng& rng,
                       double progress = 1.0);

/// Episode start states; shared across families so task state
/// distributions overlap near the origin.
State sample_start_state(Rng& rng);

/// Rolls full episodes until at least `n_transitions` steps are collected.
std::vector<Trajectory> collect_trajectories(const TaskSpec& task, PolicyQuality quality,
                                             std::size_t n_transitions, std::uint64_t seed,
                                             EnvDiagnostics* diag = nullptr);

}  // namespace cugro
