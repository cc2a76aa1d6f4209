#include "cugro/env.hpp"

#include <algorithm>
#include <cmath>

namespace cugro {

namespace {

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

double hypot2(double x, double y) { return std::sqrt(x * x + y * y); }

// Proportional controller pushing velocity toward v_des.
Action track_velocity(const State& s, double vx_des, double vy_des) {
    constexpr double kGain = 4.0;
    return {clamp_unit(kGain * (vx_des - s[2])), clamp_unit(kGain * (vy_des - s[3]))};
}

}  // namespace

std::string family_name(TaskFamily f) {
    switch (f) {
        case TaskFamily::kDirReward: return "dir";
        case TaskFamily::kVelReward: return "vel";
        case TaskFamily::kDynShift: return "dyn";
    }
    return "?";
}

TaskFamily family_from_name(const std::string& name) {
    if (name == "dir") return TaskFamily::kDirReward;
    if (name == "vel") return TaskFamily::kVelReward;
    if (name == "dyn") return TaskFamily::kDynShift;
    throw ConfigError("unknown task family '" + name + "' (expected dir|vel|dyn)");
}

std::string quality_name(PolicyQuality q) {
    switch (q) {
        case PolicyQuality::kExpert: return "expert";
        case PolicyQuality::kMedium: return "medium";
        case PolicyQuality::kReplay: return "replay";
    }
    return "?";
}

PolicyQuality quality_from_name(const std::string& name) {
    if (name == "expert") return PolicyQuality::kExpert;
    if (name == "medium") return PolicyQuality::kMedium;
    if (name == "replay") return PolicyQuality::kReplay;
    throw ConfigError("unknown quality '" + name + "' (expected expert|medium|replay)");
}

TaskSpec TaskSpec::dir_reward(int id, double angle, int horizon) {
    TaskSpec t;
    t.family = TaskFamily::kDirReward;
    t.task_id = id;
    t.dir_x = std::cos(angle);
    t.dir_y = std::sin(angle);
    t.horizon = horizon;
    t.validate();
    return t;
}

TaskSpec TaskSpec::vel_reward(int id, double speed, int horizon) {
    TaskSpec t;
    t.family = TaskFamily::kVelReward;
    t.task_id = id;
    t.target_speed = speed;
    t.horizon = horizon;
    t.validate();
    return t;
}

TaskSpec TaskSpec::dyn_shift(int id, double friction_mult, double mass_mult, int horizon) {
    TaskSpec t;
    t.family = TaskFamily::kDynShift;
    t.task_id = id;
    t.friction_mult = friction_mult;
    t.mass_mult = mass_mult;
    t.horizon = horizon;
    t.validate();
    return t;
}

void TaskSpec::validate() const {
    if (task_id < 1) throw ConfigError("task_id must be >= 1");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    switch (family) {
        case TaskFamily::kDirReward: {
            const double n = hypot2(dir_x, dir_y);
            if (std::abs(n - 1.0) > 1e-9) throw ConfigError("DirReward direction must be unit norm");
            break;
        }
        case TaskFamily::kVelReward:
            if (target_speed < 0.0 || target_speed > kMaxSpeed) {
                throw ConfigError("VelReward target speed outside [0, v_max]");
            }
            break;
        case TaskFamily::kDynShift:
            if (friction_mult <= 0.0 || mass_mult <= 0.0) {
                throw ConfigError("DynShift multipliers must be positive");
            }
            break;
    }
}

double task_reward(const TaskSpec& task, const State& s) {
    switch (task.family) {
        case TaskFamily::kDirReward: return s[2] * task.dir_x + s[3] * task.dir_y;
        case TaskFamily::kVelReward: return -std::abs(hypot2(s[2], s[3]) - task.target_speed);
        case TaskFamily::kDynShift: return s[2];
    }
    return 0.0;
}

StepResult step(const TaskSpec& task, const State& s, const Action& a, EnvDiagnostics* diag) {
    for (double v : s) {
        if (!std::isfinite(v)) throw NumericError("env step: non-finite state");
    }
    Action act = a;
    bool clamped = false;
    for (double& v : act) {
        if (v < -1.0 || v > 1.0) {
            v = clamp_unit(v);
            clamped = true;
        }
    }
    if (clamped && diag) ++diag->clamped_actions;

    const double mass = kBaseMass * (task.family == TaskFamily::kDynShift ? task.mass_mult : 1.0);
    const double friction =
        kBaseFriction * (task.family == TaskFamily::kDynShift ? task.friction_mult : 1.0);

    const double r = task_reward(task, s);

    State next;
    next[0] = s[0] + kDt * s[2];
    next[1] = s[1] + kDt * s[3];
    double vx = (s[2] + kDt * act[0] / mass) * (1.0 - friction * kDt);
    double vy = (s[3] + kDt * act[1] / mass) * (1.0 - friction * kDt);
    const double speed = hypot2(vx, vy);
    if (speed > kMaxSpeed) {
        const double scale = kMaxSpeed / speed;
        vx *= scale;
        vy *= scale;
    }
    next[2] = vx;
    next[3] = vy;
    return {next, r, false};
}

Action scripted_policy(const TaskSpec& task, const State& s, PolicyQuality quality, Rng& rng,
                       double progress) {
    if (quality == PolicyQuality::kReplay) {
        if (progress < 1.0 / 3.0) {
            return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        }
        quality = progress < 2.0 / 3.0 ? PolicyQuality::kMedium : PolicyQuality::kExpert;
    }

    Action expert{};
    switch (task.family) {
        case TaskFamily::kDirReward:
            expert = track_velocity(s, task.dir_x * kMaxSpeed, task.dir_y * kMaxSpeed);
            break;
        case TaskFamily::kVelReward: {
            const double speed = hypot2(s[2], s[3]);
            double ux = 1.0, uy = 0.0;
            if (speed > 0.05) {
                ux = s[2] / speed;
                uy = s[3] / speed;
            }
            expert = track_velocity(s, ux * task.target_speed, uy * task.target_speed);
            break;
        }
        case TaskFamily::kDynShift:
            expert = track_velocity(s, kMaxSpeed, 0.0);
            break;
    }
    if (quality == PolicyQuality::kMedium) {
        expert[0] = clamp_unit(expert[0] + 0.3 * rng.normal());
        expert[1] = clamp_unit(expert[1] + 0.3 * rng.normal());
    }
    return expert;
}

State sample_start_state(Rng& rng) {
    return {0.3 * rng.normal(), 0.3 * rng.normal(), 0.2 * rng.normal(), 0.2 * rng.normal()};
}

std::vector<Trajectory> collect_trajectories(const TaskSpec& task, PolicyQuality quality,
                                             std::size_t n_transitions, std::uint64_t seed,
                                             EnvDiagnostics* diag) {
    task.validate();
    if (n_transitions < static_cast<std::size_t>(task.horizon)) {
        throw ConfigError("collect: n_transitions must be >= horizon");
    }
    Rng rng(seed);
    std::vector<Trajectory> out;
    std::size_t total = 0;
    while (total < n_transitions) {
        Trajectory traj;
        State s = sample_start_state(rng);
        for (int i = 0; i < task.horizon; ++i) {
            const double progress =
                n_transitions <= 1 ? 1.0
                                   : static_cast<double>(total + static_cast<std::size_t>(i)) /
                                         static_cast<double>(n_transitions - 1);
            const Action a = scripted_policy(task, s, quality, rng, std::min(progress, 1.0));
            StepResult sr = step(task, s, a, diag);
            const bool done = i + 1 == task.horizon;
            traj.steps.push_back({s, a, sr.r, sr.s_next, done});
            s = sr.s_next;
        }
        total += traj.steps.size();
        out.push_back(std::move(traj));
    }
    return out;
}

}  // namespace cugro
