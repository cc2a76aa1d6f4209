#include <doctest.h>

#include <cmath>

#include "cugro/dataset.hpp"
#include "cugro/env.hpp"

using namespace cugro;

TEST_CASE("reward examples are exact") {
    // DirReward: velocity (1, 0) along direction (1, 0) scores 1.
    TaskSpec dir = TaskSpec::dir_reward(1, 0.0);
    State s{0.0, 0.0, 1.0, 0.0};
    CHECK(task_reward(dir, s) == 1.0);

    // VelReward: speed exactly at target scores 0, its maximum.
    TaskSpec vel = TaskSpec::vel_reward(1, 1.0);
    State at_target{0.0, 0.0, 0.6, 0.8};
    CHECK(task_reward(vel, at_target) == 0.0);
    State off_target{0.0, 0.0, 1.5, 0.0};
    CHECK(task_reward(vel, off_target) < 0.0);
}

TEST_CASE("step is pure and deterministic") {
    TaskSpec t = TaskSpec::dir_reward(1, 0.3);
    State s{0.1, -0.2, 0.5, 0.4};
    Action a{0.3, -0.9};
    const StepResult r1 = step(t, s, a);
    const StepResult r2 = step(t, s, a);
    CHECK(r1.s_next == r2.s_next);
    CHECK(r1.r == r2.r);
}

TEST_CASE("DynShift: doubling mass halves the velocity change from rest") {
    TaskSpec m1 = TaskSpec::dyn_shift(1, 1.0, 1.0);
    TaskSpec m2 = TaskSpec::dyn_shift(1, 1.0, 2.0);
    State s{0.0, 0.0, 0.0, 0.0};
    Action a{0.8, -0.4};
    const StepResult r1 = step(m1, s, a);
    const StepResult r2 = step(m2, s, a);
    CHECK(r2.s_next[2] == doctest::Approx(0.5 * r1.s_next[2]).epsilon(1e-12));
    CHECK(r2.s_next[3] == doctest::Approx(0.5 * r1.s_next[3]).epsilon(1e-12));

    // Hand integration from rest: v' = (dt a / m)(1 - f dt).
    const double expect = (kDt * 0.8 / 1.0) * (1.0 - kBaseFriction * kDt);
    CHECK(r1.s_next[2] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("position integrates the pre-step velocity") {
    TaskSpec t = TaskSpec::dir_reward(1, 0.0);
    State s{1.0, 2.0, 0.4, -0.6};
    const StepResult r = step(t, s, {0.0, 0.0});
    CHECK(r.s_next[0] == doctest::Approx(1.0 + kDt * 0.4).epsilon(1e-15));
    CHECK(r.s_next[1] == doctest::Approx(2.0 - kDt * 0.6).epsilon(1e-15));
}

TEST_CASE("out-of-bounds actions are clamped and counted") {
    TaskSpec t = TaskSpec::dir_reward(1, 0.0);
    State s{0.0, 0.0, 0.0, 0.0};
    EnvDiagnostics diag;
    const StepResult a = step(t, s, {5.0, 0.0}, &diag);
    const StepResult b = step(t, s, {1.0, 0.0}, &diag);
    CHECK(diag.clamped_actions == 1);
    CHECK(a.s_next == b.s_next);
}

TEST_CASE("speed is capped at v_max") {
    TaskSpec t = TaskSpec::dyn_shift(1, 0.1, 0.1);  // light, slippery
    State s{0.0, 0.0, kMaxSpeed, 0.0};
    const StepResult r = step(t, s, {1.0, 0.0});
    const double speed = std::hypot(r.s_next[2], r.s_next[3]);
    CHECK(speed <= kMaxSpeed + 1e-12);
}

TEST_CASE("expert policy idles at the VelReward target") {
    TaskSpec t = TaskSpec::vel_reward(1, 1.2);
    State s{0.0, 0.0, 1.2, 0.0};  // moving at target speed along +x
    Rng rng(1);
    const Action a = scripted_policy(t, s, PolicyQuality::kExpert, rng);
    CHECK(std::abs(a[0]) < 1e-12);
    CHECK(std::abs(a[1]) < 1e-12);
}

TEST_CASE("medium policy is expert plus zero-mean noise") {
    TaskSpec t = TaskSpec::dir_reward(1, 0.0);
    State s{0.0, 0.0, 0.3, -0.1};
    Rng rng(2);
    const Action expert = scripted_policy(t, s, PolicyQuality::kExpert, rng);
    double mean0 = 0.0, mean1 = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Action a = scripted_policy(t, s, PolicyQuality::kMedium, rng);
        mean0 += a[0];
        mean1 += a[1];
    }
    mean0 /= n;
    mean1 /= n;
    // Clamping skews components near the box edge, so compare only the
    // interior one; the expert's y-component sits well inside.
    CHECK(std::abs(mean1 - expert[1]) < 0.02);
}

TEST_CASE("replay tier's early phase is uniform over the action box") {
    TaskSpec t = TaskSpec::dir_reward(1, 0.0);
    State s{0.0, 0.0, 0.0, 0.0};
    Rng rng(3);
    double mean0 = 0.0, mean1 = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Action a = scripted_policy(t, s, PolicyQuality::kReplay, rng, 0.1);
        CHECK(a[0] >= -1.0);
        CHECK(a[0] <= 1.0);
        mean0 += a[0];
        mean1 += a[1];
    }
    CHECK(std::abs(mean0 / n) < 0.05);
    CHECK(std::abs(mean1 / n) < 0.05);
}

TEST_CASE("collect: 1000 transitions at horizon 50 gives exactly 20 trajectories") {
    TaskSpec t = TaskSpec::dir_reward(1, 0.5);
    const auto trajs = collect_trajectories(t, PolicyQuality::kExpert, 1000, 11);
    CHECK(trajs.size() == 20);
    for (const Trajectory& traj : trajs) CHECK(traj.steps.size() == 50);
}

TEST_CASE("collect is bit-deterministic under a fixed seed") {
    TaskSpec t = TaskSpec::vel_reward(1, 1.0);
    const OfflineDataset a = collect_dataset(t, PolicyQuality::kReplay, 600, 21);
    const OfflineDataset b = collect_dataset(t, PolicyQuality::kReplay, 600, 21);
    CHECK(a.states.data == b.states.data);
    CHECK(a.actions.data == b.actions.data);
    CHECK(a.rewards == b.rewards);
    CHECK(a.rtg == b.rtg);
}

TEST_CASE("trajectory chaining: s_next of step i equals s of step i+1") {
    TaskSpec t = TaskSpec::dyn_shift(1, 1.3, 0.8);
    const auto trajs = collect_trajectories(t, PolicyQuality::kMedium, 400, 5);
    for (const Trajectory& traj : trajs) {
        for (std::size_t i = 0; i + 1 < traj.steps.size(); ++i) {
            CHECK(traj.steps[i].s_next == traj.steps[i + 1].s);
        }
        CHECK(traj.steps.back().done);
    }
}

TEST_CASE("quality ordering: expert > medium > uniform mean return per family") {
    auto uniform_return = [](const TaskSpec& task, std::uint64_t seed) {
        // The replay tier's first third draws uniform actions; pin
        // progress there to probe the uniform policy.
        Rng rng(seed);
        double total = 0.0;
        const int episodes = 12;
        for (int e = 0; e < episodes; ++e) {
            State s = sample_start_state(rng);
            for (int i = 0; i < task.horizon; ++i) {
                const Action a = scripted_policy(task, s, PolicyQuality::kReplay, rng, 0.0);
                const StepResult r = step(task, s, a);
                total += r.r;
                s = r.s_next;
            }
        }
        return total / episodes;
    };
    const std::vector<TaskSpec> tasks = {TaskSpec::dir_reward(1, 1.0),
                                         TaskSpec::vel_reward(1, 1.5),
                                         TaskSpec::dyn_shift(1, 1.2, 1.1)};
    for (const TaskSpec& task : tasks) {
        const double expert =
            collect_dataset(task, PolicyQuality::kExpert, 600, 31).mean_return();
        const double medium =
            collect_dataset(task, PolicyQuality::kMedium, 600, 31).mean_return();
        const double uniform = uniform_return(task, 31);
        CHECK(expert > medium);
        CHECK(medium > uniform);
    }
}

TEST_CASE("task spec validation") {
    CHECK_THROWS_AS(TaskSpec::vel_reward(1, 5.0), ConfigError);
    CHECK_THROWS_AS(TaskSpec::dyn_shift(1, -1.0, 1.0), ConfigError);
    CHECK_THROWS_AS(TaskSpec::dir_reward(0, 0.0), ConfigError);
    TaskSpec bad = TaskSpec::dir_reward(1, 0.0);
    bad.dir_x = 2.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
