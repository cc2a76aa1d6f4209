#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cugro/continual.hpp"

namespace cugro {

/// Flat key=value experiment configuration. Every field has a default;
/// unknown keys are rejected at parse time; serialize() emits a canonical
/// form that parses back to an equal structure.
struct ExperimentConfig {
    // tasks
    std::string family = "dir";
    int tasks = 3;
    int horizon = 50;
    /// Per-task family parameters, ';'-separated (dir: angle in radians,
    /// vel: target speed, dyn: friction:mass). Empty derives them from
    /// task_seed.
    std::string task_params;
    std::uint64_t task_seed = 7;

    // data
    std::string quality = "replay";
    std::size_t transitions_per_task = 5000;
    double gamma = 0.99;
    std::string data_dir = "data";

    // sequence
    std::string variant = "diffusion";
    double beta = 1.0;
    double lambda = 1.0;
    std::size_t replay_per_task = 0;
    std::uint64_t seed = 1;
    int stop_after = 0;
    bool strict_checks = false;

    // diffusion schedule
    double beta_min = 0.1;
    double beta_max = 20.0;
    int diffusion_steps = 100;
    double t_min = 1e-3;

    // networks
    std::size_t hidden = 256;
    std::size_t depth = 2;
    std::size_t time_embed = 16;
    std::size_t task_embed = 16;
    std::size_t critic_hidden = 256;
    std::size_t critic_layers = 2;

    // training
    std::size_t batch = 256;
    std::size_t behavior_epochs = 150;
    std::size_t state_epochs = 150;
    std::size_t critic_epochs = 100;
    int value_iterations = 1;
    int value_actions = 16;
    std::string value_weighting = "mean";
    double lr = 1e-4;

    // policy / evaluation
    double alpha = 10.0;
    int candidates = 32;
    std::string selection = "softmax";
    int eval_episodes = 10;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_file(const std::filesystem::path& path);
    std::string serialize() const;

    bool operator==(const ExperimentConfig&) const = default;

    /// Materializes the task list (explicit params or seeded draws).
    std::vector<TaskSpec> make_tasks() const;
    SequenceConfig to_sequence_config() const;

    /// data_dir/task<k>_<quality>.ds
    std::filesystem::path dataset_path(int task_id) const;
    std::filesystem::path dataset_path(int task_id, const std::string& quality_name) const;
};

}  // namespace cugro
