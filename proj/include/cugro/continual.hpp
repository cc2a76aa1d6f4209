#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cugro/adam.hpp"
#include "cugro/critic.hpp"
#include "cugro/dataset.hpp"
#include "cugro/diffusion.hpp"
#include "cugro/env.hpp"

namespace cugro {

enum class ReplayVariant { kDiffusion, kOracle, kNoise, kNone };

std::string variant_name(ReplayVariant v);
ReplayVariant variant_from_name(const std::string& name);

/// Optimization and schedule hyperparameters shared by the per-task
/// training phases.
struct TrainHyper {
    std::size_t batch = 256;
    std::size_t behavior_epochs = 150;
    std::size_t state_epochs = 150;
    std::size_t critic_epochs = 100;
    int value_iterations = 1;  // planning-backup refreshes per task
    int value_actions = 16;
    ValueWeighting value_weighting = ValueWeighting::kMean;
    double lr = 1e-4;
    AdamConfig adam() const { return {lr, 0.9, 0.999, 1e-8}; }
};

struct NetHyper {
    std::size_t hidden = 256;
    std::size_t depth = 2;
    std::size_t time_embed = 16;
    std::size_t task_embed = 16;
    std::size_t critic_hidden = 256;
    std::size_t critic_layers = 2;
};

struct SequenceConfig {
    std::vector<TaskSpec> tasks;
    ReplayVariant variant = ReplayVariant::kDiffusion;
    double beta = 1.0;
    double lambda = 1.0;
    /// Pseudo samples per old task; 0 means |D_K| / (K-1).
    std::size_t replay_per_task = 0;
    std::uint64_t seed = 1;
    double gamma = 0.99;
    VpSchedule sched;
    TrainHyper train;
    NetHyper nets;
    PolicyConfig policy;
    int eval_episodes = 10;
    /// Stop after this many task phases (0 = run the full sequence).
    int stop_after = 0;
    /// Verify frozen-model and head-isolation hashes after every
    /// optimizer step instead of only at phase boundaries.
    bool strict_checks = false;

    void validate() const;
};

/// Everything that crosses a task boundary: the three current models, the
/// per-task state statistics used for cumulative normalization, and the
/// best evaluation returns seen so far.
struct ContinualState {
    StateScoreModel state_gen;
    BehaviorScoreModel behavior_gen;
    MultiHeadCritic critic;
    std::vector<NormStats> stat_history;
    std::vector<double> best_returns;
    int tasks_done = 0;
};

struct MetricsRow {
    int phase = 0;
    int task = 0;
    double mean_return = 0.0;
    double std_return = 0.0;
    double forgetting = 0.0;
    std::string variant;
    std::uint64_t seed = 0;
    double lambda = 1.0;
    double beta = 1.0;
};

struct Metrics {
    std::vector<MetricsRow> rows;

    /// Mean return over all tasks evaluated at `phase`.
    double cumulative_average(int phase) const;
    const MetricsRow* find(int phase, int task) const;
    int last_phase() const;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);
Metrics load_metrics_csv(const std::filesystem::path& path);

struct RunReport {
    Metrics metrics;
    std::uint64_t invariant_checks = 0;
    std::uint64_t uniform_fallbacks = 0;
};

/// FNV-1a over the raw bytes of all parameters, in order.
std::uint64_t param_hash(const std::vector<const Tensor*>& params);

/// Samples n pseudo states for task k from a frozen state generator and
/// pairs them with responses from the frozen behavior generator. States
/// come back in raw space (old_norm is the normalizer those generators
/// were trained under); actions are clamped to the action box.
PseudoDataset generate_pseudo_pairs(const StateScoreModel& old_state_gen,
                                    const BehaviorScoreModel& old_behavior,
                                    const Normalizer& old_norm, int k, std::size_t n, Rng& rng);

using StepHook = std::function<void()>;

/// One behavior-generator phase: denoising regression on the real batch
/// plus beta-weighted replayed terms.
void train_behavior_phase(BehaviorScoreModel& model, const OfflineDataset& ds,
                          const std::vector<const PseudoDataset*>& replay,
                          const Normalizer& norm, double beta, const TrainHyper& hyper,
                          std::uint64_t seed, const StepHook& on_step = {});

/// One state-generator phase (task-conditioned denoising).
void train_state_phase(StateScoreModel& model, const OfflineDataset& ds,
                       const std::vector<const PseudoDataset*>& replay, const Normalizer& norm,
                       double beta, const TrainHyper& hyper, std::uint64_t seed,
                       const StepHook& on_step = {});

/// One critic phase: head-K regression on planning targets with optional
/// behavior-cloning regularization of earlier heads on replayed pairs.
void train_critic_phase(MultiHeadCritic& critic, const OfflineDataset& ds,
                        const std::vector<const PseudoDataset*>& replay, const Normalizer& norm,
                        const BehaviorScoreModel& behavior, double lambda, double gamma,
                        const TrainHyper& hyper, std::uint64_t seed,
                        const StepHook& on_step = {});

struct EvalResult {
    double mean = 0.0;
    double stddev = 0.0;
};

/// Mean episodic return of head-k's policy on `task` over seeded rollouts.
EvalResult evaluate_task(const BehaviorScoreModel& behavior, const MultiHeadCritic& critic,
                         const Normalizer& norm, const TaskSpec& task, int episodes,
                         const PolicyConfig& policy, std::uint64_t seed,
                         SelectionDiag* diag = nullptr);

void save_continual_state(const ContinualState& state, const SequenceConfig& cfg,
                          const std::filesystem::path& dir);
ContinualState load_continual_state(const std::filesystem::path& dir);

/// Runs the sequential-training loop over `datasets` (one per task, in
/// task order). When `run_dir` is non-empty, metrics.csv and per-phase
/// checkpoints are written there and an interrupted run resumes from the
/// latest checkpoint. Fully deterministic under cfg.seed.
RunReport run_sequence(const SequenceConfig& cfg, const std::vector<OfflineDataset>& datasets,
                       const std::filesystem::path& run_dir = {});

}  // namespace cugro
