#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cugro/env.hpp"
#include "cugro/rng.hpp"
#include "cugro/tensor.hpp"

namespace cugro {

/// Published first/second-moment statistics of a dataset's states. These
/// triples are what crosses task boundaries (never the samples themselves),
/// and merging them reconstructs cumulative normalization exactly.
struct NormStats {
    std::uint64_t count = 0;
    std::vector<double> mean;
    std::vector<double> stddev;
};

NormStats compute_norm_stats(const Tensor& rows);
NormStats merge_norm_stats(const std::vector<NormStats>& parts);

/// Affine state normalizer derived from NormStats; stddev floored at 1e-6.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Normalizer identity(std::size_t dim);
    static Normalizer from_stats(const NormStats& stats);

    std::size_t dim() const { return mean.size(); }
    Tensor normalize(const Tensor& rows) const;
    Tensor denormalize(const Tensor& rows) const;
    void normalize_row(std::span<double> row) const;
};

/// Discounted return-to-go per step: R_i = r_i + gamma * R_{i+1}, with the
/// final step's return equal to its reward.
std::vector<double> compute_rtg(const std::vector<double>& rewards, double gamma);

/// Flattened offline dataset of one task, with per-step returns-to-go and
/// state statistics. Immutable after construction/load.
struct OfflineDataset {
    int task_id = 1;
    TaskFamily family = TaskFamily::kDirReward;
    PolicyQuality quality = PolicyQuality::kExpert;
    double gamma = 0.99;
    std::vector<std::uint32_t> traj_lens;
    Tensor states;       // [N, 4]
    Tensor actions;      // [N, 2]
    std::vector<double> rewards;
    Tensor next_states;  // [N, 4]
    std::vector<double> done;
    std::vector<double> rtg;
    NormStats state_stats;

    std::size_t size() const { return rewards.size(); }
    std::size_t n_trajectories() const { return traj_lens.size(); }
    double mean_return() const;

    static OfflineDataset from_trajectories(const TaskSpec& task, PolicyQuality quality,
                                            const std::vector<Trajectory>& trajs, double gamma);
};

/// Collects a dataset with a scripted policy; deterministic under `seed`.
OfflineDataset collect_dataset(const TaskSpec& task, PolicyQuality quality,
                               std::size_t n_transitions, std::uint64_t seed);

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);

enum class BatchSource { kReal, kReplayed };

struct Batch {
    Tensor states;
    Tensor actions;
    std::vector<double> rewards;
    std::vector<double> returns;  // RTG for real rows, Q labels for replayed ones
    Tensor next_states;
    std::vector<int> task_ids;
    std::vector<std::size_t> indices;
    BatchSource source = BatchSource::kReal;

    std::size_t size() const { return task_ids.size(); }
};

Batch gather(const OfflineDataset& ds, std::span<const std::size_t> idx);

/// Uniform transition sampling; `with_replacement=false` requires
/// batch_size <= dataset size and draws a random permutation prefix.
Batch sample_batch(const OfflineDataset& ds, std::size_t batch_size, Rng& rng,
                   bool with_replacement = true);

/// Shuffled full passes over a dataset; the trailing short batch of each
/// epoch is emitted so every transition is fed once per epoch.
class EpochSampler {
public:
    EpochSampler(const OfflineDataset& ds, std::uint64_t seed);
    Batch next(std::size_t batch_size);
    std::size_t steps_per_epoch(std::size_t batch_size) const;

private:
    const OfflineDataset* ds_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

/// Synthetic replay samples for one past task. States are kept in raw
/// (unnormalized) space; consumers apply whichever normalizer they need.
struct PseudoDataset {
    int task_id = 0;
    Tensor states;   // [n, 4] raw space
    Tensor actions;  // [n, 2]
    std::vector<double> q_labels;

    std::size_t size() const { return q_labels.size(); }
};

/// One training step's worth of batches: a real-task batch plus, when past
/// tasks exist and beta > 0, one replayed batch per past task. Mixing is at
/// the loss level; real and replayed rows are never shuffled together.
struct MixedStep {
    Batch real;
    std::vector<Batch> replayed;
    double beta = 1.0;
};

class ReplayMixer {
public:
    ReplayMixer(const OfflineDataset& real, std::vector<const PseudoDataset*> replayed,
                double beta, std::uint64_t seed);

    MixedStep next(std::size_t batch_size);
    std::size_t steps_per_epoch(std::size_t batch_size) const;

private:
    EpochSampler real_;
    std::vector<const PseudoDataset*> replayed_;
    double beta_;
    Rng replay_rng_;
};

}  // namespace cugro
