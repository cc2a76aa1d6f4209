#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "cugro/dataset.hpp"
#include "cugro/diffusion.hpp"
#include "cugro/nn.hpp"
#include "cugro/rng.hpp"

namespace cugro {

/// Action-selection settings for the resampling policy.
struct PolicyConfig {
    enum class Mode { kSoftmax, kArgmax };

    double alpha = 10.0;  // temperature on Q when resampling
    int candidates = 32;  // draws from the behavior model per decision
    Mode mode = Mode::kSoftmax;
};

/// How value_estimate aggregates Q over sampled actions.
enum class ValueWeighting { kMean, kSoftmax };

/// Q network with a shared SiLU backbone and one linear head per task.
/// Heads are only ever appended; head k (1-based) evaluates task k.
struct MultiHeadCritic {
    DenseNet backbone;  // [s | a] -> feature
    std::vector<DenseLayer> heads;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;

    static MultiHeadCritic make(Rng& rng, std::size_t state_dim, std::size_t action_dim,
                                std::size_t hidden, std::size_t hidden_layers, std::size_t heads);

    std::size_t head_count() const { return heads.size(); }
    std::size_t feature_dim() const { return backbone.output_dim(); }
    void add_head(Rng& rng);

    /// Q values of head k for a batch of (state, action) rows; returns [n].
    std::vector<double> q_batch(int k, const Tensor& states, const Tensor& actions) const;
    double q(int k, std::span<const double> state, std::span<const double> action) const;

    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
};

struct CriticGrads {
    NetGrads backbone;
    std::vector<Tensor> head_w;
    std::vector<Tensor> head_b;

    void init(const MultiHeadCritic& c, std::size_t batch);
    void zero();
};

/// Within-trajectory planning backup, computed backward:
///   R_i = r_i + gamma * max(R_{i+1}, V_{i+1}),  R_last = r_last.
/// `values[i]` is the state-value estimate at step i (values[0] is unused);
/// -inf entries disable the planning branch, reducing to discounted RTG.
std::vector<double> bellman_targets(const std::vector<double>& rewards,
                                    const std::vector<double>& values, double gamma);

/// Monte Carlo state values under the behavior model: draws `n_actions`
/// candidates per state and aggregates head-k Q values (plain mean, or
/// exp(alpha Q)-weighted when weighting is kSoftmax).
std::vector<double> value_estimate(const MultiHeadCritic& critic, int k, const Tensor& states,
                                   const BehaviorScoreModel& behavior, int n_actions, Rng& rng,
                                   ValueWeighting weighting = ValueWeighting::kMean,
                                   double alpha = 1.0);

/// Multi-head critic loss: mean squared regression of head-K on `real`
/// targets (carried in real.returns) plus lambda times the mean squared
/// drift of each past head from its old Q labels on the replayed batches.
double critic_loss(const MultiHeadCritic& critic, const Batch& real,
                   const std::vector<Batch>& replayed, double lambda, CriticGrads* grads);

/// Q labels for pseudo pairs from a frozen critic's head k.
std::vector<double> annotate(const MultiHeadCritic& old_critic, int k, const Tensor& states,
                             const Tensor& actions);

/// Unnormalized resampling weights exp(alpha * (q - max q)).
std::vector<double> selection_weights(const std::vector<double>& q, double alpha);

struct SelectionDiag {
    std::uint64_t uniform_fallbacks = 0;
};

/// Draws `cfg.candidates` actions from the behavior model conditioned on a
/// normalized state, then resamples one with weights exp(alpha Q_k) (or
/// takes the argmax). Degenerate weights fall back to a uniform pick and
/// are flagged.
Action select_action(const BehaviorScoreModel& behavior, const MultiHeadCritic& critic, int k,
                     std::span<const double> norm_state, const PolicyConfig& cfg, Rng& rng,
                     SelectionDiag* diag = nullptr);

void save_critic(const MultiHeadCritic& c, const std::filesystem::path& prefix);
MultiHeadCritic load_critic(const std::filesystem::path& prefix);

}  // namespace cugro
