#pragma once

#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "cugro/dataset.hpp"
#include "cugro/embed.hpp"
#include "cugro/nn.hpp"
#include "cugro/rng.hpp"

namespace cugro {

/// Variance-preserving forward diffusion with a linear beta(t) ramp on
/// continuous time t in (0, 1]:
///   alpha(t) = exp(-t^2 (beta_max - beta_min)/4 - t beta_min/2)
///   sigma(t) = sqrt(1 - alpha(t)^2)
struct VpSchedule {
    double beta_min = 0.1;
    double beta_max = 20.0;
    int steps = 100;
    /// Lower cutoff for sampled training times; keeps sigma away from 0.
    double t_min = 1e-3;

    double beta(double t) const { return beta_min + t * (beta_max - beta_min); }

    /// (alpha_t, sigma_t); throws on t outside (0, 1].
    std::pair<double, double> coeffs(double t) const;

    /// Uniform grid {1/steps, 2/steps, ..., 1}.
    std::vector<double> grid() const;
};

/// x_t = alpha_t x + sigma_t eps, elementwise over one batch at a shared t.
Tensor perturb(const Tensor& x, double t, const Tensor& eps, const VpSchedule& sched);

/// Mean over rows of ||sigma_r * pred_r + eps_r||^2 — the denoising
/// objective as a pure function of its pieces.
double denoise_loss_value(const Tensor& pred, const Tensor& eps, const std::vector<double>& sigmas);

/// State-conditioned score model for actions. Network input rows are
/// [a_t | state | time_embedding(t)].
struct BehaviorScoreModel {
    DenseNet net;
    std::size_t action_dim = 0;
    std::size_t state_dim = 0;
    std::size_t time_dim = 0;
    VpSchedule sched;

    static BehaviorScoreModel make(Rng& rng, std::size_t action_dim, std::size_t state_dim,
                                   std::size_t time_dim, std::size_t width, std::size_t depth,
                                   const VpSchedule& sched);

    Tensor predict(const Tensor& a_t, const Tensor& states, const std::vector<double>& ts,
                   Tape* tape = nullptr) const;
    std::vector<Tensor*> params() { return net.params(); }
    std::vector<const Tensor*> params() const { return net.params(); }
};

/// Task-conditioned score model for states. Network input rows are
/// [s_t | task_embedding(k) | time_embedding(t)]; the task embedding table
/// is learned and only ever grows.
struct StateScoreModel {
    DenseNet net;
    EmbeddingTable task_emb;
    std::size_t state_dim = 0;
    std::size_t time_dim = 0;
    VpSchedule sched;

    static StateScoreModel make(Rng& rng, std::size_t state_dim, std::size_t embed_dim,
                                std::size_t time_dim, std::size_t width, std::size_t depth,
                                std::size_t tasks, const VpSchedule& sched);

    /// Task ids are 1-based.
    Tensor predict(const Tensor& s_t, const std::vector<int>& task_ids,
                   const std::vector<double>& ts, Tape* tape = nullptr) const;
    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
};

/// Gradients for a state model: network parameters plus embedding rows.
struct StateModelGrads {
    NetGrads net;
    Tensor emb;  // same shape as the embedding table

    void init(const StateScoreModel& m, std::size_t batch);
    void zero();
};

/// Denoising losses. Per row r the draws come in a fixed order — one
/// uniform giving t_r = 1 - u (1 - t_min), then one standard normal per
/// data dimension — so an independent recomputation can replay the stream.
/// Gradients accumulate into the containers scaled by `weight`; returned
/// value is the unweighted term.
double behavior_loss_term(const BehaviorScoreModel& m, const Tensor& actions, const Tensor& states,
                          Rng& rng, double weight, NetGrads* grads);
double state_loss_term(const StateScoreModel& m, const Tensor& states,
                       const std::vector<int>& task_ids, Rng& rng, double weight,
                       StateModelGrads* grads);

/// Single-task forms (Eq. of one real batch).
double behavior_loss(const BehaviorScoreModel& m, const Batch& batch, Rng& rng, NetGrads* grads);
double state_loss(const StateScoreModel& m, const Batch& batch, Rng& rng, StateModelGrads* grads);

/// Replay-mixed losses: real term plus beta times one term per past-task
/// batch. Replayed batches must carry task ids strictly below the real one.
double behavior_replay_loss(const BehaviorScoreModel& m, const MixedStep& step, Rng& rng,
                            NetGrads* grads);
double state_replay_loss(const StateScoreModel& m, const MixedStep& step, Rng& rng,
                         StateModelGrads* grads);

/// Score callback: given x_t [n, d] and t, returns the estimated score of
/// the perturbed marginal (which is what the trained nets converge to).
using ScoreFn = std::function<Tensor(const Tensor& x_t, double t)>;

/// Reverse-time Euler-Maruyama over the schedule grid from x ~ N(0, I).
/// No noise is injected on the final step. Throws SamplingError-style
/// NumericError naming the step on divergence.
Tensor reverse_sample(const ScoreFn& score, std::size_t n, std::size_t dim,
                      const VpSchedule& sched, Rng& rng);

/// Draws n states for task k (in the model's normalized space).
Tensor sample_states(const StateScoreModel& m, int task_id, std::size_t n, Rng& rng);

/// Draws one action per conditioning state row.
Tensor sample_actions(const BehaviorScoreModel& m, const Tensor& states, Rng& rng);

void save_behavior_model(const BehaviorScoreModel& m, const std::filesystem::path& prefix);
BehaviorScoreModel load_behavior_model(const std::filesystem::path& prefix);
void save_state_model(const StateScoreModel& m, const std::filesystem::path& prefix);
StateScoreModel load_state_model(const std::filesystem::path& prefix);

}  // namespace cugro
