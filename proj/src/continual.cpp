#include "cugro/continual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cugro/adam.hpp"
#include "cugro/blobio.hpp"

namespace cugro {

namespace fs = std::filesystem;

std::string variant_name(ReplayVariant v) {
    switch (v) {
        case ReplayVariant::kDiffusion: return "diffusion";
        case ReplayVariant::kOracle: return "oracle";
        case ReplayVariant::kNoise: return "noise";
        case ReplayVariant::kNone: return "none";
    }
    return "?";
}

ReplayVariant variant_from_name(const std::string& name) {
    if (name == "diffusion") return ReplayVariant::kDiffusion;
    if (name == "oracle") return ReplayVariant::kOracle;
    if (name == "noise") return ReplayVariant::kNoise;
    if (name == "none") return ReplayVariant::kNone;
    throw ConfigError("unknown replay variant '" + name +
                      "' (expected diffusion|oracle|noise|none)");
}

void SequenceConfig::validate() const {
    if (tasks.empty()) throw ConfigError("sequence has no tasks");
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        tasks[i].validate();
        if (tasks[i].task_id != static_cast<int>(i) + 1) {
            throw ConfigError("task ids must be consecutive from 1");
        }
    }
    if (beta < 0.0) throw ConfigError("beta must be >= 0");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
    if (train.batch < 1) throw ConfigError("batch must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma outside (0, 1]");
}

double Metrics::cumulative_average(int phase) const {
    double total = 0.0;
    int n = 0;
    for (const MetricsRow& r : rows) {
        if (r.phase == phase) {
            total += r.mean_return;
            ++n;
        }
    }
    if (n == 0) throw Error("metrics: no rows for phase " + std::to_string(phase));
    return total / n;
}

const MetricsRow* Metrics::find(int phase, int task) const {
    for (const MetricsRow& r : rows) {
        if (r.phase == phase && r.task == task) return &r;
    }
    return nullptr;
}

int Metrics::last_phase() const {
    int p = 0;
    for (const MetricsRow& r : rows) p = std::max(p, r.phase);
    return p;
}

std::string metrics_csv_header() {
    return "phase,task,mean_return,std_return,forgetting,variant,seed,lambda,beta";
}

std::string metrics_csv_line(const MetricsRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%d,%.10g,%.10g,%.10g,%s,%llu,%.10g,%.10g", row.phase,
                  row.task, row.mean_return, row.std_return, row.forgetting, row.variant.c_str(),
                  static_cast<unsigned long long>(row.seed), row.lambda, row.beta);
    return buf;
}

Metrics load_metrics_csv(const fs::path& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": empty metrics file");
    if (line != metrics_csv_header()) {
        throw FormatError(path.string() + ": unexpected metrics header");
    }
    Metrics m;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (fields.size() != 9) {
            throw FormatError(path.string() + ": malformed row at line " + std::to_string(lineno));
        }
        try {
            MetricsRow r;
            r.phase = std::stoi(fields[0]);
            r.task = std::stoi(fields[1]);
            r.mean_return = std::stod(fields[2]);
            r.std_return = std::stod(fields[3]);
            r.forgetting = std::stod(fields[4]);
            r.variant = fields[5];
            r.seed = std::stoull(fields[6]);
            r.lambda = std::stod(fields[7]);
            r.beta = std::stod(fields[8]);
            m.rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw FormatError(path.string() + ": malformed row at line " + std::to_string(lineno));
        }
    }
    return m;
}

std::uint64_t param_hash(const std::vector<const Tensor*>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Tensor* t : params) {
        for (double v : t->data) {
            std::uint64_t bits;
            static_assert(sizeof bits == sizeof v);
            std::memcpy(&bits, &v, sizeof bits);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

PseudoDataset generate_pseudo_pairs(const StateScoreModel& old_state_gen,
                                    const BehaviorScoreModel& old_behavior,
                                    const Normalizer& old_norm, int k, std::size_t n, Rng& rng) {
    if (n == 0) throw ConfigError("generate_pseudo_pairs: n must be positive");
    PseudoDataset out;
    out.task_id = k;
    Tensor norm_states;
    try {
        norm_states = sample_states(old_state_gen, k, n, rng);
        out.actions = sample_actions(old_behavior, norm_states, rng);
    } catch (const NumericError& e) {
        throw NumericError("pseudo pair sampling for task " + std::to_string(k) + ": " + e.what());
    }
    for (double& v : out.actions.data) v = std::clamp(v, -1.0, 1.0);
    out.states = old_norm.denormalize(norm_states);
    out.q_labels.assign(n, 0.0);
    return out;
}

namespace {

// Per-phase stream seeds; pure functions of (master seed, phase, role) so
// resumed runs rebuild identical streams.
std::uint64_t phase_seed(std::uint64_t seed, const char* role, int phase, int extra = 0) {
    return derive_seed(seed, {fnv1a64(role), static_cast<std::uint64_t>(phase),
                              static_cast<std::uint64_t>(extra)});
}

void normalize_step(MixedStep& step, const Normalizer& norm) {
    step.real.states = norm.normalize(step.real.states);
    for (Batch& b : step.replayed) b.states = norm.normalize(b.states);
}

std::vector<std::vector<double>> per_trajectory(const OfflineDataset& ds,
                                                const std::vector<double>& flat) {
    std::vector<std::vector<double>> out;
    std::size_t at = 0;
    for (std::uint32_t len : ds.traj_lens) {
        out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(at),
                         flat.begin() + static_cast<std::ptrdiff_t>(at + len));
        at += len;
    }
    return out;
}

}  // namespace

void train_behavior_phase(BehaviorScoreModel& model, const OfflineDataset& ds,
                          const std::vector<const PseudoDataset*>& replay, const Normalizer& norm,
                          double beta, const TrainHyper& hyper, std::uint64_t seed,
                          const StepHook& on_step) {
    ReplayMixer mixer(ds, replay, beta, derive_seed(seed, {fnv1a64("mix")}));
    Rng loss_rng(derive_seed(seed, {fnv1a64("loss")}));
    Adam adam(hyper.adam());
    adam.reset(model.params());
    NetGrads grads;
    grads.init(model.net, hyper.batch);
    const std::size_t steps = hyper.behavior_epochs * mixer.steps_per_epoch(hyper.batch);
    for (std::size_t s = 0; s < steps; ++s) {
        MixedStep step = mixer.next(hyper.batch);
        normalize_step(step, norm);
        grads.zero();
        behavior_replay_loss(model, step, loss_rng, &grads);
        adam.step(model.params(), grads.param_grads());
        if (on_step) on_step();
    }
}

void train_state_phase(StateScoreModel& model, const OfflineDataset& ds,
                       const std::vector<const PseudoDataset*>& replay, const Normalizer& norm,
                       double beta, const TrainHyper& hyper, std::uint64_t seed,
                       const StepHook& on_step) {
    ReplayMixer mixer(ds, replay, beta, derive_seed(seed, {fnv1a64("mix")}));
    Rng loss_rng(derive_seed(seed, {fnv1a64("loss")}));
    Adam adam(hyper.adam());
    adam.reset(model.params());
    StateModelGrads grads;
    grads.init(model, hyper.batch);
    const std::size_t steps = hyper.state_epochs * mixer.steps_per_epoch(hyper.batch);
    for (std::size_t s = 0; s < steps; ++s) {
        MixedStep step = mixer.next(hyper.batch);
        normalize_step(step, norm);
        grads.zero();
        state_replay_loss(model, step, loss_rng, &grads);
        std::vector<const Tensor*> glist = grads.net.param_grads();
        glist.push_back(&grads.emb);
        adam.step(model.params(), glist);
        if (on_step) on_step();
    }
}

void train_critic_phase(MultiHeadCritic& critic, const OfflineDataset& ds,
                        const std::vector<const PseudoDataset*>& replay, const Normalizer& norm,
                        const BehaviorScoreModel& behavior, double lambda, double gamma,
                        const TrainHyper& hyper, std::uint64_t seed, const StepHook& on_step) {
    if (hyper.value_iterations < 0) throw ConfigError("value_iterations must be >= 0");
    ReplayMixer mixer(ds, replay, 1.0, derive_seed(seed, {fnv1a64("mix")}));
    Rng value_rng(derive_seed(seed, {fnv1a64("value")}));
    Adam adam(hyper.adam());
    adam.reset(critic.params());
    CriticGrads grads;
    grads.init(critic, hyper.batch);

    // R^(0): discounted return-to-go per trajectory.
    const auto traj_rewards = per_trajectory(ds, ds.rewards);
    std::vector<double> targets;
    targets.reserve(ds.size());
    for (const auto& rs : traj_rewards) {
        const std::vector<double> r = compute_rtg(rs, gamma);
        targets.insert(targets.end(), r.begin(), r.end());
    }

    const int segments = hyper.value_iterations + 1;
    const std::size_t steps_per_epoch = mixer.steps_per_epoch(hyper.batch);
    const Tensor norm_states = norm.normalize(ds.states);
    for (int seg = 0; seg < segments; ++seg) {
        // Spread the epoch budget over segments, front-loading remainders.
        std::size_t epochs = hyper.critic_epochs / static_cast<std::size_t>(segments);
        if (static_cast<std::size_t>(seg) < hyper.critic_epochs % static_cast<std::size_t>(segments)) {
            ++epochs;
        }
        for (std::size_t s = 0; s < epochs * steps_per_epoch; ++s) {
            MixedStep step = mixer.next(hyper.batch);
            normalize_step(step, norm);
            for (std::size_t r = 0; r < step.real.size(); ++r) {
                step.real.returns[r] = targets[step.real.indices[r]];
            }
            grads.zero();
            critic_loss(critic, step.real, step.replayed, lambda, &grads);
            std::vector<const Tensor*> glist = grads.backbone.param_grads();
            for (std::size_t h = 0; h < grads.head_w.size(); ++h) {
                glist.push_back(&grads.head_w[h]);
                glist.push_back(&grads.head_b[h]);
            }
            adam.step(critic.params(), glist);
            if (on_step) on_step();
        }
        if (seg + 1 < segments) {
            // Planning refresh: V under the behavior model, then the
            // max-backup along each trajectory.
            const std::vector<double> values =
                value_estimate(critic, ds.task_id, norm_states, behavior, hyper.value_actions,
                               value_rng, hyper.value_weighting, 1.0);
            const auto traj_values = per_trajectory(ds, values);
            targets.clear();
            for (std::size_t t = 0; t < traj_rewards.size(); ++t) {
                const std::vector<double> r =
                    bellman_targets(traj_rewards[t], traj_values[t], gamma);
                targets.insert(targets.end(), r.begin(), r.end());
            }
        }
    }
}

EvalResult evaluate_task(const BehaviorScoreModel& behavior, const MultiHeadCritic& critic,
                         const Normalizer& norm, const TaskSpec& task, int episodes,
                         const PolicyConfig& policy, std::uint64_t seed, SelectionDiag* diag) {
    if (episodes < 1) throw ConfigError("evaluate: episodes must be >= 1");
    Rng rng(seed);
    std::vector<double> returns;
    returns.reserve(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        State s = sample_start_state(rng);
        double ep_return = 0.0;
        for (int i = 0; i < task.horizon; ++i) {
            std::vector<double> ns(s.begin(), s.end());
            norm.normalize_row(ns);
            const Action a = select_action(behavior, critic, task.task_id, ns, policy, rng, diag);
            const StepResult sr = step(task, s, a);
            ep_return += sr.r;
            s = sr.s_next;
        }
        returns.push_back(ep_return);
    }
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    var /= static_cast<double>(returns.size());
    return {mean, std::sqrt(var)};
}

namespace {

constexpr char kRunMagic[] = "CUGRO-RUN v1";

void write_stats(Manifest& m, BlobWriter& blob, const std::vector<NormStats>& history) {
    m.set_u64("stats.tasks", history.size());
    for (std::size_t i = 0; i < history.size(); ++i) {
        m.set_u64("stats.task" + std::to_string(i + 1) + ".count", history[i].count);
    }
    for (const NormStats& st : history) {
        blob.put(std::span<const double>(st.mean));
        blob.put(std::span<const double>(st.stddev));
    }
}

std::vector<NormStats> read_stats(const Manifest& m, BlobReader& blob) {
    std::vector<NormStats> history(m.get_u64("stats.tasks"));
    for (std::size_t i = 0; i < history.size(); ++i) {
        history[i].count = m.get_u64("stats.task" + std::to_string(i + 1) + ".count");
    }
    for (NormStats& st : history) {
        st.mean.resize(kStateDim);
        st.stddev.resize(kStateDim);
        blob.next(std::span<double>(st.mean));
        blob.next(std::span<double>(st.stddev));
    }
    return history;
}

}  // namespace

void save_continual_state(const ContinualState& state, const SequenceConfig& cfg,
                          const fs::path& dir) {
    const fs::path tmp = dir.string() + ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    Manifest m;
    m.set_i64("tasks_done", state.tasks_done);
    m.set("variant", variant_name(cfg.variant));
    m.set_u64("seed", cfg.seed);
    m.set_f64("lambda", cfg.lambda);
    m.set_f64("beta", cfg.beta);
    m.set_u64("best.count", state.best_returns.size());
    BlobWriter blob;
    write_stats(m, blob, state.stat_history);
    blob.put(std::span<const double>(state.best_returns));
    m.set_u64("blob_doubles", blob.count());
    write_checkpoint_pair(tmp / "run", m.serialize(kRunMagic), blob.bytes());

    save_state_model(state.state_gen, tmp / "state_gen");
    save_behavior_model(state.behavior_gen, tmp / "behavior_gen");
    save_critic(state.critic, tmp / "critic");

    fs::remove_all(dir);
    fs::rename(tmp, dir);
}

ContinualState load_continual_state(const fs::path& dir) {
    auto [text, bytes] = read_checkpoint_pair(dir / "run");
    const Manifest m = Manifest::parse(text, kRunMagic, (dir / "run").string());
    if (m.get_u64("blob_doubles") * 8 != bytes.size()) {
        throw FormatError((dir / "run").string() + ".blob: length does not match manifest");
    }
    BlobReader blob(std::move(bytes), (dir / "run").string() + ".blob");
    ContinualState state;
    state.tasks_done = static_cast<int>(m.get_i64("tasks_done"));
    state.stat_history = read_stats(m, blob);
    state.best_returns.resize(m.get_u64("best.count"));
    blob.next(std::span<double>(state.best_returns));
    blob.expect_end();
    state.state_gen = load_state_model(dir / "state_gen");
    state.behavior_gen = load_behavior_model(dir / "behavior_gen");
    state.critic = load_critic(dir / "critic");
    return state;
}

namespace {

struct InvariantWatch {
    std::string name;
    std::vector<const Tensor*> params;
    std::uint64_t expect = 0;
};

struct InvariantChecker {
    std::vector<InvariantWatch> watches;
    std::uint64_t checks = 0;

    void add(std::string name, std::vector<const Tensor*> params) {
        watches.push_back({std::move(name), std::move(params), 0});
        watches.back().expect = param_hash(watches.back().params);
    }

    void verify() {
        for (const InvariantWatch& w : watches) {
            ++checks;
            if (param_hash(w.params) != w.expect) {
                throw Error("invariant violated: " + w.name + " changed during training");
            }
        }
    }
};

PseudoDataset oracle_pairs(const OfflineDataset& old_ds, std::size_t n, Rng& rng) {
    const Batch b = sample_batch(old_ds, n, rng, /*with_replacement=*/n > old_ds.size());
    PseudoDataset out;
    out.task_id = old_ds.task_id;
    out.states = b.states;
    out.actions = b.actions;
    out.q_labels.assign(b.size(), 0.0);
    return out;
}

PseudoDataset noise_pairs(const BehaviorScoreModel& old_behavior, const Normalizer& cur_norm,
                          const Normalizer& old_norm, int k, std::size_t n, Rng& rng) {
    Tensor z({n, kStateDim});
    for (double& v : z.data) v = rng.normal();
    PseudoDataset out;
    out.task_id = k;
    out.states = cur_norm.denormalize(z);
    out.actions = sample_actions(old_behavior, old_norm.normalize(out.states), rng);
    for (double& v : out.actions.data) v = std::clamp(v, -1.0, 1.0);
    out.q_labels.assign(n, 0.0);
    return out;
}

void append_metrics(const fs::path& run_dir, const std::vector<MetricsRow>& rows, bool fresh) {
    if (run_dir.empty()) return;
    const fs::path path = run_dir / "metrics.csv";
    std::ofstream out(path, fresh ? std::ios::trunc : std::ios::app);
    if (!out) throw DataError("cannot write " + path.string());
    if (fresh) out << metrics_csv_header() << "\n";
    for (const MetricsRow& r : rows) out << metrics_csv_line(r) << "\n";
    out.flush();
}

}  // namespace

RunReport run_sequence(const SequenceConfig& cfg, const std::vector<OfflineDataset>& datasets,
                       const fs::path& run_dir) {
    cfg.validate();
    const int total = static_cast<int>(cfg.tasks.size());
    const int stop = cfg.stop_after > 0 ? std::min(cfg.stop_after, total) : total;
    if (static_cast<int>(datasets.size()) != total) {
        throw DataError("run_sequence: expected " + std::to_string(total) + " datasets, got " +
                        std::to_string(datasets.size()));
    }
    for (int k = 0; k < total; ++k) {
        if (datasets[static_cast<std::size_t>(k)].task_id != k + 1) {
            throw DataError("run_sequence: dataset " + std::to_string(k + 1) +
                            " carries wrong task id");
        }
    }

    RunReport report;
    ContinualState state;
    bool resumed = false;
    if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        // Resume from the newest complete phase checkpoint, if any.
        for (int k = stop; k >= 1; --k) {
            const fs::path ckpt = run_dir / ("ckpt_task" + std::to_string(k));
            if (fs::exists(ckpt / "run.manifest")) {
                state = load_continual_state(ckpt);
                resumed = true;
                auto [text, bytes] = read_checkpoint_pair(ckpt / "run");
                const Manifest m = Manifest::parse(text, "CUGRO-RUN v1", (ckpt / "run").string());
                if (m.get("variant") != variant_name(cfg.variant) ||
                    m.get_u64("seed") != cfg.seed) {
                    throw ConfigError("resume: checkpoint in " + ckpt.string() +
                                      " was written by a different variant/seed");
                }
                break;
            }
        }
    }

    if (resumed) {
        const fs::path mpath = run_dir / "metrics.csv";
        if (fs::exists(mpath)) {
            Metrics existing = load_metrics_csv(mpath);
            for (const MetricsRow& r : existing.rows) {
                if (r.phase <= state.tasks_done) report.metrics.rows.push_back(r);
            }
        }
        append_metrics(run_dir, report.metrics.rows, /*fresh=*/true);
    } else {
        Rng init_rng(derive_seed(cfg.seed, {fnv1a64("init")}));
        state.state_gen = StateScoreModel::make(init_rng, kStateDim, cfg.nets.task_embed,
                                                cfg.nets.time_embed, cfg.nets.hidden,
                                                cfg.nets.depth, 1, cfg.sched);
        state.behavior_gen = BehaviorScoreModel::make(init_rng, kActionDim, kStateDim,
                                                      cfg.nets.time_embed, cfg.nets.hidden,
                                                      cfg.nets.depth, cfg.sched);
        state.critic = MultiHeadCritic::make(init_rng, kStateDim, kActionDim,
                                             cfg.nets.critic_hidden, cfg.nets.critic_layers, 1);
        state.tasks_done = 0;
        if (!run_dir.empty()) append_metrics(run_dir, {}, /*fresh=*/true);
    }

    SelectionDiag select_diag;

    for (int K = state.tasks_done + 1; K <= stop; ++K) {
        const OfflineDataset& ds = datasets[static_cast<std::size_t>(K - 1)];
        if (static_cast<int>(state.stat_history.size()) < K) {
            state.stat_history.push_back(ds.state_stats);
        }
        const Normalizer norm = Normalizer::from_stats(merge_norm_stats(
            {state.stat_history.begin(), state.stat_history.begin() + K}));

        InvariantChecker checker;
        StepHook hook;

        if (K == 1) {
            train_behavior_phase(state.behavior_gen, ds, {}, norm, cfg.beta, cfg.train,
                                 phase_seed(cfg.seed, "behavior", K));
            train_critic_phase(state.critic, ds, {}, norm, state.behavior_gen, cfg.lambda,
                               cfg.gamma, cfg.train, phase_seed(cfg.seed, "critic", K));
            train_state_phase(state.state_gen, ds, {}, norm, cfg.beta, cfg.train,
                              phase_seed(cfg.seed, "state", K));
        } else {
            const Normalizer old_norm = Normalizer::from_stats(merge_norm_stats(
                {state.stat_history.begin(), state.stat_history.begin() + (K - 1)}));

            // Freeze the previous models; everything replayed comes from
            // these copies, never from the nets being trained.
            const StateScoreModel frozen_state = state.state_gen;
            const BehaviorScoreModel frozen_behavior = state.behavior_gen;
            const MultiHeadCritic frozen_critic = state.critic;

            std::vector<PseudoDataset> pseudo;
            if (cfg.variant != ReplayVariant::kNone) {
                const std::size_t n_replay =
                    cfg.replay_per_task > 0
                        ? cfg.replay_per_task
                        : std::max<std::size_t>(1, ds.size() / static_cast<std::size_t>(K - 1));
                for (int k = 1; k < K; ++k) {
                    Rng rng(phase_seed(cfg.seed, "pseudo", K, k));
                    PseudoDataset p;
                    switch (cfg.variant) {
                        case ReplayVariant::kDiffusion:
                            p = generate_pseudo_pairs(frozen_state, frozen_behavior, old_norm, k,
                                                      n_replay, rng);
                            break;
                        case ReplayVariant::kOracle:
                            p = oracle_pairs(datasets[static_cast<std::size_t>(k - 1)], n_replay,
                                             rng);
                            break;
                        case ReplayVariant::kNoise:
                            p = noise_pairs(frozen_behavior, norm, old_norm, k, n_replay, rng);
                            break;
                        case ReplayVariant::kNone: break;
                    }
                    // Labels come from the frozen critic in its own
                    // normalization space.
                    p.q_labels =
                        annotate(frozen_critic, k, old_norm.normalize(p.states), p.actions);
                    pseudo.push_back(std::move(p));
                }
            }
            std::vector<const PseudoDataset*> pseudo_ptrs;
            for (const PseudoDataset& p : pseudo) pseudo_ptrs.push_back(&p);

            // The frozen copies are watched across the whole phase; strict
            // mode re-verifies after every optimizer step, otherwise only
            // the phase boundary is checked.
            checker.add("frozen state generator", frozen_state.params());
            checker.add("frozen behavior generator", frozen_behavior.params());
            checker.add("frozen critic", frozen_critic.params());
            if (cfg.strict_checks) {
                hook = [&checker] { checker.verify(); };
            }

            // Initialization of task-K models from task-(K-1) ones is the
            // copy already held in `state`; expand per-task capacity.
            Rng grow_rng(phase_seed(cfg.seed, "grow", K));
            state.critic.add_head(grow_rng);
            const bool train_state_gen = cfg.variant != ReplayVariant::kNoise;
            if (train_state_gen) state.state_gen.task_emb.grow_to(static_cast<std::size_t>(K), grow_rng);

            InvariantChecker head_checker;
            StepHook critic_hook = hook;
            const bool bc_active = cfg.lambda > 0.0 && !pseudo_ptrs.empty();
            if (!bc_active) {
                // Without the cloning term, earlier heads must stay
                // bit-identical through the phase.
                std::vector<const Tensor*> old_heads;
                for (int k = 1; k < K; ++k) {
                    old_heads.push_back(&state.critic.heads[static_cast<std::size_t>(k - 1)].w);
                    old_heads.push_back(&state.critic.heads[static_cast<std::size_t>(k - 1)].b);
                }
                head_checker.add("earlier critic heads", std::move(old_heads));
                if (cfg.strict_checks) {
                    critic_hook = [&checker, &head_checker] {
                        checker.verify();
                        head_checker.verify();
                    };
                }
            }

            if (train_state_gen) {
                train_state_phase(state.state_gen, ds, pseudo_ptrs, norm, cfg.beta, cfg.train,
                                  phase_seed(cfg.seed, "state", K), hook);
            }
            train_behavior_phase(state.behavior_gen, ds, pseudo_ptrs, norm, cfg.beta, cfg.train,
                                 phase_seed(cfg.seed, "behavior", K), hook);
            train_critic_phase(state.critic, ds, bc_active ? pseudo_ptrs
                                                           : std::vector<const PseudoDataset*>{},
                               norm, state.behavior_gen, cfg.lambda, cfg.gamma, cfg.train,
                               phase_seed(cfg.seed, "critic", K), critic_hook);

            // Phase-boundary verification runs even without strict mode.
            checker.verify();
            head_checker.verify();
            report.invariant_checks += checker.checks + head_checker.checks;
        }

        // Evaluate every task seen so far with the current models.
        std::vector<MetricsRow> rows;
        for (int k = 1; k <= K; ++k) {
            const EvalResult ev = evaluate_task(
                state.behavior_gen, state.critic, norm, cfg.tasks[static_cast<std::size_t>(k - 1)],
                cfg.eval_episodes, cfg.policy, phase_seed(cfg.seed, "eval", K, k), &select_diag);
            if (static_cast<int>(state.best_returns.size()) < k) {
                state.best_returns.push_back(ev.mean);
            } else {
                double& best = state.best_returns[static_cast<std::size_t>(k - 1)];
                best = std::max(best, ev.mean);
            }
            MetricsRow row;
            row.phase = K;
            row.task = k;
            row.mean_return = ev.mean;
            row.std_return = ev.stddev;
            row.forgetting = state.best_returns[static_cast<std::size_t>(k - 1)] - ev.mean;
            row.variant = variant_name(cfg.variant);
            row.seed = cfg.seed;
            row.lambda = cfg.lambda;
            row.beta = cfg.beta;
            rows.push_back(std::move(row));
        }
        state.tasks_done = K;

        if (!run_dir.empty()) {
            save_continual_state(state, cfg, run_dir / ("ckpt_task" + std::to_string(K)));
        }
        append_metrics(run_dir, rows, /*fresh=*/false);
        for (MetricsRow& r : rows) report.metrics.rows.push_back(std::move(r));
    }

    report.uniform_fallbacks = select_diag.uniform_fallbacks;
    return report;
}

}  // namespace cugro
