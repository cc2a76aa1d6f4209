#include "cugro/diffusion.hpp"

#include <cmath>
#include <string>

#include "cugro/netio.hpp"

namespace cugro {

std::pair<double, double> VpSchedule::coeffs(double t) const {
    if (!(t > 0.0 && t <= 1.0)) {
        throw NumericError("schedule: t=" + std::to_string(t) + " outside (0, 1]");
    }
    const double log_alpha = -0.25 * t * t * (beta_max - beta_min) - 0.5 * t * beta_min;
    const double alpha = std::exp(log_alpha);
    const double sigma = std::sqrt(1.0 - alpha * alpha);
    return {alpha, sigma};
}

std::vector<double> VpSchedule::grid() const {
    std::vector<double> ts(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        ts[static_cast<std::size_t>(i)] = static_cast<double>(i + 1) / static_cast<double>(steps);
    }
    return ts;
}

Tensor perturb(const Tensor& x, double t, const Tensor& eps, const VpSchedule& sched) {
    check_same_shape(x, eps, "perturb");
    const auto [alpha, sigma] = sched.coeffs(t);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] = alpha * x.data[i] + sigma * eps.data[i];
    }
    return out;
}

double denoise_loss_value(const Tensor& pred, const Tensor& eps,
                          const std::vector<double>& sigmas) {
    check_same_shape(pred, eps, "denoise loss");
    const std::size_t n = pred.rows(), d = pred.cols();
    if (sigmas.size() != n) throw ShapeError("denoise loss: sigma count mismatch");
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double* p = pred.data.data() + r * d;
        const double* e = eps.data.data() + r * d;
        double row = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = sigmas[r] * p[j] + e[j];
            row += v * v;
        }
        total += row;
    }
    return total / static_cast<double>(n);
}

namespace {

// Draws per-row diffusion times and noise in the documented order.
void draw_times_and_noise(Rng& rng, const VpSchedule& sched, std::size_t n, std::size_t d,
                          std::vector<double>& ts, Tensor& eps) {
    ts.resize(n);
    eps = Tensor({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        ts[r] = 1.0 - rng.uniform01() * (1.0 - sched.t_min);
        for (std::size_t j = 0; j < d; ++j) eps(r, j) = rng.normal();
    }
}

// dLoss/dPred for the weighted term; also returns the term value.
double loss_and_pred_grad(const Tensor& pred, const Tensor& eps, const std::vector<double>& sigmas,
                          double weight, Tensor& dpred) {
    const std::size_t n = pred.rows(), d = pred.cols();
    dpred = Tensor({n, d});
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double s = sigmas[r];
        for (std::size_t j = 0; j < d; ++j) {
            const double v = s * pred(r, j) + eps(r, j);
            total += v * v;
            dpred(r, j) = weight * 2.0 * s * v / static_cast<double>(n);
        }
    }
    return total / static_cast<double>(n);
}

}  // namespace

BehaviorScoreModel BehaviorScoreModel::make(Rng& rng, std::size_t action_dim,
                                            std::size_t state_dim, std::size_t time_dim,
                                            std::size_t width, std::size_t depth,
                                            const VpSchedule& sched) {
    BehaviorScoreModel m;
    m.action_dim = action_dim;
    m.state_dim = state_dim;
    m.time_dim = time_dim;
    m.sched = sched;
    m.net = make_skip_net(rng, action_dim + state_dim + time_dim, width, depth, action_dim);
    return m;
}

Tensor BehaviorScoreModel::predict(const Tensor& a_t, const Tensor& states,
                                   const std::vector<double>& ts, Tape* tape) const {
    const std::size_t n = a_t.rows();
    if (states.rows() != n || ts.size() != n) throw ShapeError("behavior predict: row mismatch");
    if (a_t.cols() != action_dim || states.cols() != state_dim) {
        throw ShapeError("behavior predict: column mismatch");
    }
    Tensor input({n, action_dim + state_dim + time_dim});
    for (std::size_t r = 0; r < n; ++r) {
        auto dst = input.row(r);
        auto a = a_t.row(r);
        auto s = states.row(r);
        std::copy(a.begin(), a.end(), dst.begin());
        std::copy(s.begin(), s.end(), dst.begin() + static_cast<std::ptrdiff_t>(action_dim));
        time_embedding_into(ts[r], dst.subspan(action_dim + state_dim));
    }
    return forward(net, input, tape);
}

StateScoreModel StateScoreModel::make(Rng& rng, std::size_t state_dim, std::size_t embed_dim,
                                      std::size_t time_dim, std::size_t width, std::size_t depth,
                                      std::size_t tasks, const VpSchedule& sched) {
    StateScoreModel m;
    m.state_dim = state_dim;
    m.time_dim = time_dim;
    m.sched = sched;
    m.net = make_skip_net(rng, state_dim + embed_dim + time_dim, width, depth, state_dim);
    m.task_emb = EmbeddingTable(tasks, embed_dim, rng);
    return m;
}

Tensor StateScoreModel::predict(const Tensor& s_t, const std::vector<int>& task_ids,
                                const std::vector<double>& ts, Tape* tape) const {
    const std::size_t n = s_t.rows();
    if (task_ids.size() != n || ts.size() != n) throw ShapeError("state predict: row mismatch");
    if (s_t.cols() != state_dim) throw ShapeError("state predict: column mismatch");
    const std::size_t edim = task_emb.dim();
    Tensor input({n, state_dim + edim + time_dim});
    for (std::size_t r = 0; r < n; ++r) {
        const int k = task_ids[r];
        if (k < 1 || static_cast<std::size_t>(k) > task_emb.rows()) {
            throw Error("state predict: task id " + std::to_string(k) + " has no embedding row");
        }
        auto dst = input.row(r);
        auto s = s_t.row(r);
        auto e = task_emb.row(static_cast<std::size_t>(k - 1));
        std::copy(s.begin(), s.end(), dst.begin());
        std::copy(e.begin(), e.end(), dst.begin() + static_cast<std::ptrdiff_t>(state_dim));
        time_embedding_into(ts[r], dst.subspan(state_dim + edim));
    }
    return forward(net, input, tape);
}

std::vector<Tensor*> StateScoreModel::params() {
    std::vector<Tensor*> p = net.params();
    p.push_back(&task_emb.table);
    return p;
}

std::vector<const Tensor*> StateScoreModel::params() const {
    std::vector<const Tensor*> p = net.params();
    p.push_back(&task_emb.table);
    return p;
}

void StateModelGrads::init(const StateScoreModel& m, std::size_t batch) {
    net.init(m.net, batch);
    emb = Tensor(m.task_emb.table.shape);
}

void StateModelGrads::zero() {
    net.zero();
    emb.fill(0.0);
}

double behavior_loss_term(const BehaviorScoreModel& m, const Tensor& actions, const Tensor& states,
                          Rng& rng, double weight, NetGrads* grads) {
    const std::size_t n = actions.rows(), d = m.action_dim;
    std::vector<double> ts;
    Tensor eps;
    draw_times_and_noise(rng, m.sched, n, d, ts, eps);

    std::vector<double> sigmas(n);
    Tensor a_t({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        const auto [alpha, sigma] = m.sched.coeffs(ts[r]);
        sigmas[r] = sigma;
        for (std::size_t j = 0; j < d; ++j) a_t(r, j) = alpha * actions(r, j) + sigma * eps(r, j);
    }

    Tape tape;
    const Tensor pred = m.predict(a_t, states, ts, grads ? &tape : nullptr);
    Tensor dpred;
    const double loss = loss_and_pred_grad(pred, eps, sigmas, weight, dpred);
    if (!std::isfinite(loss)) throw NumericError("behavior loss diverged");
    if (grads) backward(m.net, tape, dpred, *grads);
    return loss;
}

double state_loss_term(const StateScoreModel& m, const Tensor& states,
                       const std::vector<int>& task_ids, Rng& rng, double weight,
                       StateModelGrads* grads) {
    const std::size_t n = states.rows(), d = m.state_dim;
    std::vector<double> ts;
    Tensor eps;
    draw_times_and_noise(rng, m.sched, n, d, ts, eps);

    std::vector<double> sigmas(n);
    Tensor s_t({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        const auto [alpha, sigma] = m.sched.coeffs(ts[r]);
        sigmas[r] = sigma;
        for (std::size_t j = 0; j < d; ++j) s_t(r, j) = alpha * states(r, j) + sigma * eps(r, j);
    }

    Tape tape;
    const Tensor pred = m.predict(s_t, task_ids, ts, grads ? &tape : nullptr);
    Tensor dpred;
    const double loss = loss_and_pred_grad(pred, eps, sigmas, weight, dpred);
    if (!std::isfinite(loss)) throw NumericError("state loss diverged");
    if (grads) {
        backward(m.net, tape, dpred, grads->net);
        // Embedding rows receive the input-gradient slice at their columns.
        const std::size_t edim = m.task_emb.dim();
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t row = static_cast<std::size_t>(task_ids[r] - 1);
            const double* src = grads->net.dinput.data.data() + r * m.net.input_dim + d;
            double* dst = grads->emb.data.data() + row * edim;
            for (std::size_t j = 0; j < edim; ++j) dst[j] += src[j];
        }
        // The slice has been routed; clear it so repeated terms do not
        // double-count rows into the embedding gradient.
        grads->net.dinput.fill(0.0);
    }
    return loss;
}

double behavior_loss(const BehaviorScoreModel& m, const Batch& batch, Rng& rng, NetGrads* grads) {
    return behavior_loss_term(m, batch.actions, batch.states, rng, 1.0, grads);
}

double state_loss(const StateScoreModel& m, const Batch& batch, Rng& rng, StateModelGrads* grads) {
    return state_loss_term(m, batch.states, batch.task_ids, rng, 1.0, grads);
}

double behavior_replay_loss(const BehaviorScoreModel& m, const MixedStep& step, Rng& rng,
                            NetGrads* grads) {
    double total = behavior_loss_term(m, step.real.actions, step.real.states, rng, 1.0, grads);
    for (const Batch& b : step.replayed) {
        for (int k : b.task_ids) {
            if (k >= step.real.task_ids.front()) {
                throw Error("behavior replay: replayed task id not below current task");
            }
        }
        total += step.beta * behavior_loss_term(m, b.actions, b.states, rng, step.beta, grads);
    }
    return total;
}

double state_replay_loss(const StateScoreModel& m, const MixedStep& step, Rng& rng,
                         StateModelGrads* grads) {
    double total = state_loss_term(m, step.real.states, step.real.task_ids, rng, 1.0, grads);
    for (const Batch& b : step.replayed) {
        for (int k : b.task_ids) {
            if (k >= step.real.task_ids.front()) {
                throw Error("state replay: replayed task id not below current task");
            }
        }
        total += step.beta * state_loss_term(m, b.states, b.task_ids, rng, step.beta, grads);
    }
    return total;
}

Tensor reverse_sample(const ScoreFn& score, std::size_t n, std::size_t dim,
                      const VpSchedule& sched, Rng& rng) {
    Tensor x({n, dim});
    for (double& v : x.data) v = rng.normal();
    const double dt = 1.0 / static_cast<double>(sched.steps);
    for (int i = sched.steps; i >= 1; --i) {
        const double t = static_cast<double>(i) / static_cast<double>(sched.steps);
        const double beta = sched.beta(t);
        const Tensor sc = score(x, t);
        check_same_shape(sc, x, "reverse_sample score");
        const bool last = i == 1;
        const double noise_scale = std::sqrt(beta * dt);
        for (std::size_t r = 0; r < n; ++r) {
            double* xr = x.data.data() + r * dim;
            const double* sr = sc.data.data() + r * dim;
            for (std::size_t j = 0; j < dim; ++j) {
                xr[j] += (0.5 * beta * xr[j] + beta * sr[j]) * dt;
                if (!last) xr[j] += noise_scale * rng.normal();
            }
        }
        if (!all_finite(x)) {
            throw NumericError("reverse sampling diverged at step " + std::to_string(i));
        }
    }
    return x;
}

Tensor sample_states(const StateScoreModel& m, int task_id, std::size_t n, Rng& rng) {
    const std::vector<int> ids(n, task_id);
    return reverse_sample(
        [&](const Tensor& x, double t) {
            const std::vector<double> ts(x.rows(), t);
            return m.predict(x, ids, ts);
        },
        n, m.state_dim, m.sched, rng);
}

Tensor sample_actions(const BehaviorScoreModel& m, const Tensor& states, Rng& rng) {
    return reverse_sample(
        [&](const Tensor& x, double t) {
            const std::vector<double> ts(x.rows(), t);
            return m.predict(x, states, ts);
        },
        states.rows(), m.action_dim, m.sched, rng);
}

namespace {

constexpr char kModelMagic[] = "CUGRO-CKPT v1";

void write_schedule(Manifest& m, const VpSchedule& s) {
    m.set_f64("sched.beta_min", s.beta_min);
    m.set_f64("sched.beta_max", s.beta_max);
    m.set_i64("sched.steps", s.steps);
    m.set_f64("sched.t_min", s.t_min);
}

VpSchedule read_schedule(const Manifest& m) {
    VpSchedule s;
    s.beta_min = m.get_f64("sched.beta_min");
    s.beta_max = m.get_f64("sched.beta_max");
    s.steps = static_cast<int>(m.get_i64("sched.steps"));
    s.t_min = m.get_f64("sched.t_min");
    return s;
}

}  // namespace

void save_behavior_model(const BehaviorScoreModel& m, const std::filesystem::path& prefix) {
    Manifest man;
    man.set("kind", "behavior");
    man.set_u64("action_dim", m.action_dim);
    man.set_u64("state_dim", m.state_dim);
    man.set_u64("time_dim", m.time_dim);
    write_schedule(man, m.sched);
    BlobWriter blob;
    write_net(man, blob, "net", m.net);
    man.set_u64("blob_doubles", blob.count());
    write_checkpoint_pair(prefix, man.serialize(kModelMagic), blob.bytes());
}

BehaviorScoreModel load_behavior_model(const std::filesystem::path& prefix) {
    auto [text, bytes] = read_checkpoint_pair(prefix);
    const Manifest man = Manifest::parse(text, kModelMagic, prefix.string());
    if (man.get("kind") != "behavior") {
        throw FormatError(prefix.string() + ": not a behavior model checkpoint");
    }
    if (man.get_u64("blob_doubles") * 8 != bytes.size()) {
        throw FormatError(prefix.string() + ".blob: length does not match manifest");
    }
    BlobReader blob(std::move(bytes), prefix.string() + ".blob");
    BehaviorScoreModel m;
    m.action_dim = man.get_u64("action_dim");
    m.state_dim = man.get_u64("state_dim");
    m.time_dim = man.get_u64("time_dim");
    m.sched = read_schedule(man);
    m.net = read_net(man, blob, "net");
    blob.expect_end();
    return m;
}

void save_state_model(const StateScoreModel& m, const std::filesystem::path& prefix) {
    Manifest man;
    man.set("kind", "state");
    man.set_u64("state_dim", m.state_dim);
    man.set_u64("time_dim", m.time_dim);
    man.set_u64("task_emb.rows", m.task_emb.rows());
    man.set_u64("task_emb.dim", m.task_emb.dim());
    write_schedule(man, m.sched);
    BlobWriter blob;
    write_net(man, blob, "net", m.net);
    blob.put(m.task_emb.table);
    man.set_u64("blob_doubles", blob.count());
    write_checkpoint_pair(prefix, man.serialize(kModelMagic), blob.bytes());
}

StateScoreModel load_state_model(const std::filesystem::path& prefix) {
    auto [text, bytes] = read_checkpoint_pair(prefix);
    const Manifest man = Manifest::parse(text, kModelMagic, prefix.string());
    if (man.get("kind") != "state") {
        throw FormatError(prefix.string() + ": not a state model checkpoint");
    }
    if (man.get_u64("blob_doubles") * 8 != bytes.size()) {
        throw FormatError(prefix.string() + ".blob: length does not match manifest");
    }
    BlobReader blob(std::move(bytes), prefix.string() + ".blob");
    StateScoreModel m;
    m.state_dim = man.get_u64("state_dim");
    m.time_dim = man.get_u64("time_dim");
    m.sched = read_schedule(man);
    m.net = read_net(man, blob, "net");
    const std::size_t rows = man.get_u64("task_emb.rows");
    const std::size_t dim = man.get_u64("task_emb.dim");
    m.task_emb.table = Tensor({rows, dim});
    blob.next(m.task_emb.table);
    blob.expect_end();
    return m;
}

}  // namespace cugro
