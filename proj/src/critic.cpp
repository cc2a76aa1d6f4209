#include "cugro/critic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cugro/netio.hpp"

namespace cugro {

namespace {

DenseLayer make_head(Rng& rng, std::size_t feature_dim) {
    DenseLayer head;
    head.w = Tensor({1, feature_dim});
    head.b = Tensor({1});
    head.act = Activation::kNone;
    const double bound = std::sqrt(1.0 / static_cast<double>(feature_dim));
    for (double& v : head.w.data) v = rng.uniform(-bound, bound);
    return head;
}

Tensor concat_sa(const Tensor& states, const Tensor& actions) {
    const std::size_t n = states.rows(), sd = states.cols(), ad = actions.cols();
    if (actions.rows() != n) throw ShapeError("critic: state/action row mismatch");
    Tensor input({n, sd + ad});
    for (std::size_t r = 0; r < n; ++r) {
        auto dst = input.row(r);
        auto s = states.row(r);
        auto a = actions.row(r);
        std::copy(s.begin(), s.end(), dst.begin());
        std::copy(a.begin(), a.end(), dst.begin() + static_cast<std::ptrdiff_t>(sd));
    }
    return input;
}

}  // namespace

MultiHeadCritic MultiHeadCritic::make(Rng& rng, std::size_t state_dim, std::size_t action_dim,
                                      std::size_t hidden, std::size_t hidden_layers,
                                      std::size_t heads) {
    MultiHeadCritic c;
    c.state_dim = state_dim;
    c.action_dim = action_dim;
    std::vector<std::size_t> widths(hidden_layers, hidden);
    // The backbone ends at the last hidden activation; heads do the final
    // linear map, so build an MLP without its output layer.
    c.backbone = make_mlp(rng, state_dim + action_dim, widths, hidden, Activation::kSilu);
    c.backbone.layers.pop_back();
    if (c.backbone.layers.empty()) throw ShapeError("critic backbone needs a hidden layer");
    c.backbone.validate();
    for (std::size_t h = 0; h < heads; ++h) c.add_head(rng);
    return c;
}

void MultiHeadCritic::add_head(Rng& rng) {
    heads.push_back(make_head(rng, feature_dim()));
}

std::vector<double> MultiHeadCritic::q_batch(int k, const Tensor& states,
                                             const Tensor& actions) const {
    if (k < 1 || static_cast<std::size_t>(k) > heads.size()) {
        throw Error("critic: no head for task " + std::to_string(k));
    }
    const DenseLayer& head = heads[static_cast<std::size_t>(k - 1)];
    const Tensor z = forward(backbone, concat_sa(states, actions));
    const std::size_t n = z.rows(), f = z.cols();
    std::vector<double> q(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* zr = z.data.data() + r * f;
        double acc = head.b(0);
        for (std::size_t j = 0; j < f; ++j) acc += head.w(0, j) * zr[j];
        q[r] = acc;
    }
    return q;
}

double MultiHeadCritic::q(int k, std::span<const double> state,
                          std::span<const double> action) const {
    Tensor s({1, state.size()});
    Tensor a({1, action.size()});
    std::copy(state.begin(), state.end(), s.data.begin());
    std::copy(action.begin(), action.end(), a.data.begin());
    return q_batch(k, s, a)[0];
}

std::vector<Tensor*> MultiHeadCritic::params() {
    std::vector<Tensor*> p = backbone.params();
    for (DenseLayer& h : heads) {
        p.push_back(&h.w);
        p.push_back(&h.b);
    }
    return p;
}

std::vector<const Tensor*> MultiHeadCritic::params() const {
    std::vector<const Tensor*> p = backbone.params();
    for (const DenseLayer& h : heads) {
        p.push_back(&h.w);
        p.push_back(&h.b);
    }
    return p;
}

void CriticGrads::init(const MultiHeadCritic& c, std::size_t batch) {
    backbone.init(c.backbone, batch);
    head_w.clear();
    head_b.clear();
    for (const DenseLayer& h : c.heads) {
        head_w.push_back(Tensor(h.w.shape));
        head_b.push_back(Tensor(h.b.shape));
    }
}

void CriticGrads::zero() {
    backbone.zero();
    for (Tensor& t : head_w) t.fill(0.0);
    for (Tensor& t : head_b) t.fill(0.0);
}

std::vector<double> bellman_targets(const std::vector<double>& rewards,
                                    const std::vector<double>& values, double gamma) {
    if (rewards.empty()) throw Error("bellman_targets: empty trajectory");
    if (values.size() != rewards.size()) {
        throw ShapeError("bellman_targets: value estimates misaligned with trajectory");
    }
    std::vector<double> targets(rewards.size());
    targets.back() = rewards.back();
    for (std::size_t i = rewards.size() - 1; i-- > 0;) {
        targets[i] = rewards[i] + gamma * std::max(targets[i + 1], values[i + 1]);
    }
    return targets;
}

std::vector<double> value_estimate(const MultiHeadCritic& critic, int k, const Tensor& states,
                                   const BehaviorScoreModel& behavior, int n_actions, Rng& rng,
                                   ValueWeighting weighting, double alpha) {
    if (n_actions < 1) throw ConfigError("value_estimate: n_actions must be >= 1");
    const std::size_t n = states.rows(), sd = states.cols();
    const std::size_t na = static_cast<std::size_t>(n_actions);
    Tensor repeated({n * na, sd});
    for (std::size_t r = 0; r < n; ++r) {
        auto src = states.row(r);
        for (std::size_t j = 0; j < na; ++j) {
            std::copy(src.begin(), src.end(), repeated.row(r * na + j).begin());
        }
    }
    Tensor actions = sample_actions(behavior, repeated, rng);
    for (double& v : actions.data) v = std::clamp(v, -1.0, 1.0);
    const std::vector<double> q = critic.q_batch(k, repeated, actions);

    std::vector<double> values(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* block = q.data() + r * na;
        if (weighting == ValueWeighting::kMean) {
            double acc = 0.0;
            for (std::size_t j = 0; j < na; ++j) acc += block[j];
            values[r] = acc / static_cast<double>(na);
        } else {
            double qmax = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < na; ++j) qmax = std::max(qmax, block[j]);
            double wsum = 0.0, acc = 0.0;
            for (std::size_t j = 0; j < na; ++j) {
                const double w = std::exp(alpha * (block[j] - qmax));
                wsum += w;
                acc += w * block[j];
            }
            values[r] = acc / wsum;
        }
    }
    return values;
}

double critic_loss(const MultiHeadCritic& critic, const Batch& real,
                   const std::vector<Batch>& replayed, double lambda, CriticGrads* grads) {
    if (lambda < 0.0) throw ConfigError("critic loss: lambda must be >= 0");
    if (real.size() == 0) throw Error("critic loss: empty batch");
    const int k_new = real.task_ids.front();

    auto head_term = [&](const Batch& batch, int k, double weight) -> double {
        const DenseLayer& head = critic.heads.at(static_cast<std::size_t>(k - 1));
        const std::size_t n = batch.size(), f = critic.feature_dim();
        Tape tape;
        const Tensor input = concat_sa(batch.states, batch.actions);
        const Tensor z = forward(critic.backbone, input, grads ? &tape : nullptr);
        double loss = 0.0;
        Tensor dz({n, f});
        Tensor* dw = grads ? &grads->head_w.at(static_cast<std::size_t>(k - 1)) : nullptr;
        Tensor* db = grads ? &grads->head_b.at(static_cast<std::size_t>(k - 1)) : nullptr;
        for (std::size_t r = 0; r < n; ++r) {
            const double* zr = z.data.data() + r * f;
            double q = head.b(0);
            for (std::size_t j = 0; j < f; ++j) q += head.w(0, j) * zr[j];
            const double res = q - batch.returns[r];
            loss += res * res;
            if (grads) {
                const double dq = weight * 2.0 * res / static_cast<double>(n);
                for (std::size_t j = 0; j < f; ++j) {
                    dw->data[j] += dq * zr[j];
                    dz(r, j) = dq * head.w(0, j);
                }
                db->data[0] += dq;
            }
        }
        if (grads) backward(critic.backbone, tape, dz, grads->backbone);
        return loss / static_cast<double>(n);
    };

    double total = head_term(real, k_new, 1.0);
    for (const Batch& b : replayed) {
        if (b.size() == 0) continue;
        const int k = b.task_ids.front();
        if (k >= k_new) throw Error("critic loss: replayed task id not below current task");
        total += lambda * head_term(b, k, lambda);
    }
    if (!std::isfinite(total)) throw NumericError("critic loss diverged");
    return total;
}

std::vector<double> annotate(const MultiHeadCritic& old_critic, int k, const Tensor& states,
                             const Tensor& actions) {
    return old_critic.q_batch(k, states, actions);
}

std::vector<double> selection_weights(const std::vector<double>& q, double alpha) {
    double qmax = -std::numeric_limits<double>::infinity();
    for (double v : q) qmax = std::max(qmax, v);
    std::vector<double> w(q.size(), 0.0);
    if (!std::isfinite(qmax)) return w;  // all candidates degenerate
    for (std::size_t i = 0; i < q.size(); ++i) {
        w[i] = std::isfinite(q[i]) ? std::exp(alpha * (q[i] - qmax)) : 0.0;
    }
    return w;
}

Action select_action(const BehaviorScoreModel& behavior, const MultiHeadCritic& critic, int k,
                     std::span<const double> norm_state, const PolicyConfig& cfg, Rng& rng,
                     SelectionDiag* diag) {
    if (cfg.candidates < 1) throw ConfigError("select_action: need at least one candidate");
    const std::size_t n = static_cast<std::size_t>(cfg.candidates);
    Tensor states({n, norm_state.size()});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy(norm_state.begin(), norm_state.end(), states.row(r).begin());
    }
    Tensor candidates = sample_actions(behavior, states, rng);
    for (double& v : candidates.data) v = std::clamp(v, -1.0, 1.0);
    const std::vector<double> q = critic.q_batch(k, states, candidates);

    std::size_t pick = 0;
    if (cfg.mode == PolicyConfig::Mode::kArgmax) {
        pick = static_cast<std::size_t>(
            std::max_element(q.begin(), q.end()) - q.begin());
    } else {
        const std::vector<double> w = selection_weights(q, cfg.alpha);
        double wsum = 0.0;
        for (double v : w) wsum += v;
        if (!(wsum > 0.0) || !std::isfinite(wsum)) {
            if (diag) ++diag->uniform_fallbacks;
            pick = rng.index(n);
        } else {
            const double u = rng.uniform01() * wsum;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += w[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        }
    }
    return {candidates(pick, 0), candidates(pick, 1)};
}

namespace {
constexpr char kCriticMagic[] = "CUGRO-CKPT v1";
}

void save_critic(const MultiHeadCritic& c, const std::filesystem::path& prefix) {
    Manifest man;
    man.set("kind", "critic");
    man.set_u64("state_dim", c.state_dim);
    man.set_u64("action_dim", c.action_dim);
    man.set_u64("heads", c.head_count());
    man.set_u64("feature_dim", c.feature_dim());
    BlobWriter blob;
    write_net(man, blob, "backbone", c.backbone);
    for (const DenseLayer& h : c.heads) {
        blob.put(h.w);
        blob.put(h.b);
    }
    man.set_u64("blob_doubles", blob.count());
    write_checkpoint_pair(prefix, man.serialize(kCriticMagic), blob.bytes());
}

MultiHeadCritic load_critic(const std::filesystem::path& prefix) {
    auto [text, bytes] = read_checkpoint_pair(prefix);
    const Manifest man = Manifest::parse(text, kCriticMagic, prefix.string());
    if (man.get("kind") != "critic") {
        throw FormatError(prefix.string() + ": not a critic checkpoint");
    }
    if (man.get_u64("blob_doubles") * 8 != bytes.size()) {
        throw FormatError(prefix.string() + ".blob: length does not match manifest");
    }
    BlobReader blob(std::move(bytes), prefix.string() + ".blob");
    MultiHeadCritic c;
    c.state_dim = man.get_u64("state_dim");
    c.action_dim = man.get_u64("action_dim");
    c.backbone = read_net(man, blob, "backbone");
    const std::size_t heads = man.get_u64("heads");
    const std::size_t f = man.get_u64("feature_dim");
    for (std::size_t h = 0; h < heads; ++h) {
        DenseLayer head;
        head.w = Tensor({1, f});
        head.b = Tensor({1});
        head.act = Activation::kNone;
        blob.next(head.w);
        blob.next(head.b);
        c.heads.push_back(std::move(head));
    }
    blob.expect_end();
    return c;
}

}  // namespace cugro
