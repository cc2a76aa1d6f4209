#include "cugro/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cugro/blobio.hpp"

namespace cugro {

namespace {

constexpr char kDatasetMagic[] = "CUGRO-DS v1";

}  // namespace

NormStats compute_norm_stats(const Tensor& rows) {
    const std::size_t n = rows.rows(), d = rows.cols();
    NormStats st;
    st.count = n;
    st.mean.assign(d, 0.0);
    st.stddev.assign(d, 0.0);
    if (n == 0) return st;
    std::vector<double> m2(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        auto row = rows.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            const double delta = row[j] - st.mean[j];
            st.mean[j] += delta / static_cast<double>(r + 1);
            m2[j] += delta * (row[j] - st.mean[j]);
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        st.stddev[j] = std::sqrt(m2[j] / static_cast<double>(n));
    }
    return st;
}

NormStats merge_norm_stats(const std::vector<NormStats>& parts) {
    if (parts.empty()) throw Error("merge_norm_stats: no parts");
    const std::size_t d = parts.front().mean.size();
    NormStats out;
    out.mean.assign(d, 0.0);
    out.stddev.assign(d, 0.0);
    for (const NormStats& p : parts) {
        if (p.mean.size() != d) throw ShapeError("merge_norm_stats: dimension mismatch");
        out.count += p.count;
    }
    if (out.count == 0) return out;
    const double total = static_cast<double>(out.count);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const NormStats& p : parts) {
            mean += static_cast<double>(p.count) * p.mean[j];
        }
        mean /= total;
        double ex2 = 0.0;
        for (const NormStats& p : parts) {
            ex2 += static_cast<double>(p.count) * (p.stddev[j] * p.stddev[j] + p.mean[j] * p.mean[j]);
        }
        ex2 /= total;
        out.mean[j] = mean;
        out.stddev[j] = std::sqrt(std::max(ex2 - mean * mean, 0.0));
    }
    return out;
}

Normalizer Normalizer::identity(std::size_t dim) {
    Normalizer n;
    n.mean.assign(dim, 0.0);
    n.stddev.assign(dim, 1.0);
    return n;
}

Normalizer Normalizer::from_stats(const NormStats& stats) {
    Normalizer n;
    n.mean = stats.mean;
    n.stddev = stats.stddev;
    for (double& s : n.stddev) s = std::max(s, 1e-6);
    return n;
}

Tensor Normalizer::normalize(const Tensor& rows) const {
    if (rows.cols() != dim()) throw ShapeError("normalize: dimension mismatch");
    Tensor out = rows;
    const std::size_t d = dim();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double* p = out.data.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) p[j] = (p[j] - mean[j]) / stddev[j];
    }
    return out;
}

Tensor Normalizer::denormalize(const Tensor& rows) const {
    if (rows.cols() != dim()) throw ShapeError("denormalize: dimension mismatch");
    Tensor out = rows;
    const std::size_t d = dim();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double* p = out.data.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) p[j] = p[j] * stddev[j] + mean[j];
    }
    return out;
}

void Normalizer::normalize_row(std::span<double> row) const {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / stddev[j];
}

std::vector<double> compute_rtg(const std::vector<double>& rewards, double gamma) {
    if (rewards.empty()) throw Error("compute_rtg: empty trajectory");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("compute_rtg: gamma outside (0, 1]");
    std::vector<double> out(rewards.size());
    out.back() = rewards.back();
    for (std::size_t i = rewards.size() - 1; i-- > 0;) {
        out[i] = rewards[i] + gamma * out[i + 1];
    }
    return out;
}

double OfflineDataset::mean_return() const {
    if (traj_lens.empty()) return 0.0;
    double total = 0.0;
    for (double r : rewards) total += r;
    return total / static_cast<double>(traj_lens.size());
}

OfflineDataset OfflineDataset::from_trajectories(const TaskSpec& task, PolicyQuality quality,
                                                 const std::vector<Trajectory>& trajs,
                                                 double gamma) {
    std::size_t total = 0;
    for (const Trajectory& t : trajs) total += t.steps.size();
    OfflineDataset ds;
    ds.task_id = task.task_id;
    ds.family = task.family;
    ds.quality = quality;
    ds.gamma = gamma;
    ds.states = Tensor({total, kStateDim});
    ds.actions = Tensor({total, kActionDim});
    ds.next_states = Tensor({total, kStateDim});
    ds.rewards.resize(total);
    ds.done.resize(total);
    ds.rtg.resize(total);

    std::size_t at = 0;
    for (const Trajectory& t : trajs) {
        if (t.steps.empty()) throw Error("dataset: empty trajectory");
        ds.traj_lens.push_back(static_cast<std::uint32_t>(t.steps.size()));
        std::vector<double> rs(t.steps.size());
        for (std::size_t i = 0; i < t.steps.size(); ++i) rs[i] = t.steps[i].r;
        const std::vector<double> returns = compute_rtg(rs, gamma);
        for (std::size_t i = 0; i < t.steps.size(); ++i, ++at) {
            const Transition& tr = t.steps[i];
            std::copy(tr.s.begin(), tr.s.end(), ds.states.row(at).begin());
            std::copy(tr.a.begin(), tr.a.end(), ds.actions.row(at).begin());
            std::copy(tr.s_next.begin(), tr.s_next.end(), ds.next_states.row(at).begin());
            ds.rewards[at] = tr.r;
            ds.done[at] = tr.done ? 1.0 : 0.0;
            ds.rtg[at] = returns[i];
        }
    }
    ds.state_stats = compute_norm_stats(ds.states);
    return ds;
}

OfflineDataset collect_dataset(const TaskSpec& task, PolicyQuality quality,
                               std::size_t n_transitions, std::uint64_t seed) {
    const std::vector<Trajectory> trajs = collect_trajectories(task, quality, n_transitions, seed);
    return OfflineDataset::from_trajectories(task, quality, trajs, 0.99);
}

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path) {
    Manifest m;
    m.set_i64("task_id", ds.task_id);
    m.set("family", family_name(ds.family));
    m.set("quality", quality_name(ds.quality));
    m.set_f64("gamma", ds.gamma);
    m.set_u64("state_dim", kStateDim);
    m.set_u64("action_dim", kActionDim);
    m.set_u64("transitions", ds.size());
    m.set_u64("trajectories", ds.n_trajectories());
    std::ostringstream lens;
    for (std::size_t i = 0; i < ds.traj_lens.size(); ++i) {
        if (i) lens << ',';
        lens << ds.traj_lens[i];
    }
    m.set("traj_lens", lens.str());
    m.set_u64("stats_count", ds.state_stats.count);

    BlobWriter blob;
    blob.put(std::span<const double>(ds.state_stats.mean));
    blob.put(std::span<const double>(ds.state_stats.stddev));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        blob.put(ds.states.row(i));
        blob.put(ds.actions.row(i));
        blob.put(ds.rewards[i]);
        blob.put(ds.next_states.row(i));
        blob.put(ds.done[i]);
        blob.put(ds.rtg[i]);
    }
    m.set_u64("blob_doubles", blob.count());
    write_manifest_blob(path, m.serialize(kDatasetMagic), blob.bytes());
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
    auto [text, bytes] = read_manifest_blob(path);
    const Manifest m = Manifest::parse(text, kDatasetMagic, path.string());

    OfflineDataset ds;
    ds.task_id = static_cast<int>(m.get_i64("task_id"));
    ds.family = family_from_name(m.get("family"));
    ds.quality = quality_from_name(m.get("quality"));
    ds.gamma = m.get_f64("gamma");
    if (m.get_u64("state_dim") != kStateDim || m.get_u64("action_dim") != kActionDim) {
        throw FormatError(path.string() + ": unexpected state/action dimensions");
    }
    const std::size_t n = m.get_u64("transitions");
    const std::size_t ntraj = m.get_u64("trajectories");

    std::stringstream lens(m.get("traj_lens"));
    std::string tok;
    std::size_t lens_total = 0;
    while (std::getline(lens, tok, ',')) {
        if (tok.empty()) continue;
        const auto len = static_cast<std::uint32_t>(std::stoul(tok));
        ds.traj_lens.push_back(len);
        lens_total += len;
    }
    if (ds.traj_lens.size() != ntraj || lens_total != n) {
        throw FormatError(path.string() + ": trajectory lengths do not add up to " +
                          std::to_string(n));
    }

    const std::size_t expected = 2 * kStateDim + n * (2 * kStateDim + kActionDim + 3);
    if (m.get_u64("blob_doubles") != expected) {
        throw FormatError(path.string() + ": blob_doubles does not match manifest counts");
    }

    BlobReader blob(std::move(bytes), path.string());
    ds.state_stats.count = m.get_u64("stats_count");
    ds.state_stats.mean.resize(kStateDim);
    ds.state_stats.stddev.resize(kStateDim);
    blob.next(std::span<double>(ds.state_stats.mean));
    blob.next(std::span<double>(ds.state_stats.stddev));
    ds.states = Tensor({n, kStateDim});
    ds.actions = Tensor({n, kActionDim});
    ds.next_states = Tensor({n, kStateDim});
    ds.rewards.resize(n);
    ds.done.resize(n);
    ds.rtg.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        blob.next(ds.states.row(i));
        blob.next(ds.actions.row(i));
        ds.rewards[i] = blob.next();
        blob.next(ds.next_states.row(i));
        ds.done[i] = blob.next();
        ds.rtg[i] = blob.next();
    }
    blob.expect_end();
    return ds;
}

Batch gather(const OfflineDataset& ds, std::span<const std::size_t> idx) {
    Batch b;
    const std::size_t n = idx.size();
    b.states = Tensor({n, kStateDim});
    b.actions = Tensor({n, kActionDim});
    b.next_states = Tensor({n, kStateDim});
    b.rewards.resize(n);
    b.returns.resize(n);
    b.task_ids.assign(n, ds.task_id);
    b.indices.assign(idx.begin(), idx.end());
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = idx[r];
        if (i >= ds.size()) throw Error("gather: index out of range");
        auto src_s = ds.states.row(i);
        auto src_a = ds.actions.row(i);
        auto src_n = ds.next_states.row(i);
        std::copy(src_s.begin(), src_s.end(), b.states.row(r).begin());
        std::copy(src_a.begin(), src_a.end(), b.actions.row(r).begin());
        std::copy(src_n.begin(), src_n.end(), b.next_states.row(r).begin());
        b.rewards[r] = ds.rewards[i];
        b.returns[r] = ds.rtg[i];
    }
    return b;
}

Batch sample_batch(const OfflineDataset& ds, std::size_t batch_size, Rng& rng,
                   bool with_replacement) {
    if (ds.size() == 0) throw Error("sample_batch: empty dataset");
    std::vector<std::size_t> idx(batch_size);
    if (with_replacement) {
        for (std::size_t& i : idx) i = rng.index(ds.size());
    } else {
        if (batch_size > ds.size()) {
            throw Error("sample_batch: batch larger than dataset without replacement");
        }
        std::vector<std::size_t> order(ds.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = 0; i < batch_size; ++i) {
            const std::size_t j = i + rng.index(order.size() - i);
            std::swap(order[i], order[j]);
        }
        idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(batch_size));
    }
    return gather(ds, idx);
}

EpochSampler::EpochSampler(const OfflineDataset& ds, std::uint64_t seed)
    : ds_(&ds), rng_(seed), order_(ds.size()) {
    if (ds.size() == 0) throw Error("epoch sampler: empty dataset");
    std::iota(order_.begin(), order_.end(), 0);
    pos_ = order_.size();  // force shuffle on first next()
}

std::size_t EpochSampler::steps_per_epoch(std::size_t batch_size) const {
    return (ds_->size() + batch_size - 1) / batch_size;
}

Batch EpochSampler::next(std::size_t batch_size) {
    if (pos_ >= order_.size()) {
        for (std::size_t i = 0; i + 1 < order_.size(); ++i) {
            const std::size_t j = i + rng_.index(order_.size() - i);
            std::swap(order_[i], order_[j]);
        }
        pos_ = 0;
    }
    const std::size_t take = std::min(batch_size, order_.size() - pos_);
    std::span<const std::size_t> idx(order_.data() + pos_, take);
    pos_ += take;
    return gather(*ds_, idx);
}

ReplayMixer::ReplayMixer(const OfflineDataset& real, std::vector<const PseudoDataset*> replayed,
                         double beta, std::uint64_t seed)
    : real_(real, derive_seed(seed, {fnv1a64("real")})),
      replayed_(std::move(replayed)),
      beta_(beta),
      replay_rng_(derive_seed(seed, {fnv1a64("replay")})) {
    if (beta_ < 0.0) throw ConfigError("mix: beta must be >= 0");
    for (const PseudoDataset* p : replayed_) {
        if (p == nullptr || p->size() == 0) {
            throw ConfigError("mix: empty replayed source while prior tasks exist");
        }
    }
}

std::size_t ReplayMixer::steps_per_epoch(std::size_t batch_size) const {
    return real_.steps_per_epoch(batch_size);
}

MixedStep ReplayMixer::next(std::size_t batch_size) {
    MixedStep step;
    step.real = real_.next(batch_size);
    step.real.source = BatchSource::kReal;
    step.beta = beta_;
    if (beta_ == 0.0) return step;
    for (const PseudoDataset* p : replayed_) {
        Batch b;
        const std::size_t n = std::min(batch_size, p->size());
        b.states = Tensor({n, kStateDim});
        b.actions = Tensor({n, kActionDim});
        b.returns.resize(n);
        b.task_ids.assign(n, p->task_id);
        b.indices.resize(n);
        b.source = BatchSource::kReplayed;
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t i = replay_rng_.index(p->size());
            b.indices[r] = i;
            auto src_s = p->states.row(i);
            auto src_a = p->actions.row(i);
            std::copy(src_s.begin(), src_s.end(), b.states.row(r).begin());
            std::copy(src_a.begin(), src_a.end(), b.actions.row(r).begin());
            b.returns[r] = p->q_labels[i];
        }
        step.replayed.push_back(std::move(b));
    }
    return step;
}

}  // namespace cugro
