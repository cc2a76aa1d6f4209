#include <doctest.h>

#include <cmath>

#include "cugro/adam.hpp"
#include "cugro/diffusion.hpp"
#include "test_util.hpp"

using namespace cugro;

namespace {

// Frozen reference: exp(-0.25 * 1 * (20 - 0.1) - 0.5 * 1 * 0.1) = exp(-5.025).
constexpr double kAlphaAtOne = 0.006571586494929613;

// Test-local time embedding, recomputed from its definition.
std::vector<double> naive_time_embedding(double t, std::size_t dim) {
    const std::size_t half = dim / 2;
    std::vector<double> out(dim);
    for (std::size_t j = 0; j < half; ++j) {
        const double frac = half == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(half - 1);
        const double omega = std::pow(10.0, 4.0 * frac);
        out[j] = std::sin(omega * t);
        out[half + j] = std::cos(omega * t);
    }
    return out;
}

}  // namespace

TEST_CASE("schedule: alpha^2 + sigma^2 = 1 on the grid, alpha strictly decreasing") {
    VpSchedule sched;
    double prev = 1.0;
    for (double t : sched.grid()) {
        const auto [alpha, sigma] = sched.coeffs(t);
        CHECK(std::abs(alpha * alpha + sigma * sigma - 1.0) <= 1e-12);
        CHECK(alpha < prev);
        prev = alpha;
    }
    CHECK(sched.grid().size() == 100);
}

TEST_CASE("schedule: closed-form endpoints") {
    VpSchedule sched;
    const auto [a1, s1] = sched.coeffs(1.0);
    CHECK(std::abs(a1 - kAlphaAtOne) < 1e-6);
    CHECK(s1 == doctest::Approx(std::sqrt(1.0 - kAlphaAtOne * kAlphaAtOne)).epsilon(1e-12));

    const auto [a0, s0] = sched.coeffs(1e-9);
    CHECK(a0 == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(s0 < 1e-3);

    CHECK_THROWS_AS(sched.coeffs(0.0), NumericError);
    CHECK_THROWS_AS(sched.coeffs(-0.1), NumericError);
    CHECK_THROWS_AS(sched.coeffs(1.0000001), NumericError);
}

TEST_CASE("perturb: limits and shape checks") {
    VpSchedule sched;
    Tensor x = Tensor::row_vector({1.0, -2.0, 0.5});
    Tensor eps = Tensor::row_vector({0.3, 0.1, -0.7});

    const Tensor near_zero = perturb(x, 1e-8, eps, sched);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(near_zero(0, j) == doctest::Approx(x(0, j)).epsilon(1e-6));
    }

    const Tensor at_one = perturb(x, 1.0, eps, sched);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::abs(at_one(0, j) - eps(0, j)) <= kAlphaAtOne * std::abs(x(0, j)) + 1e-12);
    }

    Tensor bad = Tensor::row_vector({1.0});
    CHECK_THROWS_AS(perturb(x, 0.5, bad, sched), ShapeError);
}

TEST_CASE("perturb: Var(x_t) = alpha^2 Var(x) + sigma^2 within 2%") {
    VpSchedule sched;
    const double t = 0.5;
    const auto [alpha, sigma] = sched.coeffs(t);
    Rng rng(100);
    const std::size_t n = 200000;
    Tensor x({n, 1}), eps({n, 1});
    const double sx = 1.5;
    for (double& v : x.data) v = sx * rng.normal();
    for (double& v : eps.data) v = rng.normal();
    const Tensor xt = perturb(x, t, eps, sched);
    double mean = 0.0;
    for (double v : xt.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xt.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double expect = alpha * alpha * sx * sx + sigma * sigma;
    CHECK(std::abs(var - expect) / expect < 0.02);
}

TEST_CASE("denoise loss arithmetic: oracle predictor zeroes it, zero predictor measures noise") {
    Rng rng(7);
    const std::size_t n = 64, d = 3;
    VpSchedule sched;
    Tensor eps({n, d});
    for (double& v : eps.data) v = rng.normal();
    std::vector<double> sigmas(n);
    for (std::size_t r = 0; r < n; ++r) sigmas[r] = sched.coeffs(0.3 + 0.5 * rng.uniform01()).second;

    Tensor oracle({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) oracle(r, j) = -eps(r, j) / sigmas[r];
    }
    CHECK(denoise_loss_value(oracle, eps, sigmas) < 1e-25);

    Tensor zero({n, d});
    double expect = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) expect += eps(r, j) * eps(r, j);
    }
    expect /= static_cast<double>(n);
    CHECK(denoise_loss_value(zero, eps, sigmas) == doctest::Approx(expect).epsilon(1e-14));
    // E ||eps||^2 = d, loosely, at this sample size.
    CHECK(denoise_loss_value(zero, eps, sigmas) == doctest::Approx(d).epsilon(0.35));
}

TEST_CASE("behavior loss matches an independent straight-line recomputation") {
    Rng init(11);
    BehaviorScoreModel model;
    model.action_dim = 2;
    model.state_dim = 3;
    model.time_dim = 8;
    model.sched = VpSchedule{};
    // Plain MLP so the naive re-implementation covers the whole path.
    model.net = make_mlp(init, 2 + 3 + 8, {16, 16}, 2);

    const std::size_t n = 32;
    Batch batch;
    batch.states = Tensor({n, 3});
    batch.actions = Tensor({n, 2});
    batch.task_ids.assign(n, 1);
    for (double& v : batch.states.data) v = init.normal();
    for (double& v : batch.actions.data) v = init.normal();

    Rng loss_rng(555);
    Rng replay_rng = loss_rng;  // identical stream for the recomputation
    const double loss = behavior_loss(model, batch, loss_rng, nullptr);

    double expect = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double t = 1.0 - replay_rng.uniform01() * (1.0 - model.sched.t_min);
        double e[2];
        for (double& v : e) v = replay_rng.normal();
        const auto [alpha, sigma] = model.sched.coeffs(t);
        std::vector<double> input;
        for (std::size_t j = 0; j < 2; ++j) {
            input.push_back(alpha * batch.actions(r, j) + sigma * e[j]);
        }
        for (std::size_t j = 0; j < 3; ++j) input.push_back(batch.states(r, j));
        for (double v : naive_time_embedding(t, 8)) input.push_back(v);
        const std::vector<double> pred = testutil::naive_mlp_forward(model.net, input);
        for (std::size_t j = 0; j < 2; ++j) {
            const double v = sigma * pred[j] + e[j];
            expect += v * v;
        }
    }
    expect /= static_cast<double>(n);
    CHECK(std::abs(loss - expect) < 1e-10);
}

TEST_CASE("zero-output behavior model: loss equals mean ||eps||^2, approx action_dim") {
    Rng init(21);
    VpSchedule sched;
    BehaviorScoreModel model = BehaviorScoreModel::make(init, 2, 4, 8, 16, 2, sched);
    for (DenseLayer& l : model.net.layers) {
        l.w.fill(0.0);
        l.b.fill(0.0);
    }
    const std::size_t n = 4096;
    Batch batch;
    batch.states = Tensor({n, 4});
    batch.actions = Tensor({n, 2});
    batch.task_ids.assign(n, 1);
    for (double& v : batch.states.data) v = init.normal();
    for (double& v : batch.actions.data) v = init.normal();

    Rng loss_rng(9);
    Rng recompute = loss_rng;
    const double loss = behavior_loss(model, batch, loss_rng, nullptr);

    double expect = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        (void)recompute.uniform01();
        for (int j = 0; j < 2; ++j) {
            const double e = recompute.normal();
            expect += e * e;
        }
    }
    expect /= static_cast<double>(n);
    CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
    CHECK(loss == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("state loss depends on the task embedding row") {
    Rng init(31);
    VpSchedule sched;
    StateScoreModel model = StateScoreModel::make(init, 4, 8, 8, 16, 2, 2, sched);
    const std::size_t n = 16;
    Batch b1, b2;
    b1.states = Tensor({n, 4});
    for (double& v : b1.states.data) v = init.normal();
    b2.states = b1.states;
    b1.task_ids.assign(n, 1);
    b2.task_ids.assign(n, 2);

    Rng r1(77), r2(77);
    const double l1 = state_loss(model, b1, r1, nullptr);
    const double l2 = state_loss(model, b2, r2, nullptr);
    CHECK(l1 != l2);

    Batch b3 = b1;
    b3.task_ids.assign(n, 3);
    Rng r3(77);
    CHECK_THROWS_AS(state_loss(model, b3, r3, nullptr), Error);
}

TEST_CASE("replay losses: degenerate forms and term-by-term composition") {
    Rng init(41);
    VpSchedule sched;
    StateScoreModel model = StateScoreModel::make(init, 4, 8, 8, 16, 2, 3, sched);

    auto make_states = [&](std::size_t n, int task) {
        Batch b;
        b.states = Tensor({n, 4});
        for (double& v : b.states.data) v = init.normal();
        b.task_ids.assign(n, task);
        b.source = task == 3 ? BatchSource::kReal : BatchSource::kReplayed;
        return b;
    };

    SUBCASE("beta = 0 and the empty sum reduce to the plain loss") {
        MixedStep step;
        step.real = make_states(24, 3);
        step.beta = 0.0;
        Rng a(5), b(5);
        const double replay = state_replay_loss(model, step, a, nullptr);
        const double plain = state_loss(model, step.real, b, nullptr);
        CHECK(replay == plain);
    }

    SUBCASE("K = 3, beta = 1: equals the sum of individually computed terms") {
        MixedStep step;
        step.real = make_states(24, 3);
        step.replayed.push_back(make_states(16, 1));
        step.replayed.push_back(make_states(16, 2));
        step.beta = 1.0;
        Rng a(6), b(6);
        const double total = state_replay_loss(model, step, a, nullptr);
        double expect = state_loss_term(model, step.real.states, step.real.task_ids, b, 1.0, nullptr);
        for (const Batch& rb : step.replayed) {
            expect += state_loss_term(model, rb.states, rb.task_ids, b, 1.0, nullptr);
        }
        CHECK(total == doctest::Approx(expect).epsilon(1e-12));
    }

    SUBCASE("replayed ids must sit strictly below the current task") {
        MixedStep step;
        step.real = make_states(8, 2);
        step.replayed.push_back(make_states(8, 3));
        step.beta = 1.0;
        Rng a(7);
        CHECK_THROWS_AS(state_replay_loss(model, step, a, nullptr), Error);
    }
}

TEST_CASE("behavior replay loss composes like the state form") {
    Rng init(51);
    VpSchedule sched;
    BehaviorScoreModel model = BehaviorScoreModel::make(init, 2, 4, 8, 16, 2, sched);
    auto make_pairs = [&](std::size_t n, int task) {
        Batch b;
        b.states = Tensor({n, 4});
        b.actions = Tensor({n, 2});
        for (double& v : b.states.data) v = init.normal();
        for (double& v : b.actions.data) v = init.normal();
        b.task_ids.assign(n, task);
        return b;
    };
    MixedStep step;
    step.real = make_pairs(20, 2);
    step.replayed.push_back(make_pairs(12, 1));
    step.beta = 0.5;
    Rng a(8), b(8);
    const double total = behavior_replay_loss(model, step, a, nullptr);
    double expect =
        behavior_loss_term(model, step.real.actions, step.real.states, b, 1.0, nullptr);
    expect += 0.5 * behavior_loss_term(model, step.replayed[0].actions, step.replayed[0].states,
                                       b, 0.5, nullptr);
    CHECK(total == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("denoising optimum: the analytic conditional score beats the zero predictor at every grid t") {
    VpSchedule sched;
    Rng rng(61);
    const double x0 = 1.3;
    const std::size_t n = 64;
    for (double t : sched.grid()) {
        const auto [alpha, sigma] = sched.coeffs(t);
        (void)alpha;
        Tensor eps({n, 1});
        for (double& v : eps.data) v = rng.normal();
        // Conditional score of the single-point dataset at x_t: -eps/sigma.
        Tensor score_pred({n, 1});
        for (std::size_t r = 0; r < n; ++r) score_pred(r, 0) = -eps(r, 0) / sigma;
        Tensor zero_pred({n, 1});
        const std::vector<double> sigmas(n, sigma);
        const double analytic = denoise_loss_value(score_pred, eps, sigmas);
        const double zero = denoise_loss_value(zero_pred, eps, sigmas);
        CHECK(analytic < zero);
        CHECK(analytic < 1e-20);
    }
}

TEST_CASE("analytic Gaussian score reproduces (mu, sigma^2) through the sampler") {
    VpSchedule sched;
    const double mu = 0.7, var0 = 0.64;
    ScoreFn score = [&](const Tensor& x, double t) {
        const auto [alpha, sigma] = sched.coeffs(t);
        const double marg = alpha * alpha * var0 + sigma * sigma;
        Tensor out(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) {
            out.data[i] = -(x.data[i] - alpha * mu) / marg;
        }
        return out;
    };
    Rng rng(71);
    const Tensor samples = reverse_sample(score, 10000, 1, sched, rng);
    double mean = 0.0;
    for (double v : samples.data) mean += v;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double v : samples.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(samples.size());
    CHECK(std::abs(mean - mu) < 0.05);
    CHECK(std::abs(var - var0) < 0.1);
}

TEST_CASE("sampler discretization: T = 100 vs T = 1000 moments agree within MC error") {
    const double mu = -0.4, var0 = 1.21;
    auto run = [&](int steps, std::uint64_t seed) {
        VpSchedule sched;
        sched.steps = steps;
        ScoreFn score = [&sched, mu, var0](const Tensor& x, double t) {
            const auto [alpha, sigma] = sched.coeffs(t);
            const double marg = alpha * alpha * var0 + sigma * sigma;
            Tensor out(x.shape);
            for (std::size_t i = 0; i < x.size(); ++i) {
                out.data[i] = -(x.data[i] - alpha * mu) / marg;
            }
            return out;
        };
        Rng rng(seed);
        const Tensor s = reverse_sample(score, 20000, 1, sched, rng);
        double mean = 0.0;
        for (double v : s.data) mean += v;
        mean /= static_cast<double>(s.size());
        double var = 0.0;
        for (double v : s.data) var += (v - mean) * (v - mean);
        var /= static_cast<double>(s.size());
        return std::pair{mean, var};
    };
    const auto [m100, v100] = run(100, 81);
    const auto [m1000, v1000] = run(1000, 82);
    // MC error bars at n = 20000: ~3 sigma/sqrt(n) ~ 0.024 for the mean.
    CHECK(std::abs(m100 - m1000) < 0.05);
    CHECK(std::abs(v100 - v1000) < 0.1);
}

TEST_CASE("sampler flags divergence with the failing step") {
    VpSchedule sched;
    ScoreFn bad = [](const Tensor& x, double) {
        Tensor out(x.shape);
        for (double& v : out.data) v = 1e300;
        return out;
    };
    Rng rng(91);
    try {
        reverse_sample(bad, 4, 2, sched, rng);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("trained 1D behavior model recovers a unit Gaussian") {
    VpSchedule sched;
    Rng init(101);
    BehaviorScoreModel model = BehaviorScoreModel::make(init, 1, 1, 8, 32, 2, sched);

    const std::size_t n = 2048;
    Tensor actions({n, 1}), states({n, 1});
    Rng data_rng(102);
    for (double& v : actions.data) v = data_rng.normal();

    Adam adam({1e-3, 0.9, 0.999, 1e-8});
    adam.reset(model.params());
    NetGrads grads;
    grads.init(model.net, 256);
    Rng loss_rng(103);
    Rng batch_rng(104);
    for (int step_i = 0; step_i < 1500; ++step_i) {
        Tensor ab({256, 1}), sb({256, 1});
        for (std::size_t r = 0; r < 256; ++r) {
            ab(r, 0) = actions(batch_rng.index(n), 0);
        }
        grads.zero();
        behavior_loss_term(model, ab, sb, loss_rng, 1.0, &grads);
        adam.step(model.params(), grads.param_grads());
    }

    Rng sample_rng(105);
    Tensor cond({10000, 1});
    const Tensor samples = sample_actions(model, cond, sample_rng);
    double mean = 0.0;
    for (double v : samples.data) mean += v;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double v : samples.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(samples.size());
    CHECK(std::abs(mean - 0.0) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("score model checkpoints round-trip bit-exactly") {
    const auto dir = testutil::temp_dir("diffusion_ckpt");
    Rng init(111);
    VpSchedule sched;
    sched.t_min = 2e-3;
    BehaviorScoreModel bm = BehaviorScoreModel::make(init, 2, 4, 16, 24, 2, sched);
    save_behavior_model(bm, dir / "behavior");
    const BehaviorScoreModel bback = load_behavior_model(dir / "behavior");
    CHECK(bback.sched.t_min == sched.t_min);
    for (std::size_t l = 0; l < bm.net.layers.size(); ++l) {
        CHECK(bback.net.layers[l].w.data == bm.net.layers[l].w.data);
    }

    StateScoreModel sm = StateScoreModel::make(init, 4, 8, 16, 24, 2, 3, sched);
    save_state_model(sm, dir / "state");
    const StateScoreModel sback = load_state_model(dir / "state");
    CHECK(sback.task_emb.table.data == sm.task_emb.table.data);
    CHECK(sback.task_emb.rows() == 3);

    CHECK_THROWS_AS(load_behavior_model(dir / "state"), FormatError);
    std::filesystem::remove_all(dir);
}
