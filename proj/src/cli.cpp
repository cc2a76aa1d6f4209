#include "cugro/cli.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cugro/blobio.hpp"
#include "cugro/config.hpp"
#include "cugro/svgplot.hpp"

namespace cugro {

namespace fs = std::filesystem;

namespace {

fs::path resolve_out(const std::string& out) {
    fs::path p(out);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("CUGRO_OUT")) {
        return fs::path(root) / p;
    }
    return p;
}

std::string compact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

struct Overrides {
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::string variant;
    double lambda = 0.0;
    bool has_lambda = false;
    double beta = 0.0;
    bool has_beta = false;

    void apply(ExperimentConfig& cfg) const {
        if (has_seed) cfg.seed = seed;
        if (!variant.empty()) cfg.variant = variant;
        if (has_lambda) cfg.lambda = lambda;
        if (has_beta) cfg.beta = beta;
    }
};

std::vector<OfflineDataset> load_task_datasets(const ExperimentConfig& cfg) {
    std::vector<OfflineDataset> out;
    for (int k = 1; k <= cfg.tasks; ++k) {
        const fs::path path = cfg.dataset_path(k);
        if (!fs::exists(path)) {
            throw DataError("missing dataset for task " + std::to_string(k) + ": " +
                            path.string() + " (run `collect` first)");
        }
        out.push_back(load_dataset(path));
    }
    return out;
}

void write_or_check_config_echo(const ExperimentConfig& cfg, const fs::path& run_dir) {
    const fs::path echo = run_dir / "config.txt";
    if (fs::exists(echo)) {
        const ExperimentConfig stored = ExperimentConfig::parse_file(echo);
        if (!(stored == cfg)) {
            throw ConfigError("run directory " + run_dir.string() +
                              " holds a different config; refusing to resume");
        }
        return;
    }
    write_text_file(echo, cfg.serialize());
}

int run_train(const ExperimentConfig& cfg, const fs::path& run_dir) {
    const SequenceConfig seq = cfg.to_sequence_config();
    const std::vector<OfflineDataset> datasets = load_task_datasets(cfg);
    fs::create_directories(run_dir);
    write_or_check_config_echo(cfg, run_dir);
    const RunReport report = run_sequence(seq, datasets, run_dir);
    const int last = report.metrics.last_phase();
    for (int phase = 1; phase <= last; ++phase) {
        std::printf("phase %d: cumulative average return %.4f\n", phase,
                    report.metrics.cumulative_average(phase));
    }
    std::printf("run directory: %s\n", run_dir.string().c_str());
    return 0;
}

int cmd_collect(const std::string& config_path, const Overrides& ov, const std::string& out,
                const std::string& quality_list) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    ov.apply(cfg);
    if (!out.empty()) cfg.data_dir = resolve_out(out).string();
    std::vector<std::string> qualities;
    std::istringstream in(quality_list.empty() ? cfg.quality : quality_list);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (!tok.empty()) qualities.push_back(tok);
    }
    const std::vector<TaskSpec> tasks = cfg.make_tasks();
    fs::create_directories(cfg.data_dir);
    for (const TaskSpec& task : tasks) {
        for (const std::string& qname : qualities) {
            const PolicyQuality q = quality_from_name(qname);
            const std::uint64_t seed = derive_seed(
                cfg.seed, {fnv1a64("collect"), static_cast<std::uint64_t>(task.task_id),
                           fnv1a64(qname)});
            const OfflineDataset ds =
                collect_dataset(task, q, cfg.transitions_per_task, seed);
            const fs::path path = cfg.dataset_path(task.task_id, qname);
            save_dataset(ds, path);
            std::printf("wrote %s (%zu transitions, %zu trajectories, mean return %.3f)\n",
                        path.string().c_str(), ds.size(), ds.n_trajectories(), ds.mean_return());
        }
    }
    return 0;
}

int cmd_train(const std::string& config_path, const Overrides& ov, const std::string& out) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    ov.apply(cfg);
    const fs::path run_dir = resolve_out(out.empty() ? "run" : out);
    return run_train(cfg, run_dir);
}

int cmd_eval(const std::string& ckpt_dir, int episodes, const Overrides& ov) {
    const fs::path run_dir(ckpt_dir);
    const fs::path echo = run_dir / "config.txt";
    if (!fs::exists(echo)) {
        throw DataError("no config.txt in " + run_dir.string() + "; not a run directory?");
    }
    ExperimentConfig cfg = ExperimentConfig::parse_file(echo);
    if (ov.has_seed) cfg.seed = ov.seed;

    int latest = 0;
    for (int k = 1; k <= cfg.tasks; ++k) {
        if (fs::exists(run_dir / ("ckpt_task" + std::to_string(k)) / "run.manifest")) latest = k;
    }
    if (latest == 0) throw DataError("no checkpoints under " + run_dir.string());
    const ContinualState state = load_continual_state(run_dir / ("ckpt_task" + std::to_string(latest)));
    const SequenceConfig seq = cfg.to_sequence_config();
    const Normalizer norm = Normalizer::from_stats(merge_norm_stats(state.stat_history));

    const int n_eval = episodes > 0 ? episodes : cfg.eval_episodes;
    const fs::path eval_csv = run_dir / "eval.csv";
    const bool fresh = !fs::exists(eval_csv);
    std::ofstream csv(eval_csv, std::ios::app);
    if (!csv) throw DataError("cannot write " + eval_csv.string());
    if (fresh) csv << metrics_csv_header() << "\n";

    double total = 0.0;
    for (int k = 1; k <= state.tasks_done; ++k) {
        const EvalResult ev = evaluate_task(
            state.behavior_gen, state.critic, norm, seq.tasks[static_cast<std::size_t>(k - 1)],
            n_eval, seq.policy,
            derive_seed(cfg.seed, {fnv1a64("cli-eval"), static_cast<std::uint64_t>(latest),
                                   static_cast<std::uint64_t>(k)}));
        MetricsRow row;
        row.phase = latest;
        row.task = k;
        row.mean_return = ev.mean;
        row.std_return = ev.stddev;
        row.forgetting = 0.0;
        row.variant = cfg.variant;
        row.seed = cfg.seed;
        row.lambda = cfg.lambda;
        row.beta = cfg.beta;
        csv << metrics_csv_line(row) << "\n";
        std::printf("task %d: mean return %.4f (std %.4f) over %d episodes\n", k, ev.mean,
                    ev.stddev, n_eval);
        total += ev.mean;
    }
    std::printf("cumulative average over %d tasks: %.4f\n", state.tasks_done,
                total / state.tasks_done);
    return 0;
}

int cmd_plot(const std::vector<std::string>& csvs, const std::string& out,
             const std::string& metric) {
    if (metric != "mean_return" && metric != "forgetting") {
        throw ConfigError("plot: --metric must be mean_return or forgetting");
    }
    std::vector<PlotSeries> series;
    for (const std::string& file : csvs) {
        const Metrics m = load_metrics_csv(file);
        if (m.rows.empty()) throw FormatError(file + ": no data rows");
        PlotSeries s;
        s.label = fs::path(file).stem().string();
        for (int phase = 1; phase <= m.last_phase(); ++phase) {
            double total = 0.0;
            int n = 0;
            for (const MetricsRow& r : m.rows) {
                if (r.phase != phase) continue;
                total += metric == "mean_return" ? r.mean_return : r.forgetting;
                ++n;
            }
            if (n > 0) s.points.emplace_back(phase, total / n);
        }
        series.push_back(std::move(s));
    }
    const std::string ylab =
        metric == "mean_return" ? "cumulative average return" : "average forgetting";
    write_line_chart_svg(out, ylab + " by task phase", "task phase", ylab, series);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_sweep(const std::string& config_path, const Overrides& ov, const std::string& out,
              const std::string& lambdas, const std::string& betas, const std::string& seeds,
              int jobs) {
    ExperimentConfig base = ExperimentConfig::parse_file(config_path);
    ov.apply(base);
    auto parse_list = [](const std::string& text) {
        std::vector<std::string> out_list;
        std::istringstream in(text);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            if (!tok.empty()) out_list.push_back(tok);
        }
        return out_list;
    };
    std::vector<double> lam_values, beta_values;
    std::vector<std::uint64_t> seed_values;
    for (const std::string& s : parse_list(lambdas)) lam_values.push_back(std::stod(s));
    for (const std::string& s : parse_list(betas)) beta_values.push_back(std::stod(s));
    for (const std::string& s : parse_list(seeds)) seed_values.push_back(std::stoull(s));
    if (lam_values.empty()) lam_values.push_back(base.lambda);
    if (beta_values.empty()) beta_values.push_back(base.beta);
    if (seed_values.empty()) seed_values.push_back(base.seed);

    struct Job {
        ExperimentConfig cfg;
        fs::path dir;
    };
    std::vector<Job> queue;
    const fs::path root = resolve_out(out.empty() ? "sweep" : out);
    for (double lam : lam_values) {
        for (double b : beta_values) {
            for (std::uint64_t s : seed_values) {
                ExperimentConfig cfg = base;
                cfg.lambda = lam;
                cfg.beta = b;
                cfg.seed = s;
                std::string name = "lam" + compact(lam);
                if (beta_values.size() > 1) name += "_beta" + compact(b);
                if (seed_values.size() > 1) name += "_seed" + std::to_string(s);
                queue.push_back({std::move(cfg), root / name});
            }
        }
    }

    // Each run owns its directory; runs are independent, so they may be
    // dispatched concurrently.
    std::vector<std::thread> workers;
    std::atomic<std::size_t> next{0};
    std::atomic<int> failures{0};
    const int n_jobs = std::max(1, jobs);
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= queue.size()) return;
            try {
                run_train(queue[i].cfg, queue[i].dir);
            } catch (const std::exception& e) {
                std::fprintf(stderr, "sweep run %s failed: %s\n", queue[i].dir.string().c_str(),
                             e.what());
                ++failures;
            }
        }
    };
    if (n_jobs == 1) {
        worker();
    } else {
        for (int j = 0; j < n_jobs; ++j) workers.emplace_back(worker);
        for (std::thread& t : workers) t.join();
    }
    std::printf("sweep complete: %zu runs under %s\n", queue.size(), root.string().c_str());
    return failures.load() == 0 ? 0 : 1;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Continual offline RL laboratory: dual diffusion generators with a multi-head "
                 "critic on toy point-mass tasks"};
    app.require_subcommand(1);

    Overrides ov;
    std::string config_path, out, quality_list, ckpt_dir, metric = "mean_return";
    std::string lambdas, betas, seeds;
    std::vector<std::string> csvs;
    int episodes = 0, jobs = 1;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        if (needs_config) {
            cmd->add_option("--config", config_path, "experiment config file")->required();
        }
        cmd->add_option("--seed", ov.seed, "override seed")->each([&](const std::string&) {
            ov.has_seed = true;
        });
        cmd->add_option("--out", out, "output directory");
    };

    CLI::App* collect = app.add_subcommand("collect", "collect offline datasets per task");
    add_common(collect, true);
    collect->add_option("--quality", quality_list, "comma-separated quality tiers to collect");

    CLI::App* train = app.add_subcommand("train", "run the sequential-task training loop");
    add_common(train, true);
    train->add_option("--variant", ov.variant, "replay variant: diffusion|oracle|noise|none");
    train->add_option("--lambda", ov.lambda, "critic cloning coefficient")
        ->each([&](const std::string&) { ov.has_lambda = true; });
    train->add_option("--beta", ov.beta, "replay mixing ratio")->each([&](const std::string&) {
        ov.has_beta = true;
    });

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a run directory's checkpoint");
    eval_cmd->add_option("--ckpt", ckpt_dir, "run directory")->required();
    eval_cmd->add_option("--episodes", episodes, "episodes per task");
    eval_cmd->add_option("--seed", ov.seed, "evaluation seed")->each([&](const std::string&) {
        ov.has_seed = true;
    });

    CLI::App* plot = app.add_subcommand("plot", "render metrics CSVs as an SVG line chart");
    plot->add_option("csv", csvs, "metrics.csv files")->required();
    plot->add_option("--out", out, "output .svg path")->required();
    plot->add_option("--metric", metric, "mean_return|forgetting");

    CLI::App* sweep = app.add_subcommand("sweep", "train over lists of lambda/beta/seed values");
    add_common(sweep, true);
    sweep->add_option("--lambdas", lambdas, "comma-separated lambda values");
    sweep->add_option("--betas", betas, "comma-separated beta values");
    sweep->add_option("--seeds", seeds, "comma-separated seeds");
    sweep->add_option("--jobs", jobs, "concurrent runs");
    sweep->add_option("--variant", ov.variant, "replay variant");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (collect->parsed()) return cmd_collect(config_path, ov, out, quality_list);
        if (train->parsed()) return cmd_train(config_path, ov, out);
        if (eval_cmd->parsed()) return cmd_eval(ckpt_dir, episodes, ov);
        if (plot->parsed()) return cmd_plot(csvs, out, metric);
        if (sweep->parsed()) return cmd_sweep(config_path, ov, out, lambdas, betas, seeds, jobs);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace cugro
