#include <doctest.h>

#include <fstream>

#include "cugro/blobio.hpp"
#include "cugro/cli.hpp"
#include "cugro/config.hpp"
#include "test_util.hpp"

using namespace cugro;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"cugro"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

// Micro settings so CLI round-trips stay fast.
std::string tiny_config_text(const std::filesystem::path& data_dir, int tasks = 1) {
    std::string text;
    text += "family = dir\n";
    text += "tasks = " + std::to_string(tasks) + "\n";
    text += "horizon = 20\n";
    text += "task_params = 0.0" + std::string(tasks > 1 ? ";2.1" : "") +
            std::string(tasks > 2 ? ";4.2" : "") + "\n";
    text += "quality = medium\n";
    text += "transitions_per_task = 120\n";
    text += "data_dir = " + data_dir.string() + "\n";
    text += "diffusion_steps = 20\n";
    text += "hidden = 16\n";
    text += "time_embed = 4\n";
    text += "task_embed = 4\n";
    text += "critic_hidden = 16\n";
    text += "batch = 64\n";
    text += "behavior_epochs = 3\n";
    text += "state_epochs = 3\n";
    text += "critic_epochs = 3\n";
    text += "value_actions = 2\n";
    text += "lr = 0.001\n";
    text += "candidates = 4\n";
    text += "eval_episodes = 2\n";
    return text;
}

}  // namespace

TEST_CASE("config: defaults, parse, canonical echo") {
    const ExperimentConfig def;
    const ExperimentConfig parsed = ExperimentConfig::parse("");
    CHECK(parsed == def);

    const ExperimentConfig cfg = ExperimentConfig::parse(
        "family = vel\n"
        "tasks = 4\n"
        "# a comment\n"
        "lambda = 0.25\n"
        "strict_checks = true\n"
        "lr = 3e-4\n");
    CHECK(cfg.family == "vel");
    CHECK(cfg.tasks == 4);
    CHECK(cfg.lambda == 0.25);
    CHECK(cfg.strict_checks);
    CHECK(cfg.lr == 3e-4);

    const ExperimentConfig again = ExperimentConfig::parse(cfg.serialize());
    CHECK(again == cfg);
}

TEST_CASE("config: unknown keys and bad values are rejected by name") {
    try {
        ExperimentConfig::parse("no_such_key = 3\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("no_such_key") != std::string::npos);
    }
    try {
        ExperimentConfig::parse("family = swimmer\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("swimmer") != std::string::npos);
    }
    CHECK_THROWS_AS(ExperimentConfig::parse("tasks = many\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("variant = replay\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("selection = greedy\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("strict_checks = maybe\n"), ConfigError);
}

TEST_CASE("config: task materialization") {
    ExperimentConfig cfg;
    cfg.family = "dir";
    cfg.tasks = 3;
    cfg.task_params = "0.0;1.57;3.14";
    const auto tasks = cfg.make_tasks();
    REQUIRE(tasks.size() == 3);
    CHECK(tasks[0].dir_x == doctest::Approx(1.0));
    CHECK(tasks[1].dir_y == doctest::Approx(1.0).epsilon(1e-3));
    for (int k = 0; k < 3; ++k) CHECK(tasks[k].task_id == k + 1);

    cfg.task_params = "0.0;1.0";
    CHECK_THROWS_AS(cfg.make_tasks(), ConfigError);

    ExperimentConfig dyn;
    dyn.family = "dyn";
    dyn.tasks = 2;
    dyn.task_params = "1.0:1.0;2.0:0.5";
    const auto dtasks = dyn.make_tasks();
    CHECK(dtasks[1].friction_mult == 2.0);
    CHECK(dtasks[1].mass_mult == 0.5);

    ExperimentConfig seeded;
    seeded.tasks = 4;
    const auto t1 = seeded.make_tasks();
    const auto t2 = seeded.make_tasks();
    for (int k = 0; k < 4; ++k) {
        CHECK(t1[k].dir_x == t2[k].dir_x);  // derived params are seeded
    }
}

TEST_CASE("cli: collect writes deterministic dataset files") {
    const auto dir = testutil::temp_dir("cli_collect");
    const auto cfg_path = dir / "exp.cfg";
    write_text_file(cfg_path, tiny_config_text(dir / "data", 2));

    CHECK(run_cli({"collect", "--config", cfg_path.string()}) == 0);
    CHECK(std::filesystem::exists(dir / "data" / "task1_medium.ds"));
    CHECK(std::filesystem::exists(dir / "data" / "task2_medium.ds"));
    const auto first = read_binary_file(dir / "data" / "task1_medium.ds");

    CHECK(run_cli({"collect", "--config", cfg_path.string()}) == 0);
    CHECK(read_binary_file(dir / "data" / "task1_medium.ds") == first);

    // Quality list expands to one file per tier.
    CHECK(run_cli({"collect", "--config", cfg_path.string(), "--quality", "expert,replay"}) == 0);
    CHECK(std::filesystem::exists(dir / "data" / "task1_expert.ds"));
    CHECK(std::filesystem::exists(dir / "data" / "task2_replay.ds"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli: train requires collected datasets and reports the path") {
    const auto dir = testutil::temp_dir("cli_train_missing");
    const auto cfg_path = dir / "exp.cfg";
    write_text_file(cfg_path, tiny_config_text(dir / "data"));
    CHECK(run_cli({"train", "--config", cfg_path.string(), "--out", (dir / "run").string()}) == 3);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli: collect + train + eval round-trip on a micro config") {
    const auto dir = testutil::temp_dir("cli_train");
    const auto cfg_path = dir / "exp.cfg";
    write_text_file(cfg_path, tiny_config_text(dir / "data", 2));

    REQUIRE(run_cli({"collect", "--config", cfg_path.string()}) == 0);
    const auto run_dir = dir / "run";
    REQUIRE(run_cli({"train", "--config", cfg_path.string(), "--out", run_dir.string()}) == 0);
    CHECK(std::filesystem::exists(run_dir / "config.txt"));
    CHECK(std::filesystem::exists(run_dir / "metrics.csv"));
    CHECK(std::filesystem::exists(run_dir / "ckpt_task2" / "critic.manifest"));

    // The echoed config re-parses to the effective structure.
    const ExperimentConfig echoed = ExperimentConfig::parse_file(run_dir / "config.txt");
    ExperimentConfig expect = ExperimentConfig::parse_file(cfg_path);
    CHECK(echoed == expect);

    // metrics.csv carries the documented schema.
    const std::string metrics = read_text_file(run_dir / "metrics.csv");
    CHECK(metrics.rfind("phase,task,mean_return,std_return,forgetting,variant,seed,lambda,beta",
                        0) == 0);

    // Re-running the finished run is a no-op that leaves metrics identical.
    REQUIRE(run_cli({"train", "--config", cfg_path.string(), "--out", run_dir.string()}) == 0);
    CHECK(read_text_file(run_dir / "metrics.csv") == metrics);

    // A conflicting config in the same run directory is refused.
    CHECK(run_cli({"train", "--config", cfg_path.string(), "--out", run_dir.string(), "--lambda",
                   "0.5"}) == 2);

    CHECK(run_cli({"eval", "--ckpt", run_dir.string(), "--episodes", "2"}) == 0);
    CHECK(std::filesystem::exists(run_dir / "eval.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli: plot renders polylines with filename legends") {
    const auto dir = testutil::temp_dir("cli_plot");
    const std::string header = metrics_csv_header();
    write_text_file(dir / "alpha.csv",
                    header + "\n1,1,5.0,0.1,0,diffusion,1,1,1\n2,1,4.0,0.1,1,diffusion,1,1,1\n"
                             "2,2,6.0,0.1,0,diffusion,1,1,1\n");
    write_text_file(dir / "bravo.csv", header + "\n1,1,2.0,0.1,0,none,1,1,1\n");

    const auto one = dir / "one.svg";
    CHECK(run_cli({"plot", (dir / "alpha.csv").string(), "--out", one.string()}) == 0);
    const std::string svg1 = read_text_file(one);
    CHECK(svg1.find("<svg") != std::string::npos);
    std::size_t polylines = 0;
    for (std::size_t at = svg1.find("<polyline"); at != std::string::npos;
         at = svg1.find("<polyline", at + 1)) {
        ++polylines;
    }
    CHECK(polylines == 1);

    const auto two = dir / "two.svg";
    CHECK(run_cli({"plot", (dir / "alpha.csv").string(), (dir / "bravo.csv").string(), "--out",
                   two.string()}) == 0);
    const std::string svg2 = read_text_file(two);
    CHECK(svg2.find("alpha") != std::string::npos);
    CHECK(svg2.find("bravo") != std::string::npos);

    // Headerless/empty files are data errors.
    write_text_file(dir / "empty.csv", "");
    CHECK(run_cli({"plot", (dir / "empty.csv").string(), "--out", (dir / "x.svg").string()}) == 3);
    write_text_file(dir / "norows.csv", header + "\n");
    CHECK(run_cli({"plot", (dir / "norows.csv").string(), "--out", (dir / "y.svg").string()}) ==
          3);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli: sweep produces one run directory per lambda") {
    const auto dir = testutil::temp_dir("cli_sweep");
    const auto cfg_path = dir / "exp.cfg";
    write_text_file(cfg_path, tiny_config_text(dir / "data", 1));
    REQUIRE(run_cli({"collect", "--config", cfg_path.string()}) == 0);
    REQUIRE(run_cli({"sweep", "--config", cfg_path.string(), "--lambdas", "0.1,1", "--out",
                     (dir / "sweep").string()}) == 0);
    CHECK(std::filesystem::exists(dir / "sweep" / "lam0.1" / "metrics.csv"));
    CHECK(std::filesystem::exists(dir / "sweep" / "lam1" / "metrics.csv"));
    const Metrics m = load_metrics_csv(dir / "sweep" / "lam0.1" / "metrics.csv");
    CHECK(m.rows.at(0).lambda == 0.1);
    std::filesystem::remove_all(dir);
}
