#include "cugro/config.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "cugro/blobio.hpp"

namespace cugro {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Field {
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T out;
    in >> out;
    if (in.fail() || !in.eof()) {
        throw ConfigError("config field '" + key + "': cannot parse value '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config field '" + key + "': expected true|false, got '" + value + "'");
}

const std::vector<Field>& schema() {
    static const std::vector<Field> fields = [] {
        std::vector<Field> f;
        auto add_str = [&f](const char* key, std::string ExperimentConfig::* member) {
            f.push_back({key, [member](const ExperimentConfig& c) { return c.*member; },
                         [member](ExperimentConfig& c, const std::string& v) { c.*member = v; }});
        };
        auto add_int = [&f](const char* key, auto ExperimentConfig::* member) {
            f.push_back({key,
                         [member](const ExperimentConfig& c) { return std::to_string(c.*member); },
                         [member, key](ExperimentConfig& c, const std::string& v) {
                             c.*member = parse_number<std::decay_t<decltype(c.*member)>>(key, v);
                         }});
        };
        auto add_f64 = [&f](const char* key, double ExperimentConfig::* member) {
            f.push_back({key, [member](const ExperimentConfig& c) { return fmt_double(c.*member); },
                         [member, key](ExperimentConfig& c, const std::string& v) {
                             c.*member = parse_number<double>(key, v);
                         }});
        };
        auto add_bool = [&f](const char* key, bool ExperimentConfig::* member) {
            f.push_back({key,
                         [member](const ExperimentConfig& c) {
                             return std::string(c.*member ? "true" : "false");
                         },
                         [member, key](ExperimentConfig& c, const std::string& v) {
                             c.*member = parse_bool(key, v);
                         }});
        };

        add_str("family", &ExperimentConfig::family);
        add_int("tasks", &ExperimentConfig::tasks);
        add_int("horizon", &ExperimentConfig::horizon);
        add_str("task_params", &ExperimentConfig::task_params);
        add_int("task_seed", &ExperimentConfig::task_seed);
        add_str("quality", &ExperimentConfig::quality);
        add_int("transitions_per_task", &ExperimentConfig::transitions_per_task);
        add_f64("gamma", &ExperimentConfig::gamma);
        add_str("data_dir", &ExperimentConfig::data_dir);
        add_str("variant", &ExperimentConfig::variant);
        add_f64("beta", &ExperimentConfig::beta);
        add_f64("lambda", &ExperimentConfig::lambda);
        add_int("replay_per_task", &ExperimentConfig::replay_per_task);
        add_int("seed", &ExperimentConfig::seed);
        add_int("stop_after", &ExperimentConfig::stop_after);
        add_bool("strict_checks", &ExperimentConfig::strict_checks);
        add_f64("beta_min", &ExperimentConfig::beta_min);
        add_f64("beta_max", &ExperimentConfig::beta_max);
        add_int("diffusion_steps", &ExperimentConfig::diffusion_steps);
        add_f64("t_min", &ExperimentConfig::t_min);
        add_int("hidden", &ExperimentConfig::hidden);
        add_int("depth", &ExperimentConfig::depth);
        add_int("time_embed", &ExperimentConfig::time_embed);
        add_int("task_embed", &ExperimentConfig::task_embed);
        add_int("critic_hidden", &ExperimentConfig::critic_hidden);
        add_int("critic_layers", &ExperimentConfig::critic_layers);
        add_int("batch", &ExperimentConfig::batch);
        add_int("behavior_epochs", &ExperimentConfig::behavior_epochs);
        add_int("state_epochs", &ExperimentConfig::state_epochs);
        add_int("critic_epochs", &ExperimentConfig::critic_epochs);
        add_int("value_iterations", &ExperimentConfig::value_iterations);
        add_int("value_actions", &ExperimentConfig::value_actions);
        add_str("value_weighting", &ExperimentConfig::value_weighting);
        add_f64("lr", &ExperimentConfig::lr);
        add_f64("alpha", &ExperimentConfig::alpha);
        add_int("candidates", &ExperimentConfig::candidates);
        add_str("selection", &ExperimentConfig::selection);
        add_int("eval_episodes", &ExperimentConfig::eval_episodes);
        return f;
    }();
    return fields;
}

const Field* find_field(const std::string& key) {
    for (const Field& f : schema()) {
        if (f.key == key) return &f;
    }
    return nullptr;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, sep)) out.push_back(trim(tok));
    return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Field* field = find_field(key);
        if (!field) {
            throw ConfigError("unknown config key '" + key + "' at line " + std::to_string(lineno));
        }
        field->set(cfg, value);
    }
    // Validate enumerated fields eagerly so bad names fail at parse time.
    family_from_name(cfg.family);
    variant_from_name(cfg.variant);
    quality_from_name(cfg.quality);
    if (cfg.value_weighting != "mean" && cfg.value_weighting != "softmax") {
        throw ConfigError("config field 'value_weighting': expected mean|softmax");
    }
    if (cfg.selection != "softmax" && cfg.selection != "argmax") {
        throw ConfigError("config field 'selection': expected softmax|argmax");
    }
    if (cfg.tasks < 1) throw ConfigError("config field 'tasks': must be >= 1");
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::filesystem::path& path) {
    return parse(read_text_file(path));
}

std::string ExperimentConfig::serialize() const {
    std::string out;
    for (const Field& f : schema()) {
        out += f.key;
        out += " = ";
        out += f.get(*this);
        out += "\n";
    }
    return out;
}

std::vector<TaskSpec> ExperimentConfig::make_tasks() const {
    const TaskFamily fam = family_from_name(family);
    std::vector<std::string> params;
    if (!task_params.empty()) {
        params = split(task_params, ';');
        if (static_cast<int>(params.size()) != tasks) {
            throw ConfigError("config field 'task_params': expected " + std::to_string(tasks) +
                              " entries, got " + std::to_string(params.size()));
        }
    }
    Rng rng(derive_seed(task_seed, {fnv1a64("tasks")}));
    std::vector<TaskSpec> out;
    for (int k = 1; k <= tasks; ++k) {
        switch (fam) {
            case TaskFamily::kDirReward: {
                const double angle = params.empty()
                                         ? rng.uniform(0.0, 2.0 * M_PI)
                                         : parse_number<double>("task_params", params[k - 1]);
                out.push_back(TaskSpec::dir_reward(k, angle, horizon));
                break;
            }
            case TaskFamily::kVelReward: {
                const double speed = params.empty()
                                         ? rng.uniform(0.4, 2.0)
                                         : parse_number<double>("task_params", params[k - 1]);
                out.push_back(TaskSpec::vel_reward(k, speed, horizon));
                break;
            }
            case TaskFamily::kDynShift: {
                double fr, ma;
                if (params.empty()) {
                    fr = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
                    ma = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
                } else {
                    const auto parts = split(params[k - 1], ':');
                    if (parts.size() != 2) {
                        throw ConfigError(
                            "config field 'task_params': dyn entries need friction:mass");
                    }
                    fr = parse_number<double>("task_params", parts[0]);
                    ma = parse_number<double>("task_params", parts[1]);
                }
                out.push_back(TaskSpec::dyn_shift(k, fr, ma, horizon));
                break;
            }
        }
    }
    return out;
}

SequenceConfig ExperimentConfig::to_sequence_config() const {
    SequenceConfig sc;
    sc.tasks = make_tasks();
    sc.variant = variant_from_name(variant);
    sc.beta = beta;
    sc.lambda = lambda;
    sc.replay_per_task = replay_per_task;
    sc.seed = seed;
    sc.gamma = gamma;
    sc.sched.beta_min = beta_min;
    sc.sched.beta_max = beta_max;
    sc.sched.steps = diffusion_steps;
    sc.sched.t_min = t_min;
    sc.train.batch = batch;
    sc.train.behavior_epochs = behavior_epochs;
    sc.train.state_epochs = state_epochs;
    sc.train.critic_epochs = critic_epochs;
    sc.train.value_iterations = value_iterations;
    sc.train.value_actions = value_actions;
    sc.train.value_weighting =
        value_weighting == "softmax" ? ValueWeighting::kSoftmax : ValueWeighting::kMean;
    sc.train.lr = lr;
    sc.nets.hidden = hidden;
    sc.nets.depth = depth;
    sc.nets.time_embed = time_embed;
    sc.nets.task_embed = task_embed;
    sc.nets.critic_hidden = critic_hidden;
    sc.nets.critic_layers = critic_layers;
    sc.policy.alpha = alpha;
    sc.policy.candidates = candidates;
    sc.policy.mode =
        selection == "argmax" ? PolicyConfig::Mode::kArgmax : PolicyConfig::Mode::kSoftmax;
    sc.eval_episodes = eval_episodes;
    sc.stop_after = stop_after;
    sc.strict_checks = strict_checks;
    sc.validate();
    return sc;
}

std::filesystem::path ExperimentConfig::dataset_path(int task_id) const {
    return dataset_path(task_id, quality);
}

std::filesystem::path ExperimentConfig::dataset_path(int task_id,
                                                     const std::string& quality_name) const {
    return std::filesystem::path(data_dir) /
           ("task" + std::to_string(task_id) + "_" + quality_name + ".ds");
}

}  // namespace cugro
