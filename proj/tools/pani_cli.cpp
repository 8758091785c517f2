// Command-line laboratory: dataset generation, NAMDP construction and
// solution, theorem verification, agent training, evaluation, and sweeps.
// Exit codes: 0 success, 1 assertion failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "pani/dataset.hpp"
#include "pani/learn.hpp"
#include "pani/namdp.hpp"
#include "pani/noise.hpp"
#include "pani/verify.hpp"

namespace fs = std::filesystem;
using namespace pani;

namespace {

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string hash_hex(const std::string& text) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(text)));
    return buf;
}

std::string format_g(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// Effective configuration of a run: sorted key = value lines. The FNV hash
// of this block is echoed into every CSV the run writes.
class ConfigEcho {
  public:
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    void set(const std::string& key, double value) { kv_[key] = format_g(value); }
    void set(const std::string& key, int value) { kv_[key] = std::to_string(value); }
    void set(const std::string& key, std::uint64_t value) { kv_[key] = std::to_string(value); }

    std::string text() const {
        std::ostringstream os;
        for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
        return os.str();
    }
    std::string hash() const { return hash_hex(text()); }

    void write(const fs::path& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << text();
    }

  private:
    std::map<std::string, std::string> kv_;
};

// plain-text configuration file: "section.key = value" lines, '#' comments
std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError(
                "--config", "missing '=' at line " + std::to_string(line_no));
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

// Turns config-file entries into long-form tokens for options that were not
// given on the command line. Keys are "<section>.<long-flag-name>"; sections
// are subcommand names. Unknown sections or keys are usage errors.
std::vector<std::string> config_tokens(const std::map<std::string, std::string>& kv,
                                       const CLI::App& app,
                                       const std::string& active_section,
                                       const std::vector<std::string>& user_tokens) {
    auto given_on_cli = [&](const std::string& flag) {
        for (const std::string& tok : user_tokens)
            if (tok == flag || tok.rfind(flag + "=", 0) == 0) return true;
        return false;
    };
    std::vector<std::string> tokens;
    for (const auto& [key, value] : kv) {
        const auto dot = key.find('.');
        if (dot == std::string::npos)
            throw CLI::ValidationError("--config", "key without section: " + key);
        const std::string section = key.substr(0, dot);
        const CLI::App* cmd = app.get_subcommand_no_throw(section);
        if (!cmd)
            throw CLI::ValidationError("--config", "unknown section: " + section);
        const std::string flag = "--" + key.substr(dot + 1);
        if (flag == "--config" || !cmd->get_option_no_throw(flag))
            throw CLI::ValidationError("--config", "unknown key: " + key);
        if (section == active_section && !given_on_cli(flag))
            tokens.push_back(flag + "=" + value);
    }
    return tokens;
}

NoiseFamily parse_family(const std::string& name) {
    try {
        return family_from_name(name);
    } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError("--family", e.what());
    }
}

struct ChainFlags {
    int n_states = 5;
    double band_center = 0.3;
    double band_width = 0.2;
    double goal_reward = 1.0;
    double gamma = 0.9;
    int transitions_per_state = 64;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--chain-states", n_states, "chain length");
        cmd->add_option("--band-center", band_center, "center of the advancing band");
        cmd->add_option("--band-width", band_width, "half width of the band");
        cmd->add_option("--goal-reward", goal_reward, "terminal reward");
        cmd->add_option("--chain-gamma", gamma, "chain discount factor");
        cmd->add_option("--transitions-per-state", transitions_per_state,
                        "behavior transitions per state");
    }
    void echo(ConfigEcho& echo) const {
        echo.set("chain.states", n_states);
        echo.set("chain.band_center", band_center);
        echo.set("chain.band_width", band_width);
        echo.set("chain.goal_reward", goal_reward);
        echo.set("chain.gamma", gamma);
        echo.set("chain.transitions_per_state", transitions_per_state);
    }
    ChainData make(std::uint64_t seed) const {
        return gen_chain_env(n_states, band_center, band_width, goal_reward, gamma,
                             transitions_per_state, seed);
    }
};

struct TrainFlags {
    std::string algorithm = "td3an";
    std::string family = "hybrid";
    double sigma = std::exp(-5.0);
    bool has_log_sigma = false;
    double log_sigma = -5.0;
    double penalty_coef = 1.0;
    bool no_layer_norm = false;
    TrainConfig base;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--algorithm", algorithm, "td3an or iqlan")
            ->check(CLI::IsMember({"td3an", "iqlan"}));
        cmd->add_option("--family", family, "noise family")
            ->check(CLI::IsMember({"gaussian", "laplace", "uniform_mix", "hybrid"}));
        cmd->add_option("--sigma", sigma, "noise scale (0 disables injection)");
        cmd->add_option("--log-sigma", log_sigma, "noise scale as log sigma")
            ->each([this](const std::string&) { has_log_sigma = true; });
        cmd->add_option("--penalty-coef", penalty_coef,
                        "coefficient on the squared-distance penalty");
        cmd->add_option("--steps", base.steps, "training steps");
        cmd->add_option("--batch", base.batch, "batch size");
        cmd->add_option("--lr", base.lr, "learning rate");
        cmd->add_option("--gamma", base.gamma, "discount factor");
        cmd->add_option("--polyak", base.polyak, "target update rate");
        cmd->add_option("--tau", base.expectile_tau, "IQL expectile");
        cmd->add_option("--bc-alpha", base.bc_alpha, "TD3 actor alpha");
        cmd->add_option("--policy-noise", base.policy_noise, "target policy noise");
        cmd->add_option("--noise-clip", base.noise_clip, "target noise clip");
        cmd->add_option("--policy-delay", base.policy_delay, "TD3 policy delay");
        cmd->add_flag("--stochastic-actor", base.stochastic_actor,
                      "tanh-Gaussian IQL actor");
        cmd->add_option("--entropy-alpha", base.actor_entropy_alpha,
                        "stochastic actor entropy weight");
        cmd->add_option("--hidden", base.hidden_dims, "hidden layer dims");
        cmd->add_flag("--no-layer-norm", no_layer_norm, "disable layer normalization");
        cmd->add_option("--quadrature-nodes", base.quadrature_nodes,
                        "hybrid density quadrature nodes");
        cmd->add_option("--metrics-interval", base.metrics_interval,
                        "steps between metric rows");
    }

    TrainConfig make(std::uint64_t seed) const {
        TrainConfig cfg = base;
        cfg.algorithm = algorithm_from_name(algorithm);
        cfg.noise_family = family_from_name(family);
        cfg.sigma = has_log_sigma ? std::exp(log_sigma) : sigma;
        cfg.penalty_coef = penalty_coef;
        cfg.layer_norm = !no_layer_norm;
        cfg.seed = seed;
        return cfg;
    }

    void echo(ConfigEcho& echo, const TrainConfig& cfg) const {
        echo.set("train.algorithm", algorithm_name(cfg.algorithm));
        echo.set("train.gamma", cfg.gamma);
        echo.set("train.polyak", cfg.polyak);
        echo.set("train.lr", cfg.lr);
        echo.set("train.batch", cfg.batch);
        echo.set("train.steps", cfg.steps);
        echo.set("train.penalty_coef", cfg.penalty_coef);
        echo.set("train.expectile_tau", cfg.expectile_tau);
        echo.set("train.bc_alpha", cfg.bc_alpha);
        echo.set("train.policy_noise", cfg.policy_noise);
        echo.set("train.noise_clip", cfg.noise_clip);
        echo.set("train.policy_delay", cfg.policy_delay);
        echo.set("train.stochastic_actor", cfg.stochastic_actor ? "true" : "false");
        echo.set("train.actor_entropy_alpha", cfg.actor_entropy_alpha);
        std::ostringstream dims;
        for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i)
            dims << (i ? "," : "") << cfg.hidden_dims[i];
        echo.set("train.hidden_dims", dims.str());
        echo.set("train.layer_norm", cfg.layer_norm ? "true" : "false");
        echo.set("train.metrics_interval", cfg.metrics_interval);
        echo.set("train.seed", cfg.seed);
        echo.set("noise.family", family_name(cfg.noise_family));
        echo.set("noise.sigma", cfg.sigma);
        echo.set("noise.quadrature_nodes", cfg.quadrature_nodes);
    }
};

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& kind, std::uint64_t seed,
                 const std::string& out, int rings_n, int points,
                 std::vector<double> radii, std::vector<double> rewards,
                 double jitter, int arms, const ChainFlags& chain) {
    TransitionDataset ds;
    ConfigEcho echo;
    echo.set("gen.kind", kind);
    echo.set("gen.seed", seed);
    if (kind == "bandit1d") {
        ds = gen_bandit1d();
    } else if (kind == "rings") {
        if (radii.empty()) radii = {0.3, 0.6, 0.9};
        if (rewards.empty()) rewards = {1.0, 0.5, 0.0};
        rings_n = static_cast<int>(radii.size());
        ds = gen_rings(rings_n, points, radii, rewards, jitter, seed);
        echo.set("gen.points_per_ring", points);
        echo.set("gen.jitter", jitter);
    } else if (kind == "pinwheel") {
        ds = gen_pinwheel(arms, points, seed);
        echo.set("gen.arms", arms);
        echo.set("gen.points_per_arm", points);
    } else if (kind == "chain") {
        ds = chain.make(seed).dataset;
        chain.echo(echo);
    }
    save_jsonl(ds, out);
    const fs::path echo_path = fs::path(out).replace_extension(".config.txt");
    echo.write(echo_path);
    std::cout << "wrote " << out << " (" << ds.transitions.size()
              << " transitions, config " << echo.hash() << ")\n";
    return 0;
}

int cmd_namdp(const std::string& data_path, const std::string& family,
              double sigma, int nodes, int grid_points, double gamma,
              bool limit, const std::string& out_dir) {
    const TransitionDataset ds = load_jsonl(data_path);
    const ActionGrid grid = ActionGrid::regular(ds.box, grid_points);

    ConfigEcho echo;
    echo.set("namdp.data", data_path);
    echo.set("namdp.family", family);
    echo.set("namdp.sigma", sigma);
    echo.set("namdp.quadrature_nodes", nodes);
    echo.set("namdp.grid_points", grid_points);
    echo.set("namdp.gamma", gamma);
    echo.set("namdp.limit", limit ? "true" : "false");

    fs::create_directories(out_dir);
    echo.write(fs::path(out_dir) / "config_echo.txt");

    const NamdpModel model =
        limit ? build_limit_namdp(ds, grid, gamma)
              : build_namdp(ds, NoiseSpec(parse_family(family), sigma, ds.box, nodes),
                            grid, gamma);
    const SolveResult solved = value_iteration(model, 1e-10);
    export_model_csv(model, &solved.q, (fs::path(out_dir) / "namdp.csv").string(),
                     echo.hash());

    nlohmann::json summary = {
        {"config_hash", echo.hash()},
        {"states", model.n_states()},
        {"grid_points", grid.size()},
        {"rows", model.n_states() * grid.size()},
        {"sigma", model.sigma},
        {"gamma", gamma},
        {"sweeps", solved.sweeps},
        {"residual", solved.residual},
    };
    if (ds.action_dim == 1 && !limit) {
        const NoiseSpec spec(parse_family(family), sigma, ds.box, nodes);
        const int modes = count_modes(ds, spec, grid);
        const int modes_fine =
            count_modes(ds, spec, ActionGrid::regular(ds.box, 10 * (grid_points - 1) + 1));
        summary["mode_count"] = modes;
        summary["mode_count_fine_grid"] = modes_fine;
    }
    std::ofstream(fs::path(out_dir) / "summary.json") << summary.dump(2) << "\n";
    std::cout << "wrote " << out_dir << "/namdp.csv and summary.json\n";
    return 0;
}

int cmd_verify(const std::string& suite, int seeds, double tol, double epsilon,
               const std::string& out) {
    std::vector<VerifyReport> reports;
    if (suite == "theorem1" || suite == "all") reports.push_back(verify_theorem1(tol == 0.0 ? 1e-8 : tol));
    if (suite == "limits" || suite == "all") reports.push_back(verify_limits(tol == 0.0 ? 1e-4 : tol));
    if (suite == "bound" || suite == "all") reports.push_back(verify_bound(seeds));
    if (suite == "noood" || suite == "all") reports.push_back(verify_noood(epsilon));

    bool all_pass = true;
    nlohmann::json out_json = nlohmann::json::array();
    for (const VerifyReport& report : reports) {
        nlohmann::json checks = nlohmann::json::array();
        for (const CheckResult& c : report.checks) {
            all_pass = all_pass && c.pass;
            std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << report.suite << "/"
                      << c.name << ": value " << c.value << " vs threshold "
                      << c.threshold << "\n";
            checks.push_back({{"name", c.name},
                              {"pass", c.pass},
                              {"value", c.value},
                              {"threshold", c.threshold},
                              {"detail", c.detail}});
        }
        out_json.push_back({{"suite", report.suite},
                            {"all_pass", report.all_pass()},
                            {"checks", checks}});
    }
    if (!out.empty()) {
        std::ofstream file(out);
        file << out_json.dump(2) << "\n";
        std::cout << "report written to " << out << "\n";
    }
    std::cout << (all_pass ? "verification passed" : "verification FAILED") << "\n";
    return all_pass ? 0 : 1;
}

int cmd_train(const std::string& data_path, const TrainFlags& flags,
              std::uint64_t seed, const std::string& out_dir, bool eval_chain,
              const ChainFlags& chain) {
    const TransitionDataset ds = load_jsonl(data_path);
    const TrainConfig cfg = flags.make(seed);

    ConfigEcho echo;
    echo.set("train.data", data_path);
    flags.echo(echo, cfg);

    fs::create_directories(out_dir);
    echo.write(fs::path(out_dir) / "config_echo.txt");

    TrainOptions options;
    options.metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    options.config_hash = echo.hash();
    ChainData chain_data;
    if (eval_chain) {
        chain_data = chain.make(seed);
        options.eval_env = &chain_data.env;
    }

    const TrainResult result = train(ds, cfg, options);
    save_agent(result.agent, (fs::path(out_dir) / "agent.bin").string());
    std::cout << "trained " << algorithm_name(cfg.algorithm) << " for " << cfg.steps
              << " steps; metrics in " << options.metrics_path << "\n";
    if (!result.metrics.empty() && eval_chain)
        std::cout << "final eval return " << result.metrics.back().eval_return
                  << " (optimal " << chain_data.env.optimal_return() << ")\n";
    return 0;
}

int cmd_eval(const std::string& agent_path, const std::string& data_path,
             const std::string& what, const std::string& out, int ood_samples,
             std::uint64_t seed, const std::vector<double>& state, int grid_points,
             int episodes, const ChainFlags& chain) {
    const Agent agent = load_agent(agent_path);
    ConfigEcho echo;
    echo.set("eval.agent", agent_path);
    echo.set("eval.what", what);
    echo.set("eval.seed", seed);

    if (what == "ood") {
        const TransitionDataset ds = load_jsonl(data_path);
        Rng rng(seed);
        const OodEstimate est =
            ood_overestimation_probability(agent, ds, ood_samples, rng);
        nlohmann::json j = {{"probability", est.probability},
                            {"ci_half_width", est.ci_half_width},
                            {"n_samples", est.n_samples},
                            {"config_hash", echo.hash()}};
        if (out.empty())
            std::cout << j.dump(2) << "\n";
        else
            std::ofstream(out) << j.dump(2) << "\n";
        return 0;
    }
    if (what == "landscape") {
        std::vector<double> at = state;
        if (at.empty()) at.assign(agent.state_dim, 0.0);
        const ActionGrid grid = ActionGrid::regular(agent.box, grid_points);
        const std::vector<double> q = q_landscape(agent, at, grid);
        std::ofstream file(out);
        if (!file) throw std::runtime_error("cannot write " + out);
        file << "# config_hash=" << echo.hash() << "\n";
        for (int d = 0; d < agent.action_dim; ++d) file << (d ? "," : "") << "a" << d + 1;
        file << ",q\n";
        for (int j = 0; j < grid.size(); ++j) {
            for (int d = 0; d < agent.action_dim; ++d)
                file << (d ? "," : "") << format_g(grid.points[j][d]);
            file << "," << format_g(q[j]) << "\n";
        }
        std::cout << "wrote " << out << "\n";
        return 0;
    }
    // what == "return"
    const ChainData chain_data = chain.make(seed);
    Rng rng(seed);
    const EvalResult result = evaluate_policy(chain_data.env, agent, episodes, rng);
    nlohmann::json j = {{"mean_discounted", result.mean_discounted},
                        {"mean_undiscounted", result.mean_undiscounted},
                        {"episodes", result.episodes},
                        {"optimal_return", chain_data.env.optimal_return()},
                        {"config_hash", echo.hash()}};
    if (out.empty())
        std::cout << j.dump(2) << "\n";
    else
        std::ofstream(out) << j.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const TrainFlags& flags, const std::vector<std::string>& families,
              const std::vector<double>& log_sigmas, int n_seeds,
              std::uint64_t data_seed, int jobs, bool resume,
              const std::string& out_dir, const ChainFlags& chain) {
    for (const std::string& f : families) parse_family(f);
    const ChainData chain_data = chain.make(data_seed);
    fs::create_directories(out_dir);

    struct Run {
        std::string family;
        double log_sigma;
        int seed;
        fs::path dir;
        double final_return = 0.0;
        bool done = false;
    };
    std::vector<Run> runs;
    for (const std::string& family : families)
        for (double ls : log_sigmas)
            for (int seed = 0; seed < n_seeds; ++seed) {
                std::ostringstream name;
                name << family << "_ls" << ls << "_seed" << seed;
                runs.push_back({family, ls, seed, fs::path(out_dir) / name.str()});
            }

    std::atomic<std::size_t> next{0};
    std::mutex io_mutex;
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= runs.size()) return;
            Run& run = runs[i];
            const fs::path result_path = run.dir / "result.json";
            if (resume && fs::exists(result_path)) {
                const nlohmann::json j =
                    nlohmann::json::parse(std::ifstream(result_path));
                run.final_return = j.at("mean_discounted").get<double>();
                run.done = true;
                std::lock_guard<std::mutex> lock(io_mutex);
                std::cout << "skip (resume) " << run.dir.filename().string() << "\n";
                continue;
            }
            fs::create_directories(run.dir);

            TrainConfig cfg = flags.make(run.seed);
            cfg.noise_family = family_from_name(run.family);
            cfg.sigma = std::exp(run.log_sigma);
            cfg.gamma = chain.gamma;

            ConfigEcho echo;
            flags.echo(echo, cfg);
            chain.echo(echo);
            echo.set("noise.family", run.family);
            echo.set("noise.sigma", cfg.sigma);
            echo.set("sweep.log_sigma", run.log_sigma);
            echo.set("train.seed", cfg.seed);
            echo.write(run.dir / "config_echo.txt");

            TrainOptions options;
            options.metrics_path = (run.dir / "metrics.csv").string();
            options.config_hash = echo.hash();
            options.eval_env = &chain_data.env;

            const TrainResult result = train(chain_data.dataset, cfg, options);
            save_agent(result.agent, (run.dir / "agent.bin").string());
            Rng eval_rng(run.seed);
            const EvalResult eval =
                evaluate_policy(chain_data.env, result.agent, 5, eval_rng);
            run.final_return = eval.mean_discounted;
            run.done = true;
            std::ofstream(result_path)
                << nlohmann::json{{"mean_discounted", eval.mean_discounted},
                                  {"mean_undiscounted", eval.mean_undiscounted},
                                  {"config_hash", echo.hash()}}
                       .dump(2)
                << "\n";
            std::lock_guard<std::mutex> lock(io_mutex);
            std::cout << run.dir.filename().string() << ": return "
                      << eval.mean_discounted << "\n";
        }
    };
    const int n_workers =
        std::max(1, std::min<int>(jobs, static_cast<int>(runs.size())));
    std::vector<std::thread> threads;
    for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();

    // summary: mean and standard error per (family, log sigma) cell
    std::ofstream summary(fs::path(out_dir) / "summary.csv");
    summary << "# optimal_return=" << format_g(chain_data.env.optimal_return()) << "\n";
    summary << "family,log_sigma,mean_return,stderr,n_seeds\n";
    std::map<std::string, double> worst_by_family;
    for (const std::string& family : families)
        for (double ls : log_sigmas) {
            double sum = 0.0, sum_sq = 0.0;
            int n = 0;
            for (const Run& run : runs)
                if (run.family == family && run.log_sigma == ls && run.done) {
                    sum += run.final_return;
                    sum_sq += run.final_return * run.final_return;
                    ++n;
                }
            const double mean = n ? sum / n : 0.0;
            const double var = n > 1 ? (sum_sq - n * mean * mean) / (n - 1) : 0.0;
            const double se = n > 1 ? std::sqrt(std::max(0.0, var) / n) : 0.0;
            summary << family << "," << ls << "," << format_g(mean) << ","
                    << format_g(se) << "," << n << "\n";
            const auto it = worst_by_family.find(family);
            if (it == worst_by_family.end() || mean < it->second)
                worst_by_family[family] = mean;
        }
    for (const auto& [family, worst] : worst_by_family)
        std::cout << family << " worst-sigma mean return: " << worst << "\n";
    std::cout << "summary written to " << (fs::path(out_dir) / "summary.csv").string()
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Noisy-action MDP laboratory: penalized action noise injection "
                 "for offline RL at desk scale"};
    app.require_subcommand(1);
    std::string config_path;

    // gen-data ---------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a toy dataset");
    std::string gen_kind;
    gen->add_option("--kind", gen_kind, "bandit1d, rings, pinwheel, or chain")
        ->required()
        ->check(CLI::IsMember({"bandit1d", "rings", "pinwheel", "chain"}));
    std::string gen_out = "dataset.jsonl";
    std::uint64_t gen_seed = 0;
    int gen_points = 256, gen_arms = 5, gen_rings_n = 3;
    double gen_jitter = 0.02;
    std::vector<double> gen_radii, gen_rewards;
    gen->add_option("--out", gen_out, "output JSONL path");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--points", gen_points, "points per ring/arm");
    gen->add_option("--radii", gen_radii, "ring radii");
    gen->add_option("--rewards", gen_rewards, "ring rewards");
    gen->add_option("--jitter", gen_jitter, "ring jitter");
    gen->add_option("--arms", gen_arms, "pinwheel arms");
    ChainFlags gen_chain;
    gen_chain.add_to(gen);

    // namdp ------------------------------------------------------------
    auto* namdp = app.add_subcommand("namdp", "build and solve a NAMDP");
    std::string namdp_data, namdp_family = "gaussian", namdp_out = "namdp_out";
    double namdp_sigma = 0.5, namdp_gamma = 0.99;
    int namdp_nodes = 64, namdp_grid = 301;
    bool namdp_limit = false;
    namdp->add_option("--data", namdp_data, "dataset JSONL")->required();
    namdp->add_option("--family", namdp_family, "noise family")
        ->check(CLI::IsMember({"gaussian", "laplace", "uniform_mix", "hybrid"}));
    namdp->add_option("--sigma", namdp_sigma, "noise scale");
    namdp->add_option("--quadrature-nodes", namdp_nodes, "hybrid quadrature nodes");
    namdp->add_option("--grid-points", namdp_grid, "grid points per dimension");
    namdp->add_option("--gamma", namdp_gamma, "discount factor");
    namdp->add_flag("--limit", namdp_limit, "build the sigma->0 limit model");
    namdp->add_option("--out", namdp_out, "output directory");

    // verify -----------------------------------------------------------
    auto* verify = app.add_subcommand("verify", "machine-check the theory");
    std::string verify_suite = "all", verify_out;
    int verify_seeds = 100;
    double verify_tol = 0.0, verify_epsilon = 1e-2;
    verify->add_option("--suite", verify_suite, "theorem1, limits, bound, noood, or all")
        ->check(CLI::IsMember({"theorem1", "limits", "bound", "noood", "all"}));
    verify->add_option("--seeds", verify_seeds, "random MDP instances for the bound suite");
    verify->add_option("--tol", verify_tol, "override the suite tolerance");
    verify->add_option("--epsilon", verify_epsilon, "no-OOD distance threshold");
    verify->add_option("--out", verify_out, "JSON report path");

    // train ------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train a PANI agent");
    std::string train_data, train_out = "train_out";
    std::uint64_t train_seed = 0;
    bool train_eval_chain = false;
    TrainFlags train_flags;
    train_cmd->add_option("--data", train_data, "dataset JSONL")->required();
    train_cmd->add_option("--out", train_out, "output directory");
    train_cmd->add_option("--seed", train_seed, "training seed");
    train_cmd->add_flag("--eval-chain", train_eval_chain,
                        "evaluate on the chain task at metric intervals");
    train_flags.add_to(train_cmd);
    ChainFlags train_chain;
    train_chain.add_to(train_cmd);

    // eval -------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained agent");
    std::string eval_agent, eval_data, eval_what = "ood", eval_out;
    int eval_ood_samples = 200000, eval_grid = 61, eval_episodes = 10;
    std::uint64_t eval_seed = 0;
    std::vector<double> eval_state;
    eval_cmd->add_option("--agent", eval_agent, "agent file")->required();
    eval_cmd->add_option("--data", eval_data, "dataset JSONL (ood)");
    eval_cmd->add_option("--what", eval_what, "ood, landscape, or return")
        ->check(CLI::IsMember({"ood", "landscape", "return"}));
    eval_cmd->add_option("--out", eval_out, "output path");
    eval_cmd->add_option("--ood-samples", eval_ood_samples, "Monte Carlo samples");
    eval_cmd->add_option("--seed", eval_seed, "sampling seed");
    eval_cmd->add_option("--state", eval_state, "landscape state coordinates");
    eval_cmd->add_option("--grid-points", eval_grid, "landscape grid points per dim");
    eval_cmd->add_option("--episodes", eval_episodes, "evaluation episodes");
    ChainFlags eval_chain;
    eval_chain.add_to(eval_cmd);

    // sweep ------------------------------------------------------------
    auto* sweep = app.add_subcommand("sweep", "family x sigma x seed grid on the chain task");
    std::vector<std::string> sweep_families = {"gaussian", "laplace", "hybrid"};
    std::vector<double> sweep_log_sigmas = {-1.0, -5.0, -10.0, -20.0};
    int sweep_seeds = 5, sweep_jobs = static_cast<int>(std::thread::hardware_concurrency());
    std::uint64_t sweep_data_seed = 0;
    bool sweep_resume = false;
    std::string sweep_out = "sweep_out";
    sweep->add_option("--families", sweep_families, "noise families");
    sweep->add_option("--log-sigmas", sweep_log_sigmas, "log sigma grid");
    sweep->add_option("--seeds", sweep_seeds, "seeds per cell");
    sweep->add_option("--jobs", sweep_jobs, "parallel runs");
    sweep->add_option("--data-seed", sweep_data_seed, "chain dataset seed");
    sweep->add_flag("--resume", sweep_resume, "skip completed run directories");
    sweep->add_option("--out", sweep_out, "output directory");
    TrainFlags sweep_flags;
    sweep_flags.base.steps = 5000;
    sweep_flags.base.hidden_dims = {32, 32, 32};
    sweep_flags.base.batch = 64;
    sweep_flags.add_to(sweep);
    ChainFlags sweep_chain;
    sweep_chain.add_to(sweep);

    for (CLI::App* sub : {gen, namdp, verify, train_cmd, eval_cmd, sweep})
        sub->add_option("--config", config_path,
                        "plain-text configuration file (section.key = value)");

    try {
        std::vector<std::string> tokens(argv + 1, argv + argc);

        // config entries become long-form tokens for options the command
        // line does not set; a single parse sees the merged view
        std::string cfg_path;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (tokens[i] == "--config" && i + 1 < tokens.size())
                cfg_path = tokens[i + 1];
            else if (tokens[i].rfind("--config=", 0) == 0)
                cfg_path = tokens[i].substr(9);
        }
        if (!cfg_path.empty() && !tokens.empty() && tokens[0][0] != '-') {
            const std::vector<std::string> user(tokens.begin() + 1, tokens.end());
            const std::vector<std::string> extra =
                config_tokens(read_config_file(cfg_path), app, tokens[0], user);
            tokens.insert(tokens.begin() + 1, extra.begin(), extra.end());
        }
        std::reverse(tokens.begin(), tokens.end());
        app.parse(std::move(tokens));

        if (gen->parsed())
            return cmd_gen_data(gen_kind, gen_seed, gen_out, gen_rings_n, gen_points,
                                gen_radii, gen_rewards, gen_jitter, gen_arms, gen_chain);
        if (namdp->parsed())
            return cmd_namdp(namdp_data, namdp_family, namdp_sigma, namdp_nodes,
                             namdp_grid, namdp_gamma, namdp_limit, namdp_out);
        if (verify->parsed())
            return cmd_verify(verify_suite, verify_seeds, verify_tol, verify_epsilon,
                              verify_out);
        if (train_cmd->parsed())
            return cmd_train(train_data, train_flags, train_seed, train_out,
                             train_eval_chain, train_chain);
        if (eval_cmd->parsed())
            return cmd_eval(eval_agent, eval_data, eval_what, eval_out,
                            eval_ood_samples, eval_seed, eval_state, eval_grid,
                            eval_episodes, eval_chain);
        if (sweep->parsed())
            return cmd_sweep(sweep_flags, sweep_families, sweep_log_sigmas,
                             sweep_seeds, sweep_data_seed, sweep_jobs, sweep_resume,
                             sweep_out, sweep_chain);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
