#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "pani/dataset.hpp"
#include "pani/mlp.hpp"
#include "pani/namdp.hpp"
#include "pani/noise.hpp"

namespace pani {

enum class Algorithm { Td3An, IqlAn };

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

struct TrainConfig {
    Algorithm algorithm = Algorithm::Td3An;
    double gamma = 0.99;
    double polyak = 5e-3;   // target update rate eta
    double lr = 1e-3;
    int batch = 256;
    int steps = 10000;
    NoiseFamily noise_family = NoiseFamily::Hybrid;
    double sigma = std::exp(-5.0); // 0 disables noise injection (a' = a)
    int quadrature_nodes = 64;
    double penalty_coef = 1.0;     // on ||a - a'||^2; 0 disables the penalty
    double expectile_tau = 0.7;    // IQL tau
    double bc_alpha = 0.0;         // TD3 actor alpha
    double policy_noise = 0.2;     // sigma bar
    double noise_clip = 0.5;       // c
    int policy_delay = 2;          // d
    bool stochastic_actor = false; // IQL tanh-Gaussian actor
    double actor_entropy_alpha = 0.0;
    std::vector<int> hidden_dims = {256, 256, 256};
    bool layer_norm = true;
    std::uint64_t seed = 0;
    int metrics_interval = 1000;

    void validate() const;
};

// Actor/critic/value networks with target copies and training state.
struct Agent {
    TrainConfig config;
    int state_dim = 0;
    int action_dim = 0;
    ActionBox box;
    Mlp actor, q1, q2;
    Mlp actor_target, q1_target, q2_target;
    Mlp value; // IQL only
    Adam actor_opt, q1_opt, q2_opt, value_opt;

    // deterministic action: box-squashed tanh of the actor head (the mean
    // head when the actor is stochastic)
    std::vector<double> act(const std::vector<double>& state) const;
};

Agent make_agent(int state_dim, int action_dim, const ActionBox& box,
                 const TrainConfig& config);

struct Batch {
    int size = 0;
    std::vector<double> s, a, s2;  // flattened [b * dim + i]
    std::vector<double> r;
    std::vector<std::uint8_t> done;
    std::vector<double> a_prime;   // noised actions
    std::vector<double> penalty;   // penalty_coef * ||a - a'||^2
};

Batch sample_batch(const TransitionDataset& dataset, int batch_size, Rng& rng);

// Fills a_prime / penalty; with sigma == 0 the noised action is the dataset
// action and no random draws are consumed.
void apply_action_noise(Batch& batch, const TrainConfig& config,
                        const ActionBox& box, Rng& rng);

// ---------------------------------------------------------------------------
// update steps (batch must already carry noised actions)

double td3an_critic_update(Agent& agent, const Batch& batch, Rng& rng);
double td3an_actor_update(Agent& agent, const Batch& batch);

double iqlan_value_update(Agent& agent, const Batch& batch);
double iqlan_critic_update(Agent& agent, const Batch& batch);
double iqlan_actor_update(Agent& agent, const Batch& batch, Rng& rng);

void update_targets(Agent& agent);

// Loss and parameter gradient of one update target without stepping the
// optimizer. The update functions run these and then apply Adam; the
// finite-difference checks drive them directly.
struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

// squared-error fit of one critic to fixed targets
LossGrad critic_fit_loss(const Mlp& critic, const std::vector<double>& qin,
                         int batch, const std::vector<double>& target);
// TD3 actor objective (gradient wrt actor parameters)
LossGrad td3an_actor_loss(const Agent& agent, const Batch& batch);
// IQL expectile value objective (gradient wrt value parameters)
LossGrad iqlan_value_loss(const Agent& agent, const Batch& batch);
// IQL actor objective; for a stochastic actor, eps carries the fixed
// standard-normal draws (batch * action_dim), making the loss deterministic
LossGrad iqlan_actor_loss(const Agent& agent, const Batch& batch,
                          const std::vector<double>* eps = nullptr);

// log pi(a|s) of the box-squashed tanh-Gaussian policy with the given mean
// and (clamped) log-std heads
double tanh_gaussian_log_density(const std::vector<double>& mu,
                                 const std::vector<double>& log_std,
                                 const std::vector<double>& action,
                                 const ActionBox& box);

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;

// ---------------------------------------------------------------------------
// training loop

struct MetricsRow {
    int step = 0;
    double critic_loss = 0.0;
    double actor_loss = std::numeric_limits<double>::quiet_NaN();
    double value_loss = std::numeric_limits<double>::quiet_NaN();
    double eval_return = std::numeric_limits<double>::quiet_NaN();
    double ood_probability = std::numeric_limits<double>::quiet_NaN();
};

struct TrainOptions {
    std::string metrics_path;          // empty: keep metrics in memory only
    std::string config_hash;           // echoed into the metrics header
    const ChainEnv* eval_env = nullptr; // per-interval evaluation when set
    int eval_episodes = 5;
    int ood_samples = 0;               // per-interval OOD estimate when > 0
    // phase is one of "value", "critic", "actor", "targets"
    std::function<void(const char* phase, int step)> trace;
};

struct TrainResult {
    Agent agent;
    std::vector<MetricsRow> metrics;
};

TrainResult train(const TransitionDataset& dataset, const TrainConfig& config,
                  const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// diagnostics

struct OodEstimate {
    double probability = 0.0;
    double ci_half_width = 0.0; // 95% normal-approximation half width
    int n_samples = 0;
};

// Monte Carlo estimate of P(Q(s, a') > Q(s, a)) with (s, a) uniform over the
// dataset, a' uniform over the box, Q = min of the two online critics.
OodEstimate ood_overestimation_probability(const Agent& agent,
                                           const TransitionDataset& dataset,
                                           int n_samples, Rng& rng);

// Same metric on a solved NAMDP QGrid (actions snapped to the grid).
OodEstimate ood_overestimation_probability(const QGrid& q, const NamdpModel& model,
                                           const TransitionDataset& dataset,
                                           int n_samples, Rng& rng);

// min-critic values over a grid at a fixed state
std::vector<double> q_landscape(const Agent& agent, const std::vector<double>& state,
                                const ActionGrid& grid);

struct EvalResult {
    double mean_discounted = 0.0;
    double mean_undiscounted = 0.0;
    int episodes = 0;
};

EvalResult evaluate_policy(const ChainEnv& env, const Agent& agent, int episodes,
                           Rng& rng, int max_steps = 200);

// ---------------------------------------------------------------------------
// serialization: one JSON header line, then little-endian binary doubles

void save_agent(const Agent& agent, const std::string& path);
Agent load_agent(const std::string& path);

} // namespace pani
