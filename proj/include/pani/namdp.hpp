#pragma once

#include <string>
#include <vector>

#include "pani/dataset.hpp"
#include "pani/noise.hpp"

namespace pani {

// Regular lattice over an action box; the discrete carrier for the
// perturbed action a'.
struct ActionGrid {
    std::vector<std::vector<double>> points;
    double spacing = 0.0; // largest per-dimension step
    ActionBox box;

    static ActionGrid regular(const ActionBox& box, int points_per_dim);
    int size() const { return static_cast<int>(points.size()); }
};

// Discretized noisy-action MDP. Row j of weights[s] is the posterior
// p_D(a|s, a'_j, sigma) over state s's dataset entries; r_sigma and p_sigma
// are the induced reward and transition tables. Column n_states of each
// p_sigma row is the absorbing terminal sink.
struct NamdpModel {
    std::vector<std::string> state_keys; // first-appearance order
    ActionGrid grid;
    std::vector<std::vector<std::vector<double>>> weights; // [s][j][entry]
    std::vector<std::vector<double>> r_sigma;              // [s][j]
    std::vector<std::vector<std::vector<double>>> p_sigma; // [s][j][s' + terminal]
    double gamma = 0.99;
    double sigma = 0.0; // 0 marks the sigma -> 0 limit model

    int n_states() const { return static_cast<int>(state_keys.size()); }
    int state_index(const std::string& key) const;
};

struct QGrid {
    std::vector<std::vector<double>> values; // [s][j]
};

// Per-state distribution over grid points.
struct GridPolicy {
    std::vector<std::vector<double>> probs; // [s][j]

    static GridPolicy uniform(int n_states, int n_points);
    static GridPolicy greedy_from(const QGrid& q); // ties -> lowest grid index
};

struct ErrorBoundReport {
    double eta_true = 0.0;
    double eta_namdp = 0.0;
    double lhs = 0.0;   // |eta - eta_bar|
    double eps_r = 0.0;
    double eps_m = 0.0;
    double r_bar_max = 0.0;
    std::vector<std::vector<double>> visitation; // d^pi over the true MDP's S x A
    bool holds() const { return lhs <= eps_r + eps_m + 1e-12; }
};

// ---------------------------------------------------------------------------
// construction

// Posterior weights w_i over a state's entries at a', w_i proportional to
// q_sigma(a'|a_i) with empirical p_D uniform over entries; computed via
// log-sum-exp. If every kernel value underflows, falls back to a uniform
// distribution over the entries nearest to a'.
std::vector<double> posterior_weights(const std::vector<GroupEntry>& group,
                                      const std::vector<double>& a_prime,
                                      const NoiseSpec& spec);

// Indices of group entries minimizing ||a' - a_i||^2 within additive tie_tol.
std::vector<int> nearest_set(const std::vector<GroupEntry>& group,
                             const std::vector<double>& a_prime,
                             double tie_tol = 1e-9);

NamdpModel build_namdp(const TransitionDataset& dataset, const NoiseSpec& spec,
                       const ActionGrid& grid, double gamma);

// The sigma -> 0 limit: weights uniform over each grid point's nearest set.
NamdpModel build_limit_namdp(const TransitionDataset& dataset,
                             const ActionGrid& grid, double gamma,
                             double tie_tol = 1e-9);

// NAMDP over an explicit tabular MDP: actions embedded at the given 1-D
// positions, p_D(a|s) uniform, exact per-(s,a) rewards and next-state rows.
// The grid is exactly the embedded action set.
NamdpModel namdp_from_finite_mdp(const FiniteMdp& mdp, const NoiseSpec& spec,
                                 const std::vector<double>& action_positions);

std::vector<double> default_action_embedding(int n_actions);

// ---------------------------------------------------------------------------
// solving

struct SolveResult {
    QGrid q;
    GridPolicy greedy;
    int sweeps = 0;
    double residual = 0.0;
};

SolveResult value_iteration(const NamdpModel& model, double tol = 1e-10,
                            int max_iter = 100000);

QGrid policy_evaluation(const NamdpModel& model, const GridPolicy& policy,
                        double tol = 1e-12, int max_iter = 1000000);

// Exact minimizer of the weighted least-squares PANI objective per grid
// point: the posterior-weighted mean of r_i - ||a_i - a'||^2 + gamma *
// v_next(key(s2_i)). The independent route to Q^pi.
QGrid pani_exact_regression(const TransitionDataset& dataset, const NoiseSpec& spec,
                            const ActionGrid& grid, double gamma,
                            const std::vector<double>& v_next);

// E_{a_bar ~ pi}[Q(s', a_bar)] per state, the v_next input above.
std::vector<double> policy_state_values(const QGrid& q, const GridPolicy& policy);

// ---------------------------------------------------------------------------
// analysis

struct ReturnResult {
    double eta = 0.0;
    // d^pi normalized to sum 1; eta = sum(d * R) / (1 - gamma)
    std::vector<std::vector<double>> visitation;
};

ReturnResult expected_return(const FiniteMdp& mdp,
                             const std::vector<std::vector<double>>& policy,
                             const std::vector<double>& start);

ReturnResult expected_return(const NamdpModel& model, const GridPolicy& policy,
                             const std::vector<double>& start);

ErrorBoundReport error_bound_report(const FiniteMdp& true_mdp,
                                    const NamdpModel& namdp,
                                    const std::vector<std::vector<double>>& policy,
                                    const std::vector<double>& start);

// sup over (state, grid point) of |T_bar Q - T_sigma Q| for the two models'
// Bellman optimality operators applied to the same Q.
double bellman_gap(const NamdpModel& model_sigma, const NamdpModel& model_limit,
                   const QGrid& q);

struct NoOodResult {
    bool pass = false;
    double worst_sq_dist = 0.0;
    std::string worst_state;
};

// Solves the model and checks that every state's greedy action lies within
// squared distance epsilon (plus grid-snap slack) of that state's dataset
// actions.
NoOodResult no_ood_check(const NamdpModel& model, const TransitionDataset& dataset,
                         double epsilon);

// Strict local maxima (plateau-tolerant) of the 1-D noised mixture density
// p_sigma(a') = sum_i q_sigma(a'|a_i) / N evaluated on the grid.
int count_modes(const TransitionDataset& dataset, const NoiseSpec& spec,
                const ActionGrid& grid);

// one row per state x grid point: state key, action coordinates, R_sigma,
// and optionally Q
void export_model_csv(const NamdpModel& model, const QGrid* q,
                      const std::string& path, const std::string& config_hash);

} // namespace pani
