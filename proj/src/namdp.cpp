#include "pani/namdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>

#include "pani/kernels.hpp"

namespace pani {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sq_dist(const std::vector<double>& x, const std::vector<double>& y) {
    return kern::active().sq_dist(x.data(), y.data(), x.size());
}

// first-appearance order of state keys
std::vector<std::string> ordered_keys(const TransitionDataset& dataset) {
    std::vector<std::string> keys;
    for (const Transition& t : dataset.transitions) {
        const std::string key = state_key(t.s, dataset.key_mode);
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            keys.push_back(key);
    }
    return keys;
}

// Solves A x = b by Gaussian elimination with partial pivoting.
std::vector<double> solve_dense(std::vector<std::vector<double>> a,
                                std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int row = col + 1; row < n; ++row)
            if (std::fabs(a[row][col]) > std::fabs(a[pivot][col])) pivot = row;
        if (std::fabs(a[pivot][col]) < 1e-14)
            throw std::runtime_error("solve_dense: singular system");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (int row = col + 1; row < n; ++row) {
            const double f = a[row][col] / a[col][col];
            if (f == 0.0) continue;
            for (int k = col; k < n; ++k) a[row][k] -= f * a[col][k];
            b[row] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (int row = n - 1; row >= 0; --row) {
        double acc = b[row];
        for (int k = row + 1; k < n; ++k) acc -= a[row][k] * x[k];
        x[row] = acc / a[row][row];
    }
    return x;
}

// (1-gamma)-normalized discounted state occupancy for transition matrix
// P_pi[s][s'] and start distribution mu0: solves (I - gamma P_pi^T) d =
// (1-gamma) mu0.
std::vector<double> occupancy(const std::vector<std::vector<double>>& p_pi,
                              const std::vector<double>& mu0, double gamma) {
    const int n = static_cast<int>(mu0.size());
    std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
    std::vector<double> b(n, 0.0);
    for (int i = 0; i < n; ++i) {
        b[i] = (1.0 - gamma) * mu0[i];
        for (int j = 0; j < n; ++j)
            a[i][j] = (i == j ? 1.0 : 0.0) - gamma * p_pi[j][i];
    }
    return solve_dense(std::move(a), std::move(b));
}

} // namespace

ActionGrid ActionGrid::regular(const ActionBox& box, int points_per_dim) {
    if (points_per_dim < 2)
        throw std::invalid_argument("ActionGrid: need at least 2 points per dimension");
    const int dim = box.dim();
    ActionGrid grid;
    grid.box = box;
    std::vector<double> steps(dim);
    for (int d = 0; d < dim; ++d) {
        steps[d] = (box.high[d] - box.low[d]) / (points_per_dim - 1);
        grid.spacing = std::max(grid.spacing, steps[d]);
    }
    std::vector<int> idx(dim, 0);
    const long total = static_cast<long>(std::pow(points_per_dim, dim));
    grid.points.reserve(total);
    for (long n = 0; n < total; ++n) {
        std::vector<double> p(dim);
        for (int d = 0; d < dim; ++d) p[d] = box.low[d] + idx[d] * steps[d];
        grid.points.push_back(std::move(p));
        for (int d = dim - 1; d >= 0; --d) {
            if (++idx[d] < points_per_dim) break;
            idx[d] = 0;
        }
    }
    return grid;
}

int NamdpModel::state_index(const std::string& key) const {
    const auto it = std::find(state_keys.begin(), state_keys.end(), key);
    return it == state_keys.end() ? -1
                                  : static_cast<int>(it - state_keys.begin());
}

GridPolicy GridPolicy::uniform(int n_states, int n_points) {
    GridPolicy pi;
    pi.probs.assign(n_states,
                    std::vector<double>(n_points, 1.0 / n_points));
    return pi;
}

GridPolicy GridPolicy::greedy_from(const QGrid& q) {
    GridPolicy pi;
    for (const auto& row : q.values) {
        int best = 0;
        for (std::size_t j = 1; j < row.size(); ++j)
            if (row[j] > row[best]) best = static_cast<int>(j);
        std::vector<double> p(row.size(), 0.0);
        p[best] = 1.0;
        pi.probs.push_back(std::move(p));
    }
    return pi;
}

std::vector<int> nearest_set(const std::vector<GroupEntry>& group,
                             const std::vector<double>& a_prime, double tie_tol) {
    if (group.empty()) throw std::invalid_argument("nearest_set: empty group");
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> dists(group.size());
    for (std::size_t i = 0; i < group.size(); ++i) {
        dists[i] = sq_dist(group[i].a, a_prime);
        best = std::min(best, dists[i]);
    }
    std::vector<int> out;
    for (std::size_t i = 0; i < group.size(); ++i)
        if (dists[i] <= best + tie_tol) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<double> posterior_weights(const std::vector<GroupEntry>& group,
                                      const std::vector<double>& a_prime,
                                      const NoiseSpec& spec) {
    if (group.empty()) throw std::invalid_argument("posterior_weights: empty group");
    const std::size_t n = group.size();
    std::vector<double> logd(n);
    double best = kNegInf;
    for (std::size_t i = 0; i < n; ++i) {
        logd[i] = log_density(spec, a_prime, group[i].a);
        best = std::max(best, logd[i]);
    }
    std::vector<double> w(n, 0.0);
    if (best == kNegInf) {
        // every kernel value underflowed: sigma -> 0 consistent fallback
        const std::vector<int> nearest = nearest_set(group, a_prime);
        for (int idx : nearest) w[idx] = 1.0 / nearest.size();
        return w;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = std::exp(logd[i] - best);
        total += w[i];
    }
    for (std::size_t i = 0; i < n; ++i) w[i] /= total;
    return w;
}

namespace {

NamdpModel build_from_groups(const TransitionDataset& dataset,
                             const ActionGrid& grid, double gamma, double sigma,
                             const std::function<std::vector<double>(
                                 const std::vector<GroupEntry>&,
                                 const std::vector<double>&)>& weight_fn) {
    dataset.validate();
    for (int d = 0; d < dataset.box.dim(); ++d)
        if (grid.box.low[d] > dataset.box.low[d] ||
            grid.box.high[d] < dataset.box.high[d])
            throw std::invalid_argument("build_namdp: grid box must cover the dataset box");

    NamdpModel model;
    model.state_keys = ordered_keys(dataset);
    model.grid = grid;
    model.gamma = gamma;
    model.sigma = sigma;

    const StateGroups groups = group_by_state(dataset);
    const int n_states = model.n_states();
    const int n_points = grid.size();

    // nonterminal successors must resolve to a known state key
    for (const auto& [key, entries] : groups)
        for (const GroupEntry& e : entries)
            if (!e.done &&
                model.state_index(state_key(e.s2, dataset.key_mode)) < 0)
                throw std::runtime_error("build_namdp: unreachable next-state key '" +
                                         state_key(e.s2, dataset.key_mode) + "'");

    model.weights.resize(n_states);
    model.r_sigma.resize(n_states);
    model.p_sigma.resize(n_states);
    for (int s = 0; s < n_states; ++s) {
        const std::vector<GroupEntry>& entries = groups.at(model.state_keys[s]);
        std::vector<int> next_index(entries.size(), n_states); // terminal sink
        for (std::size_t i = 0; i < entries.size(); ++i)
            if (!entries[i].done)
                next_index[i] =
                    model.state_index(state_key(entries[i].s2, dataset.key_mode));

        model.weights[s].resize(n_points);
        model.r_sigma[s].assign(n_points, 0.0);
        model.p_sigma[s].assign(n_points, std::vector<double>(n_states + 1, 0.0));
        for (int j = 0; j < n_points; ++j) {
            std::vector<double> w = weight_fn(entries, grid.points[j]);
            double r = 0.0;
            for (std::size_t i = 0; i < entries.size(); ++i) {
                r += w[i] * (entries[i].r - sq_dist(entries[i].a, grid.points[j]));
                model.p_sigma[s][j][next_index[i]] += w[i];
            }
            model.r_sigma[s][j] = r;
            model.weights[s][j] = std::move(w);
        }
    }
    return model;
}

} // namespace

NamdpModel build_namdp(const TransitionDataset& dataset, const NoiseSpec& spec,
                       const ActionGrid& grid, double gamma) {
    spec.validate();
    return build_from_groups(
        dataset, grid, gamma, spec.sigma,
        [&spec](const std::vector<GroupEntry>& entries,
                const std::vector<double>& a_prime) {
            return posterior_weights(entries, a_prime, spec);
        });
}

NamdpModel build_limit_namdp(const TransitionDataset& dataset,
                             const ActionGrid& grid, double gamma,
                             double tie_tol) {
    return build_from_groups(
        dataset, grid, gamma, 0.0,
        [tie_tol](const std::vector<GroupEntry>& entries,
                  const std::vector<double>& a_prime) {
            const std::vector<int> nearest = nearest_set(entries, a_prime, tie_tol);
            std::vector<double> w(entries.size(), 0.0);
            for (int idx : nearest) w[idx] = 1.0 / nearest.size();
            return w;
        });
}

std::vector<double> default_action_embedding(int n_actions) {
    std::vector<double> pos(n_actions, 0.0);
    if (n_actions == 1) return pos;
    for (int k = 0; k < n_actions; ++k)
        pos[k] = -1.0 + 2.0 * k / (n_actions - 1);
    return pos;
}

NamdpModel namdp_from_finite_mdp(const FiniteMdp& mdp, const NoiseSpec& spec,
                                 const std::vector<double>& action_positions) {
    mdp.validate();
    spec.validate();
    if (static_cast<int>(action_positions.size()) != mdp.n_actions)
        throw std::invalid_argument("namdp_from_finite_mdp: positions/actions mismatch");

    NamdpModel model;
    model.gamma = mdp.gamma;
    model.sigma = spec.sigma;
    model.grid.box = spec.box;
    model.grid.spacing =
        mdp.n_actions > 1 ? action_positions[1] - action_positions[0] : 1.0;
    for (double p : action_positions) model.grid.points.push_back({p});
    for (int s = 0; s < mdp.n_states; ++s)
        model.state_keys.push_back(std::to_string(s));

    model.weights.resize(mdp.n_states);
    model.r_sigma.resize(mdp.n_states);
    model.p_sigma.resize(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
        std::vector<GroupEntry> entries(mdp.n_actions);
        for (int k = 0; k < mdp.n_actions; ++k)
            entries[k] = GroupEntry{{action_positions[k]}, mdp.rewards[s][k], {}, false};

        model.weights[s].resize(mdp.n_actions);
        model.r_sigma[s].assign(mdp.n_actions, 0.0);
        model.p_sigma[s].assign(mdp.n_actions,
                                std::vector<double>(mdp.n_states + 1, 0.0));
        for (int j = 0; j < mdp.n_actions; ++j) {
            std::vector<double> w = posterior_weights(entries, model.grid.points[j], spec);
            for (int k = 0; k < mdp.n_actions; ++k) {
                const double d = action_positions[k] - action_positions[j];
                model.r_sigma[s][j] += w[k] * (mdp.rewards[s][k] - d * d);
                for (int s2 = 0; s2 < mdp.n_states; ++s2)
                    model.p_sigma[s][j][s2] += w[k] * mdp.transitions[s][k][s2];
            }
            model.weights[s][j] = std::move(w);
        }
    }
    return model;
}

namespace {

// one Jacobi sweep of the Bellman operator; next_value maps a state's Q row
// to the successor value used in the backup
template <typename NextValue>
double sweep(const NamdpModel& model, const QGrid& q, QGrid& out,
             NextValue next_value) {
    const int n_states = model.n_states();
    const int n_points = model.grid.size();
    std::vector<double> v(n_states + 1, 0.0); // terminal sink value 0
    for (int s = 0; s < n_states; ++s) v[s] = next_value(s, q.values[s]);
    double residual = 0.0;
    for (int s = 0; s < n_states; ++s)
        for (int j = 0; j < n_points; ++j) {
            const std::vector<double>& p = model.p_sigma[s][j];
            double exp_v = 0.0;
            for (int s2 = 0; s2 < n_states; ++s2) exp_v += p[s2] * v[s2];
            const double backup = model.r_sigma[s][j] + model.gamma * exp_v;
            residual = std::max(residual, std::fabs(backup - q.values[s][j]));
            out.values[s][j] = backup;
        }
    return residual;
}

} // namespace

SolveResult value_iteration(const NamdpModel& model, double tol, int max_iter) {
    if (!(model.gamma < 1.0))
        throw std::invalid_argument("value_iteration: gamma must be < 1");
    const int n_states = model.n_states();
    const int n_points = model.grid.size();
    QGrid q, next;
    q.values.assign(n_states, std::vector<double>(n_points, 0.0));
    next.values = q.values;

    auto max_value = [](int, const std::vector<double>& row) {
        return *std::max_element(row.begin(), row.end());
    };

    double residual = 0.0;
    for (int iter = 0; iter < max_iter; ++iter) {
        residual = sweep(model, q, next, max_value);
        std::swap(q.values, next.values);
        if (residual <= tol)
            return {q, GridPolicy::greedy_from(q), iter + 1, residual};
    }
    throw std::runtime_error("value_iteration: no convergence after " +
                             std::to_string(max_iter) +
                             " sweeps, residual " + std::to_string(residual));
}

QGrid policy_evaluation(const NamdpModel& model, const GridPolicy& policy,
                        double tol, int max_iter) {
    const int n_states = model.n_states();
    const int n_points = model.grid.size();
    QGrid q, next;
    q.values.assign(n_states, std::vector<double>(n_points, 0.0));
    next.values = q.values;

    auto policy_value = [&policy](int s, const std::vector<double>& row) {
        return kern::active().dot(policy.probs[s].data(), row.data(), row.size());
    };

    double residual = 0.0;
    for (int iter = 0; iter < max_iter; ++iter) {
        residual = sweep(model, q, next, policy_value);
        std::swap(q.values, next.values);
        if (residual <= tol) return q;
    }
    throw std::runtime_error("policy_evaluation: no convergence after " +
                             std::to_string(max_iter) +
                             " sweeps, residual " + std::to_string(residual));
}

std::vector<double> policy_state_values(const QGrid& q, const GridPolicy& policy) {
    std::vector<double> v(q.values.size(), 0.0);
    for (std::size_t s = 0; s < q.values.size(); ++s)
        v[s] = kern::active().dot(policy.probs[s].data(), q.values[s].data(),
                                  q.values[s].size());
    return v;
}

QGrid pani_exact_regression(const TransitionDataset& dataset, const NoiseSpec& spec,
                            const ActionGrid& grid, double gamma,
                            const std::vector<double>& v_next) {
    dataset.validate();
    const std::vector<std::string> keys = ordered_keys(dataset);
    if (v_next.size() != keys.size())
        throw std::invalid_argument("pani_exact_regression: v_next size mismatch");
    const StateGroups groups = group_by_state(dataset);

    QGrid q;
    q.values.assign(keys.size(), std::vector<double>(grid.size(), 0.0));
    for (std::size_t s = 0; s < keys.size(); ++s) {
        const std::vector<GroupEntry>& entries = groups.at(keys[s]);
        std::vector<double> boot(entries.size(), 0.0);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].done) continue;
            const std::string next = state_key(entries[i].s2, dataset.key_mode);
            const auto it = std::find(keys.begin(), keys.end(), next);
            if (it == keys.end())
                throw std::runtime_error("pani_exact_regression: unreachable next state '" +
                                         next + "'");
            boot[i] = v_next[it - keys.begin()];
        }
        for (int j = 0; j < grid.size(); ++j) {
            const std::vector<double> w = posterior_weights(entries, grid.points[j], spec);
            double acc = 0.0;
            for (std::size_t i = 0; i < entries.size(); ++i)
                acc += w[i] * (entries[i].r - sq_dist(entries[i].a, grid.points[j]) +
                               gamma * boot[i]);
            q.values[s][j] = acc;
        }
    }
    return q;
}

ReturnResult expected_return(const FiniteMdp& mdp,
                             const std::vector<std::vector<double>>& policy,
                             const std::vector<double>& start) {
    mdp.validate();
    std::vector<std::vector<double>> p_pi(mdp.n_states,
                                          std::vector<double>(mdp.n_states, 0.0));
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            for (int s2 = 0; s2 < mdp.n_states; ++s2)
                p_pi[s][s2] += policy[s][a] * mdp.transitions[s][a][s2];

    const std::vector<double> d = occupancy(p_pi, start, mdp.gamma);
    ReturnResult out;
    out.visitation.assign(mdp.n_states, std::vector<double>(mdp.n_actions, 0.0));
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            out.visitation[s][a] = d[s] * policy[s][a];
            out.eta += out.visitation[s][a] * mdp.rewards[s][a];
        }
    out.eta /= 1.0 - mdp.gamma;
    return out;
}

ReturnResult expected_return(const NamdpModel& model, const GridPolicy& policy,
                             const std::vector<double>& start) {
    const int n = model.n_states();
    const int n_points = model.grid.size();
    // terminal sink appended as an absorbing zero-reward state
    std::vector<std::vector<double>> p_pi(n + 1, std::vector<double>(n + 1, 0.0));
    for (int s = 0; s < n; ++s)
        for (int j = 0; j < n_points; ++j)
            for (int s2 = 0; s2 <= n; ++s2)
                p_pi[s][s2] += policy.probs[s][j] * model.p_sigma[s][j][s2];
    p_pi[n][n] = 1.0;

    std::vector<double> mu0(n + 1, 0.0);
    for (int s = 0; s < n; ++s) mu0[s] = start[s];

    const std::vector<double> d = occupancy(p_pi, mu0, model.gamma);
    ReturnResult out;
    out.visitation.assign(n, std::vector<double>(n_points, 0.0));
    for (int s = 0; s < n; ++s)
        for (int j = 0; j < n_points; ++j) {
            out.visitation[s][j] = d[s] * policy.probs[s][j];
            out.eta += out.visitation[s][j] * model.r_sigma[s][j];
        }
    out.eta /= 1.0 - model.gamma;
    return out;
}

ErrorBoundReport error_bound_report(const FiniteMdp& true_mdp,
                                    const NamdpModel& namdp,
                                    const std::vector<std::vector<double>>& policy,
                                    const std::vector<double>& start) {
    if (namdp.n_states() != true_mdp.n_states ||
        namdp.grid.size() != true_mdp.n_actions)
        throw std::invalid_argument("error_bound_report: model shapes differ");

    const ReturnResult truth = expected_return(true_mdp, policy, start);
    GridPolicy grid_policy;
    grid_policy.probs = policy;
    const ReturnResult noisy = expected_return(namdp, grid_policy, start);

    ErrorBoundReport report;
    report.eta_true = truth.eta;
    report.eta_namdp = noisy.eta;
    report.lhs = std::fabs(truth.eta - noisy.eta);
    report.visitation = truth.visitation;

    double r_bar_max = 0.0;
    for (int s = 0; s < true_mdp.n_states; ++s)
        for (int a = 0; a < true_mdp.n_actions; ++a)
            r_bar_max = std::max(r_bar_max, std::fabs(namdp.r_sigma[s][a]));
    report.r_bar_max = r_bar_max;

    double exp_tv = 0.0;
    for (int s = 0; s < true_mdp.n_states; ++s)
        for (int a = 0; a < true_mdp.n_actions; ++a) {
            report.eps_r += truth.visitation[s][a] *
                            std::fabs(true_mdp.rewards[s][a] - namdp.r_sigma[s][a]);
            double tv = std::fabs(namdp.p_sigma[s][a][true_mdp.n_states]);
            for (int s2 = 0; s2 < true_mdp.n_states; ++s2)
                tv += std::fabs(true_mdp.transitions[s][a][s2] - namdp.p_sigma[s][a][s2]);
            exp_tv += truth.visitation[s][a] * 0.5 * tv;
        }
    const double gamma = true_mdp.gamma;
    // The reward term carries the occupancy mass 1/(1-gamma): the return is
    // a sum over the unnormalized discounted visitation, while the stored
    // d^pi is normalized to 1.
    report.eps_r /= 1.0 - gamma;
    report.eps_m = 2.0 * r_bar_max * gamma * exp_tv / ((1.0 - gamma) * (1.0 - gamma));
    return report;
}

double bellman_gap(const NamdpModel& model_sigma, const NamdpModel& model_limit,
                   const QGrid& q) {
    const int n = model_sigma.n_states();
    const int n_points = model_sigma.grid.size();
    if (model_limit.n_states() != n || model_limit.grid.size() != n_points)
        throw std::invalid_argument("bellman_gap: models must share states and grid");

    std::vector<double> v(n + 1, 0.0);
    for (int s = 0; s < n; ++s)
        v[s] = *std::max_element(q.values[s].begin(), q.values[s].end());

    double gap = 0.0;
    for (int s = 0; s < n; ++s)
        for (int j = 0; j < n_points; ++j) {
            double ev_sigma = 0.0, ev_limit = 0.0;
            for (int s2 = 0; s2 < n; ++s2) {
                ev_sigma += model_sigma.p_sigma[s][j][s2] * v[s2];
                ev_limit += model_limit.p_sigma[s][j][s2] * v[s2];
            }
            const double t_sigma = model_sigma.r_sigma[s][j] + model_sigma.gamma * ev_sigma;
            const double t_limit = model_limit.r_sigma[s][j] + model_limit.gamma * ev_limit;
            gap = std::max(gap, std::fabs(t_limit - t_sigma));
        }
    return gap;
}

NoOodResult no_ood_check(const NamdpModel& model, const TransitionDataset& dataset,
                         double epsilon) {
    const SolveResult solved = value_iteration(model);
    const StateGroups groups = group_by_state(dataset);

    NoOodResult out;
    out.pass = true;
    const double slack =
        model.grid.box.dim() * model.grid.spacing * model.grid.spacing;
    for (int s = 0; s < model.n_states(); ++s) {
        const std::vector<double>& probs = solved.greedy.probs[s];
        const int j = static_cast<int>(
            std::max_element(probs.begin(), probs.end()) - probs.begin());
        const std::vector<GroupEntry>& entries = groups.at(model.state_keys[s]);
        double best = std::numeric_limits<double>::infinity();
        for (const GroupEntry& e : entries)
            best = std::min(best, sq_dist(e.a, model.grid.points[j]));
        if (best > out.worst_sq_dist) {
            out.worst_sq_dist = best;
            out.worst_state = model.state_keys[s];
        }
        if (!(best < epsilon + slack)) out.pass = false;
    }
    return out;
}

int count_modes(const TransitionDataset& dataset, const NoiseSpec& spec,
                const ActionGrid& grid) {
    dataset.validate();
    if (dataset.action_dim != 1)
        throw std::invalid_argument("count_modes: 1-D actions only");

    const int n = grid.size();
    std::vector<double> density(n, 0.0);
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (const Transition& t : dataset.transitions)
            acc += std::exp(log_density(spec, grid.points[j], t.a));
        density[j] = acc / dataset.transitions.size();
    }

    const double peak = *std::max_element(density.begin(), density.end());
    const double plateau_tol = 1e-12 * std::max(peak, 1e-300);

    int modes = 0;
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && std::fabs(density[j + 1] - density[i]) <= plateau_tol)
            ++j;
        const bool left_lower = i == 0 || density[i - 1] < density[i] - plateau_tol;
        const bool right_lower = j == n - 1 || density[j + 1] < density[i] - plateau_tol;
        const bool interior = i > 0 && j < n - 1;
        if (left_lower && right_lower && interior) ++modes;
        i = j + 1;
    }
    return modes;
}

void export_model_csv(const NamdpModel& model, const QGrid* q,
                      const std::string& path, const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_model_csv: cannot open " + path);
    out << "# config_hash=" << config_hash << "\n";
    out << "state";
    for (int d = 0; d < model.grid.box.dim(); ++d) out << ",a" << d + 1;
    out << ",r_sigma";
    if (q) out << ",q";
    out << "\n";
    char buf[64];
    for (int s = 0; s < model.n_states(); ++s)
        for (int j = 0; j < model.grid.size(); ++j) {
            out << model.state_keys[s];
            for (double x : model.grid.points[j]) {
                std::snprintf(buf, sizeof(buf), "%.17g", x);
                out << "," << buf;
            }
            std::snprintf(buf, sizeof(buf), "%.17g", model.r_sigma[s][j]);
            out << "," << buf;
            if (q) {
                std::snprintf(buf, sizeof(buf), "%.17g", q->values[s][j]);
                out << "," << buf;
            }
            out << "\n";
        }
}

} // namespace pani
