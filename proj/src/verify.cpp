#include "pani/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pani/dataset.hpp"
#include "pani/namdp.hpp"
#include "pani/noise.hpp"
#include "pani/rng.hpp"

namespace pani {

namespace {

double sup_gap(const QGrid& a, const QGrid& b) {
    double gap = 0.0;
    for (std::size_t s = 0; s < a.values.size(); ++s)
        for (std::size_t j = 0; j < a.values[s].size(); ++j)
            gap = std::max(gap, std::fabs(a.values[s][j] - b.values[s][j]));
    return gap;
}

// regression-vs-evaluation gap for one dataset/policy pair
double theorem1_gap(const TransitionDataset& dataset, const NoiseSpec& spec,
                    const ActionGrid& grid, double gamma, const NamdpModel& model,
                    const GridPolicy& policy) {
    const QGrid q_pi = policy_evaluation(model, policy, 1e-12);
    const std::vector<double> v_next = policy_state_values(q_pi, policy);
    const QGrid q_reg = pani_exact_regression(dataset, spec, grid, gamma, v_next);
    return sup_gap(q_pi, q_reg);
}

ChainData default_chain() {
    return gen_chain_env(5, 0.3, 0.2, 1.0, 0.99, 64, 7);
}

} // namespace

VerifyReport verify_theorem1(double tol) {
    VerifyReport report;
    report.suite = "theorem1";

    struct Case {
        std::string name;
        TransitionDataset dataset;
        int grid_points;
    };
    std::vector<Case> cases;
    cases.push_back({"bandit1d", gen_bandit1d(), 301});
    cases.push_back({"chain", default_chain().dataset, 101});

    for (const Case& c : cases) {
        const ActionGrid grid = ActionGrid::regular(c.dataset.box, c.grid_points);
        const NoiseSpec spec(NoiseFamily::Gaussian, 0.5, c.dataset.box);
        const double gamma = 0.99;
        const NamdpModel model = build_namdp(c.dataset, spec, grid, gamma);

        const GridPolicy uniform =
            GridPolicy::uniform(model.n_states(), grid.size());
        const double gap_u = theorem1_gap(c.dataset, spec, grid, gamma, model, uniform);
        report.checks.push_back({c.name + "/uniform_policy_gap", gap_u <= tol,
                                 gap_u, tol,
                                 "sup |policy_evaluation - exact_regression|"});

        const SolveResult solved = value_iteration(model, 1e-12);
        const double gap_g =
            theorem1_gap(c.dataset, spec, grid, gamma, model, solved.greedy);
        report.checks.push_back({c.name + "/greedy_policy_gap", gap_g <= tol,
                                 gap_g, tol,
                                 "sup |policy_evaluation - exact_regression| for greedy(Q*)"});
    }
    return report;
}

VerifyReport verify_limits(double tol) {
    VerifyReport report;
    report.suite = "limits";

    const TransitionDataset bandit = gen_bandit1d();
    const ActionGrid grid = ActionGrid::regular(bandit.box, 301);
    const double gamma = 0.99;
    const NamdpModel limit = build_limit_namdp(bandit, grid, gamma);

    // geometric sigma sequence: gaps to the limit model shrink monotonically
    std::vector<double> r_gaps, w_gaps;
    for (int k = 0; k <= 12; ++k) {
        const NoiseSpec spec(NoiseFamily::Gaussian, std::pow(2.0, -k), bandit.box);
        const NamdpModel model = build_namdp(bandit, spec, grid, gamma);
        double r_gap = 0.0, w_gap = 0.0;
        for (int s = 0; s < model.n_states(); ++s)
            for (int j = 0; j < grid.size(); ++j) {
                r_gap = std::max(r_gap,
                                 std::fabs(model.r_sigma[s][j] - limit.r_sigma[s][j]));
                for (std::size_t i = 0; i < model.weights[s][j].size(); ++i)
                    w_gap = std::max(w_gap, std::fabs(model.weights[s][j][i] -
                                                      limit.weights[s][j][i]));
            }
        r_gaps.push_back(r_gap);
        w_gaps.push_back(w_gap);
    }
    bool monotone = true;
    for (std::size_t k = 1; k < r_gaps.size(); ++k)
        if (r_gaps[k] > r_gaps[k - 1] + 1e-12 || w_gaps[k] > w_gaps[k - 1] + 1e-12)
            monotone = false;
    {
        std::ostringstream detail;
        detail << "R gaps at sigma = 2^-k, k = 0..12:";
        for (double g : r_gaps) detail << " " << g;
        report.checks.push_back({"bandit1d/monotone_convergence", monotone,
                                 monotone ? 1.0 : 0.0, 1.0, detail.str()});
        report.checks.push_back({"bandit1d/r_gap_at_k12", r_gaps.back() <= tol,
                                 r_gaps.back(), tol,
                                 "sup |R_sigma - R_limit| at sigma = 2^-12"});
    }

    // the limit model's greedy actions sit on dataset actions (up to grid snap)
    {
        const SolveResult solved = value_iteration(limit, 1e-12);
        const StateGroups groups = group_by_state(bandit);
        double worst = 0.0;
        for (int s = 0; s < limit.n_states(); ++s) {
            const auto& probs = solved.greedy.probs[s];
            const int j = static_cast<int>(
                std::max_element(probs.begin(), probs.end()) - probs.begin());
            double best = std::numeric_limits<double>::infinity();
            for (const GroupEntry& e : groups.at(limit.state_keys[s]))
                best = std::min(best, std::fabs(e.a[0] - limit.grid.points[j][0]));
            worst = std::max(worst, best);
        }
        report.checks.push_back({"bandit1d/limit_greedy_on_data",
                                 worst <= limit.grid.spacing + 1e-12, worst,
                                 limit.grid.spacing,
                                 "distance from greedy action to nearest dataset action"});
    }

    // closed-form identity of the limit model at every grid point:
    // E_{p_C}[Q(s,a)] = Q(s,a') + inf dist^2 (dataset actions are on-grid)
    {
        const GridPolicy uniform = GridPolicy::uniform(limit.n_states(), grid.size());
        const QGrid q = policy_evaluation(limit, uniform, 1e-13);
        const StateGroups groups = group_by_state(bandit);
        double worst = 0.0;
        for (int s = 0; s < limit.n_states(); ++s) {
            const std::vector<GroupEntry>& entries = groups.at(limit.state_keys[s]);
            for (int j = 0; j < grid.size(); ++j) {
                double expectation = 0.0, inf_dist = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < entries.size(); ++i) {
                    const double d = entries[i].a[0] - grid.points[j][0];
                    inf_dist = std::min(inf_dist, d * d);
                    if (limit.weights[s][j][i] > 0.0) {
                        // dataset actions lie on the grid; snap to its index
                        int ji = 0;
                        double bestd = std::numeric_limits<double>::infinity();
                        for (int g = 0; g < grid.size(); ++g) {
                            const double dd = std::fabs(grid.points[g][0] - entries[i].a[0]);
                            if (dd < bestd) {
                                bestd = dd;
                                ji = g;
                            }
                        }
                        expectation += limit.weights[s][j][i] * q.values[s][ji];
                    }
                }
                worst = std::max(worst, std::fabs(expectation -
                                                  (q.values[s][j] + inf_dist)));
            }
        }
        report.checks.push_back({"bandit1d/limit_q_identity", worst <= 1e-9, worst,
                                 1e-9,
                                 "E_pC[Q] - (Q(s,a') + inf dist^2), sup over grid"});
    }

    // a small-sigma model is already close to the limit
    {
        const NoiseSpec spec(NoiseFamily::Gaussian, 1e-6, bandit.box);
        const NamdpModel model = build_namdp(bandit, spec, grid, gamma);
        double r_gap = 0.0;
        for (int s = 0; s < model.n_states(); ++s)
            for (int j = 0; j < grid.size(); ++j)
                r_gap = std::max(r_gap,
                                 std::fabs(model.r_sigma[s][j] - limit.r_sigma[s][j]));
        report.checks.push_back({"bandit1d/sigma_1e-6_gap", r_gap <= tol, r_gap, tol,
                                 "sup |R_sigma - R_limit| at sigma = 1e-6"});
    }
    return report;
}

VerifyReport verify_bound(int n_seeds, double gamma, double sigma) {
    VerifyReport report;
    report.suite = "bound";
    const ActionBox box = ActionBox::symmetric(1.2, 1);

    for (int seed = 0; seed < n_seeds; ++seed) {
        const FiniteMdp mdp = FiniteMdp::random(5, 4, gamma, seed);
        const NoiseSpec spec(NoiseFamily::Gaussian, sigma, box);
        const NamdpModel namdp = namdp_from_finite_mdp(
            mdp, spec, default_action_embedding(mdp.n_actions));

        // a seeded random stochastic policy; the bound holds for every policy
        Rng rng(static_cast<std::uint64_t>(seed) ^ 0x7070707070707070ULL);
        std::vector<std::vector<double>> policy(
            mdp.n_states, std::vector<double>(mdp.n_actions, 0.0));
        for (int s = 0; s < mdp.n_states; ++s) {
            double total = 0.0;
            for (int a = 0; a < mdp.n_actions; ++a) {
                policy[s][a] = 0.05 + rng.uniform01();
                total += policy[s][a];
            }
            for (int a = 0; a < mdp.n_actions; ++a) policy[s][a] /= total;
        }
        const std::vector<double> start(mdp.n_states, 1.0 / mdp.n_states);

        const ErrorBoundReport r = error_bound_report(mdp, namdp, policy, start);
        std::ostringstream detail;
        detail << "eta=" << r.eta_true << " eta_bar=" << r.eta_namdp
               << " eps_r=" << r.eps_r << " eps_m=" << r.eps_m
               << " r_bar_max=" << r.r_bar_max;
        report.checks.push_back({"seed_" + std::to_string(seed), r.holds(), r.lhs,
                                 r.eps_r + r.eps_m, detail.str()});
    }
    return report;
}

VerifyReport verify_noood(double epsilon) {
    VerifyReport report;
    report.suite = "noood";

    // small-sigma chain NAMDP selects supported actions everywhere
    {
        const ChainData chain = default_chain();
        const ActionGrid grid = ActionGrid::regular(chain.dataset.box, 101);
        const NoiseSpec spec(NoiseFamily::Gaussian, 1e-4, chain.dataset.box);
        const NamdpModel model = build_namdp(chain.dataset, spec, grid, 0.99);
        const NoOodResult r = no_ood_check(model, chain.dataset, epsilon);
        report.checks.push_back({"chain/sigma_1e-4", r.pass, r.worst_sq_dist,
                                 epsilon,
                                 "worst greedy squared distance to dataset support (state " +
                                     r.worst_state + ")"});
    }

    // the limit model's greedy bandit arms are the dataset arms
    {
        const TransitionDataset bandit = gen_bandit1d();
        const ActionGrid grid = ActionGrid::regular(bandit.box, 301);
        const NamdpModel limit = build_limit_namdp(bandit, grid, 0.99);
        const NoOodResult r = no_ood_check(limit, bandit, 1e-9);
        report.checks.push_back({"bandit1d/limit_model", r.pass, r.worst_sq_dist,
                                 1e-9, "greedy actions on dataset arms up to grid snap"});
    }

    // high noise shifts the greedy action off the data; reported, not gated
    {
        const TransitionDataset bandit = gen_bandit1d();
        const ActionGrid grid = ActionGrid::regular(bandit.box, 301);
        const NoiseSpec spec(NoiseFamily::Gaussian, 1.0, bandit.box);
        const NamdpModel model = build_namdp(bandit, spec, grid, 0.99);
        const NoOodResult r = no_ood_check(model, bandit, 1e-2);
        report.checks.push_back({"bandit1d/sigma_1.0_mode_shift", true,
                                 r.worst_sq_dist, 0.0,
                                 std::string("informational: high-noise greedy drifts off the arms ") +
                                     (r.pass ? "(within epsilon)" : "(outside epsilon)")});
    }
    return report;
}

std::vector<VerifyReport> verify_all() {
    return {verify_theorem1(), verify_limits(), verify_bound(), verify_noood()};
}

} // namespace pani
