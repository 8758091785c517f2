#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "pani/dataset.hpp"
#include "pani/namdp.hpp"
#include "pani/rng.hpp"
#include "pani/verify.hpp"

using namespace pani;

namespace {

const double kE = std::exp(1.0);

TransitionDataset bandit() { return gen_bandit1d(); }

ActionGrid bandit_grid(int points = 301) {
    return ActionGrid::regular(gen_bandit1d().box, points);
}

int grid_index_of(const ActionGrid& grid, double x) {
    int best = 0;
    double bestd = std::fabs(grid.points[0][0] - x);
    for (int j = 1; j < grid.size(); ++j) {
        const double d = std::fabs(grid.points[j][0] - x);
        if (d < bestd) {
            bestd = d;
            best = j;
        }
    }
    return best;
}

} // namespace

TEST_CASE("posterior weights") {
    const StateGroups groups = group_by_state(bandit());
    const std::vector<GroupEntry>& entries = groups.begin()->second;
    const NoiseSpec spec(NoiseFamily::Gaussian, 1.0, bandit().box);

    SUBCASE("a single entry always gets weight one") {
        const std::vector<GroupEntry> one = {entries[0]};
        for (double sigma : {1e-6, 0.5, 1.0}) {
            const NoiseSpec s(NoiseFamily::Gaussian, sigma, bandit().box);
            const std::vector<double> w = posterior_weights(one, {0.7}, s);
            CHECK(w.size() == 1);
            CHECK(w[0] == 1.0);
        }
    }
    SUBCASE("symmetric families split the midpoint evenly") {
        for (NoiseFamily family : {NoiseFamily::Gaussian, NoiseFamily::Laplace}) {
            const NoiseSpec s(family, 0.5, bandit().box);
            const std::vector<double> w = posterior_weights(entries, {0.0}, s);
            CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
            CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-12));
        }
    }
    SUBCASE("gaussian posterior at 0.5 is e/(1+e) on the nearer arm") {
        const std::vector<double> w = posterior_weights(entries, {0.5}, spec);
        // density ratio exp((2.25 - 0.25)/2) = e
        CHECK(w[1] == doctest::Approx(kE / (1.0 + kE)).epsilon(1e-12));
        CHECK(w[1] == doctest::Approx(0.7311).epsilon(1e-4));
    }
    SUBCASE("rows always sum to one") {
        Rng rng(23);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<GroupEntry> group;
            const int n = 1 + static_cast<int>(rng.uniform_index(6));
            for (int i = 0; i < n; ++i)
                group.push_back({{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)},
                                 0.0,
                                 {},
                                 true});
            const NoiseSpec s(NoiseFamily::Gaussian,
                              std::pow(10.0, -rng.uniform(0.0, 6.0)),
                              ActionBox::symmetric(1.0, 2));
            const std::vector<double> w =
                posterior_weights(group, {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}, s);
            double total = 0.0;
            for (double x : w) {
                CHECK(x >= 0.0);
                total += x;
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
        }
    }
    SUBCASE("total underflow falls back to the nearest set") {
        // hybrid density is exactly zero outside the box and the gaussian
        // component underflows: force it with a point far outside
        const NoiseSpec s(NoiseFamily::UniformMix, 1e-3, bandit().box);
        const std::vector<double> w = posterior_weights(entries, {200.0}, s);
        CHECK(w[1] == 1.0); // +1 is the nearest arm
        CHECK(w[0] == 0.0);
    }
}

TEST_CASE("nearest set") {
    const StateGroups groups = group_by_state(bandit());
    const std::vector<GroupEntry>& entries = groups.begin()->second;
    CHECK(nearest_set(entries, {0.0}) == std::vector<int>{0, 1}); // exact tie
    CHECK(nearest_set(entries, {0.2}) == std::vector<int>{1});
    CHECK(nearest_set(entries, {-0.2}) == std::vector<int>{0});

    SUBCASE("matches a brute-force scan on random 2-d groups") {
        Rng rng(31);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<GroupEntry> group;
            const int n = 2 + static_cast<int>(rng.uniform_index(8));
            for (int i = 0; i < n; ++i)
                group.push_back({{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)},
                                 0.0,
                                 {},
                                 true});
            const std::vector<double> probe = {rng.uniform(-1.0, 1.0),
                                               rng.uniform(-1.0, 1.0)};
            double best = 1e18;
            for (const GroupEntry& e : group) {
                const double d = (e.a[0] - probe[0]) * (e.a[0] - probe[0]) +
                                 (e.a[1] - probe[1]) * (e.a[1] - probe[1]);
                best = std::min(best, d);
            }
            std::vector<int> expected;
            for (int i = 0; i < n; ++i) {
                const double d = (group[i].a[0] - probe[0]) * (group[i].a[0] - probe[0]) +
                                 (group[i].a[1] - probe[1]) * (group[i].a[1] - probe[1]);
                if (d <= best + 1e-9) expected.push_back(i);
            }
            CHECK(nearest_set(group, probe) == expected);
        }
    }
}

TEST_CASE("namdp construction on the bandit") {
    const ActionGrid grid = bandit_grid();
    const TransitionDataset ds = bandit();

    SUBCASE("limit model reward at the arms and the midpoint") {
        const NamdpModel limit = build_limit_namdp(ds, grid, 0.99);
        CHECK(limit.r_sigma[0][grid_index_of(grid, 1.0)] ==
              doctest::Approx(1.0).epsilon(1e-9));
        CHECK(limit.r_sigma[0][grid_index_of(grid, -1.0)] ==
              doctest::Approx(0.0).epsilon(1e-9));
        // equal weights, both arms at distance 1: 0.5(0-1) + 0.5(1-1)
        CHECK(limit.r_sigma[0][grid_index_of(grid, 0.0)] ==
              doctest::Approx(-0.5).epsilon(1e-9));
    }
    SUBCASE("symmetric-family midpoint reward is -0.5 for every sigma") {
        for (double sigma : {0.1, 0.5, 1.0}) {
            const NoiseSpec spec(NoiseFamily::Gaussian, sigma, ds.box);
            const NamdpModel model = build_namdp(ds, spec, grid, 0.99);
            CHECK(model.r_sigma[0][grid_index_of(grid, 0.0)] ==
                  doctest::Approx(-0.5).epsilon(1e-10));
        }
    }
    SUBCASE("all-terminal data places all mass on the sink") {
        const NoiseSpec spec(NoiseFamily::Gaussian, 0.5, ds.box);
        const NamdpModel model = build_namdp(ds, spec, grid, 0.99);
        for (int j = 0; j < grid.size(); ++j) {
            CHECK(model.p_sigma[0][j][1] == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(model.p_sigma[0][j][0] == 0.0);
        }
    }
    SUBCASE("rows are probability vectors and rewards are penalized") {
        const NoiseSpec spec(NoiseFamily::Hybrid, 0.3, ds.box);
        const NamdpModel model = build_namdp(ds, spec, grid, 0.99);
        for (int j = 0; j < grid.size(); ++j) {
            double wsum = 0.0;
            for (double w : model.weights[0][j]) wsum += w;
            CHECK(wsum == doctest::Approx(1.0).epsilon(1e-10));
            double psum = 0.0;
            for (double p : model.p_sigma[0][j]) psum += p;
            CHECK(psum == doctest::Approx(1.0).epsilon(1e-10));
            CHECK(model.r_sigma[0][j] <= 1.0); // max dataset reward at the state
        }
    }
    SUBCASE("unreachable next-state keys are rejected") {
        TransitionDataset broken = ds;
        broken.transitions[0].done = false;
        broken.transitions[0].s2 = {42.0};
        const NoiseSpec spec(NoiseFamily::Gaussian, 0.5, ds.box);
        CHECK_THROWS_AS(build_namdp(broken, spec, grid, 0.99), std::runtime_error);
    }
}

TEST_CASE("value iteration") {
    const TransitionDataset ds = bandit();
    const ActionGrid grid = bandit_grid();
    const NoiseSpec spec(NoiseFamily::Gaussian, 0.5, ds.box);
    const NamdpModel model = build_namdp(ds, spec, grid, 0.99);

    SUBCASE("terminal-only data converges to R_sigma immediately") {
        const SolveResult solved = value_iteration(model);
        for (int j = 0; j < grid.size(); ++j)
            CHECK(solved.q.values[0][j] == doctest::Approx(model.r_sigma[0][j]));
        CHECK(solved.sweeps <= 2);
    }
    SUBCASE("residuals contract by gamma on a bootstrapped model") {
        const ChainData chain = gen_chain_env(5, 0.3, 0.2, 1.0, 0.9, 32, 3);
        const ActionGrid cgrid = ActionGrid::regular(chain.dataset.box, 51);
        const NoiseSpec cspec(NoiseFamily::Gaussian, 0.3, chain.dataset.box);
        const NamdpModel cmodel = build_namdp(chain.dataset, cspec, cgrid, 0.9);
        // successive sup-norm residuals from repeated single sweeps
        QGrid q;
        q.values.assign(cmodel.n_states(),
                        std::vector<double>(cgrid.size(), 0.0));
        double prev_residual = -1.0;
        for (int iter = 0; iter < 30; ++iter) {
            std::vector<double> v(cmodel.n_states() + 1, 0.0);
            for (int s = 0; s < cmodel.n_states(); ++s)
                v[s] = *std::max_element(q.values[s].begin(), q.values[s].end());
            double residual = 0.0;
            QGrid next = q;
            for (int s = 0; s < cmodel.n_states(); ++s)
                for (int j = 0; j < cgrid.size(); ++j) {
                    double ev = 0.0;
                    for (int s2 = 0; s2 < cmodel.n_states(); ++s2)
                        ev += cmodel.p_sigma[s][j][s2] * v[s2];
                    next.values[s][j] = cmodel.r_sigma[s][j] + 0.9 * ev;
                    residual = std::max(residual,
                                        std::fabs(next.values[s][j] - q.values[s][j]));
                }
            q = next;
            if (prev_residual >= 0.0 && prev_residual > 1e-14)
                CHECK(residual <= 0.9 * prev_residual + 1e-12);
            prev_residual = residual;
        }
    }
    SUBCASE("greedy ties break toward the lowest grid index") {
        // symmetric rewards: make both arms identical so Q is symmetric
        TransitionDataset sym = ds;
        sym.transitions[1].r = 0.0;
        const NamdpModel msym = build_namdp(sym, spec, grid, 0.99);
        const SolveResult solved = value_iteration(msym);
        const auto& probs = solved.greedy.probs[0];
        const int j = static_cast<int>(
            std::max_element(probs.begin(), probs.end()) - probs.begin());
        // the mirrored point has equal Q; the lower index must win
        const int mirror = grid.size() - 1 - j;
        if (solved.q.values[0][j] == solved.q.values[0][mirror]) CHECK(j <= mirror);
        // repeated solves are bit-identical
        const SolveResult again = value_iteration(msym);
        CHECK(again.q.values == solved.q.values);
        CHECK(again.greedy.probs == solved.greedy.probs);
    }
    SUBCASE("non-convergence reports the residual") {
        CHECK_THROWS_AS(value_iteration(model, 1e-300, 1), std::runtime_error);
    }
}

TEST_CASE("policy evaluation") {
    const TransitionDataset ds = bandit();
    const ActionGrid grid = bandit_grid(101);
    const NoiseSpec spec(NoiseFamily::Gaussian, 0.5, ds.box);

    SUBCASE("gamma 0 gives R_sigma") {
        // gamma must be in (0,1); a tiny gamma with terminal data is exact
        const NamdpModel model = build_namdp(ds, spec, grid, 1e-10);
        const QGrid q = policy_evaluation(model, GridPolicy::uniform(1, grid.size()));
        for (int j = 0; j < grid.size(); ++j)
            CHECK(q.values[0][j] == doctest::Approx(model.r_sigma[0][j]));
    }
    SUBCASE("evaluating the greedy policy reproduces Q*") {
        const ChainData chain = gen_chain_env(4, 0.0, 0.25, 1.0, 0.9, 32, 5);
        const ActionGrid cgrid = ActionGrid::regular(chain.dataset.box, 51);
        const NamdpModel model = build_namdp(chain.dataset, spec, cgrid, 0.9);
        const SolveResult solved = value_iteration(model, 1e-12);
        const QGrid q_pi = policy_evaluation(model, solved.greedy, 1e-12);
        for (int s = 0; s < model.n_states(); ++s)
            for (int j = 0; j < cgrid.size(); ++j)
                CHECK(q_pi.values[s][j] ==
                      doctest::Approx(solved.q.values[s][j]).epsilon(1e-8));
    }
    SUBCASE("uniform policy on the bandit is the weight-averaged reward") {
        const NamdpModel model = build_namdp(ds, spec, grid, 0.99);
        const QGrid q = policy_evaluation(model, GridPolicy::uniform(1, grid.size()));
        for (int j = 0; j < grid.size(); ++j)
            CHECK(q.values[0][j] == doctest::Approx(model.r_sigma[0][j]).epsilon(1e-12));
    }
}

TEST_CASE("exact regression route equals dynamic programming") {
    SUBCASE("bandit: v_next vanishes so regression equals R_sigma") {
        const TransitionDataset ds = bandit();
        const ActionGrid grid = bandit_grid();
        const NoiseSpec spec(NoiseFamily::Gaussian, 0.5, ds.box);
        const NamdpModel model = build_namdp(ds, spec, grid, 0.99);
        const QGrid q = pani_exact_regression(ds, spec, grid, 0.99, {0.0});
        for (int j = 0; j < grid.size(); ++j)
            CHECK(q.values[0][j] == doctest::Approx(model.r_sigma[0][j]).epsilon(1e-14));
    }
    SUBCASE("chain: both routes agree to 1e-8 for uniform and greedy policies") {
        const VerifyReport report = verify_theorem1(1e-8);
        for (const CheckResult& c : report.checks) {
            CAPTURE(c.name);
            CHECK(c.pass);
        }
    }
    SUBCASE("on a dataset action in the sigma->0 limit the target is r + gamma v") {
        const ChainData chain = gen_chain_env(4, 0.0, 0.25, 1.0, 0.9, 16, 5);
        // pick a dataset action and make it the only grid point of interest
        const Transition& t = chain.dataset.transitions[0];
        const NoiseSpec spec(NoiseFamily::Gaussian, 1e-9, chain.dataset.box);
        ActionGrid grid;
        grid.box = chain.dataset.box;
        grid.spacing = 1.0;
        grid.points = {t.a};
        std::vector<double> v_next = {0.3, -0.2, 0.4};
        const QGrid q = pani_exact_regression(chain.dataset, spec, grid, 0.9, v_next);
        // the probe state is the first key (state 0)
        const double boot = t.done ? 0.0 : v_next[static_cast<int>(t.s2[0])];
        // duplicates of the same action at state 0 share the target only if
        // unique; tolerate the weighted mix by checking the no-duplicate case
        int duplicates = 0;
        for (const Transition& u : chain.dataset.transitions)
            if (u.s == t.s && std::fabs(u.a[0] - t.a[0]) < 1e-12) ++duplicates;
        if (duplicates == 1)
            CHECK(q.values[0][0] == doctest::Approx(t.r + 0.9 * boot).epsilon(1e-9));
    }
}

TEST_CASE("limit namdp") {
    const TransitionDataset ds = bandit();
    const ActionGrid grid = bandit_grid();

    SUBCASE("limit identity at the midpoint") {
        const NamdpModel limit = build_limit_namdp(ds, grid, 0.99);
        const int j0 = grid_index_of(grid, 0.0);
        // E_pC[Q] = 0.5, inf dist = 1 => Q(s, 0) = -0.5
        CHECK(limit.r_sigma[0][j0] == doctest::Approx(-0.5).epsilon(1e-9));
    }
    SUBCASE("zero penalty on dataset actions") {
        const NamdpModel limit = build_limit_namdp(ds, grid, 0.99);
        CHECK(limit.r_sigma[0][grid_index_of(grid, 1.0)] ==
              doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("small-sigma model converges to the limit") {
        const VerifyReport report = verify_limits(1e-4);
        for (const CheckResult& c : report.checks) {
            CAPTURE(c.name);
            CAPTURE(c.detail);
            CHECK(c.pass);
        }
    }
}

TEST_CASE("expected return") {
    SUBCASE("single absorbing state with unit reward") {
        FiniteMdp mdp;
        mdp.n_states = 1;
        mdp.n_actions = 1;
        mdp.gamma = 0.9;
        mdp.rewards = {{1.0}};
        mdp.transitions = {{{1.0}}};
        const ReturnResult r = expected_return(mdp, {{1.0}}, {1.0});
        CHECK(r.eta == doctest::Approx(1.0 / (1.0 - 0.9)).epsilon(1e-12));
        CHECK(r.visitation[0][0] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("deterministic two-state cycle") {
        FiniteMdp mdp;
        mdp.n_states = 2;
        mdp.n_actions = 1;
        mdp.gamma = 0.5;
        mdp.rewards = {{0.0}, {1.0}};
        mdp.transitions = {{{0.0, 1.0}}, {{1.0, 0.0}}};
        const ReturnResult r = expected_return(mdp, {{1.0}, {1.0}}, {1.0, 0.0});
        // sum gamma^(2k+1) = gamma / (1 - gamma^2) = 2/3
        CHECK(r.eta == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("visitation sums to one") {
        const FiniteMdp mdp = FiniteMdp::random(5, 4, 0.9, 4);
        std::vector<std::vector<double>> policy(
            mdp.n_states, std::vector<double>(mdp.n_actions, 1.0 / mdp.n_actions));
        const ReturnResult r =
            expected_return(mdp, policy, std::vector<double>(mdp.n_states, 1.0 / mdp.n_states));
        double total = 0.0;
        for (const auto& row : r.visitation)
            for (double x : row) total += x;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("error bound report") {
    SUBCASE("holds across 100 random tabular mdps") {
        const VerifyReport report = verify_bound(100, 0.9, 0.3);
        int passed = 0;
        for (const CheckResult& c : report.checks)
            if (c.pass) ++passed;
        CHECK(passed == 100);
    }
    SUBCASE("eps_m scales linearly in r_bar_max") {
        const FiniteMdp mdp = FiniteMdp::random(5, 4, 0.9, 0);
        const ActionBox box = ActionBox::symmetric(1.2, 1);
        const NoiseSpec spec(NoiseFamily::Gaussian, 0.3, box);
        const NamdpModel namdp =
            namdp_from_finite_mdp(mdp, spec, default_action_embedding(mdp.n_actions));
        std::vector<std::vector<double>> policy(
            mdp.n_states, std::vector<double>(mdp.n_actions, 1.0 / mdp.n_actions));
        const std::vector<double> start(mdp.n_states, 1.0 / mdp.n_states);
        const ErrorBoundReport r1 = error_bound_report(mdp, namdp, policy, start);

        // doubling all rewards doubles r_bar_max while TV is unchanged
        FiniteMdp scaled = mdp;
        NamdpModel namdp2 = namdp;
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a) {
                scaled.rewards[s][a] *= 2.0;
                namdp2.r_sigma[s][a] *= 2.0;
            }
        const ErrorBoundReport r2 = error_bound_report(scaled, namdp2, policy, start);
        CHECK(r2.r_bar_max == doctest::Approx(2.0 * r1.r_bar_max).epsilon(1e-12));
        CHECK(r2.eps_m == doctest::Approx(2.0 * r1.eps_m).epsilon(1e-12));
    }
    SUBCASE("identical models give zero everywhere") {
        // an mdp whose namdp equals itself: one action per state, so the
        // posterior is a point mass and the penalty at the action is zero
        FiniteMdp mdp;
        mdp.n_states = 2;
        mdp.n_actions = 1;
        mdp.gamma = 0.9;
        mdp.rewards = {{0.3}, {-0.7}};
        mdp.transitions = {{{0.2, 0.8}}, {{0.6, 0.4}}};
        const NoiseSpec spec(NoiseFamily::Gaussian, 0.2, ActionBox::symmetric(1.0, 1));
        const NamdpModel namdp = namdp_from_finite_mdp(mdp, spec, {0.0});
        const ErrorBoundReport r =
            error_bound_report(mdp, namdp, {{1.0}, {1.0}}, {0.5, 0.5});
        CHECK(r.lhs == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(r.eps_r == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(r.eps_m == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("bellman gap") {
    const TransitionDataset ds = bandit();
    const ActionGrid grid = bandit_grid();
    const NamdpModel limit = build_limit_namdp(ds, grid, 0.99);
    const SolveResult limit_solved = value_iteration(limit, 1e-12);

    SUBCASE("identical models have zero gap") {
        CHECK(bellman_gap(limit, limit, limit_solved.q) == 0.0);
    }
    SUBCASE("gap decreases along sigma and bounds the Q* difference") {
        double prev = std::numeric_limits<double>::infinity();
        for (double sigma : {0.5, 0.25, 0.1, 0.05, 0.01}) {
            const NoiseSpec spec(NoiseFamily::Gaussian, sigma, ds.box);
            const NamdpModel model = build_namdp(ds, spec, grid, 0.99);
            const double gap = bellman_gap(model, limit, limit_solved.q);
            CHECK(gap <= prev + 1e-12);
            prev = gap;

            // contraction argument: sup|Q*_sigma - Q*_limit| <= gap / (1 - gamma)
            const SolveResult sigma_solved = value_iteration(model, 1e-12);
            double qdiff = 0.0;
            for (int j = 0; j < grid.size(); ++j)
                qdiff = std::max(qdiff, std::fabs(sigma_solved.q.values[0][j] -
                                                  limit_solved.q.values[0][j]));
            CHECK(qdiff <= gap / (1.0 - 0.99) + 1e-8);
        }
    }
}

TEST_CASE("no-ood check") {
    const VerifyReport report = verify_noood(1e-2);
    for (const CheckResult& c : report.checks) {
        CAPTURE(c.name);
        CAPTURE(c.detail);
        CHECK(c.pass);
    }
    // the high-noise bandit case documents the mode shift: the greedy action
    // at sigma = 1.0 drifts toward the midpoint, away from both arms
    const TransitionDataset ds = bandit();
    const ActionGrid grid = bandit_grid();
    const NoiseSpec spec(NoiseFamily::Gaussian, 1.0, ds.box);
    const NamdpModel model = build_namdp(ds, spec, grid, 0.99);
    const NoOodResult r = no_ood_check(model, ds, 1e-4);
    CHECK(r.worst_sq_dist > 1e-4);
}

TEST_CASE("mode counting") {
    const TransitionDataset ds = bandit();

    auto modes_at = [&](NoiseFamily family, double sigma_sq, int points) {
        const NoiseSpec spec(family, std::sqrt(sigma_sq), ds.box);
        return count_modes(ds, spec, ActionGrid::regular(ds.box, points));
    };

    SUBCASE("gaussian merges at sigma = half separation") {
        CHECK(modes_at(NoiseFamily::Gaussian, 0.5, 301) == 2);
        CHECK(modes_at(NoiseFamily::Gaussian, 0.75, 301) == 2);
        CHECK(modes_at(NoiseFamily::Gaussian, 1.0, 301) == 1);
    }
    SUBCASE("laplace keeps both modes at every level") {
        CHECK(modes_at(NoiseFamily::Laplace, 0.5, 301) == 2);
        CHECK(modes_at(NoiseFamily::Laplace, 0.75, 301) == 2);
        CHECK(modes_at(NoiseFamily::Laplace, 1.0, 301) == 2);
    }
    SUBCASE("a 10x finer grid agrees on every configuration") {
        for (double s2 : {0.5, 0.75, 1.0}) {
            CHECK(modes_at(NoiseFamily::Gaussian, s2, 301) ==
                  modes_at(NoiseFamily::Gaussian, s2, 3001));
            CHECK(modes_at(NoiseFamily::Laplace, s2, 301) ==
                  modes_at(NoiseFamily::Laplace, s2, 3001));
        }
    }
}

TEST_CASE("duplicated transitions shift posterior weight") {
    TransitionDataset ds = bandit();
    ds.transitions.push_back(ds.transitions[1]); // two copies of the +1 arm
    const ActionGrid grid = bandit_grid(31);
    const NoiseSpec spec(NoiseFamily::Gaussian, 1.0, ds.box);
    const NamdpModel model = build_namdp(ds, spec, grid, 0.99);
    const int j0 = grid_index_of(grid, 0.0);
    // at the midpoint the duplicated arm carries 2/3 of the weight
    CHECK(model.weights[0][j0][0] == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    CHECK(model.weights[0][j0][1] + model.weights[0][j0][2] ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-10));
}
