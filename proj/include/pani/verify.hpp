#pragma once

#include <string>
#include <vector>

namespace pani {

// One machine-checked statement: the measured value, the bound it must
// satisfy, and whether it does.
struct CheckResult {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct VerifyReport {
    std::string suite;
    std::vector<CheckResult> checks;

    bool all_pass() const {
        for (const CheckResult& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

// Exact-regression route vs dynamic-programming route to Q^pi, on the
// two-arm bandit (grid 301) and the chain task (grid 101), for a uniform
// policy and for the greedy policy of Q*.
VerifyReport verify_theorem1(double tol = 1e-8);

// sigma -> 0 consistency: geometric-sigma models converge monotonically to
// the nearest-set limit model, the limit model's greedy actions sit on
// dataset actions, and the closed-form limit identity holds per grid point.
VerifyReport verify_limits(double tol = 1e-4);

// |eta - eta_bar| <= eps_r + eps_m over random tabular MDPs, both sides
// from exact linear solves.
VerifyReport verify_bound(int n_seeds = 100, double gamma = 0.9,
                          double sigma = 0.3);

// Greedy actions of the small-noise chain NAMDP stay on the dataset's
// action support.
VerifyReport verify_noood(double epsilon = 1e-2);

std::vector<VerifyReport> verify_all();

} // namespace pani
