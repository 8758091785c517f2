#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

// Central finite differences against an analytic gradient. Returns the
// worst relative error max_i |a_i - n_i| / max(1, |a_i|, |n_i|).
template <typename LossFn>
double max_rel_grad_error(std::vector<double>& params,
                          const std::vector<double>& analytic, LossFn loss,
                          double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double up = loss();
        params[i] = saved - h;
        const double down = loss();
        params[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom =
            std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
    return worst;
}
