#include "pani/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pani {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double logsumexp2(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double log_gaussian(const std::vector<double>& a_prime,
                    const std::vector<double>& a, double sigma) {
    const int d = static_cast<int>(a.size());
    double ss = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a_prime[i] - a[i];
        ss += diff * diff;
    }
    return -0.5 * d * std::log(2.0 * kPi * sigma * sigma) -
           ss / (2.0 * sigma * sigma);
}

double log_laplace(const std::vector<double>& a_prime,
                   const std::vector<double>& a, double sigma) {
    const double b = sigma / std::sqrt(2.0); // variance 2 b^2 = sigma^2
    const int d = static_cast<int>(a.size());
    double sum_abs = 0.0;
    for (int i = 0; i < d; ++i) sum_abs += std::fabs(a_prime[i] - a[i]);
    return -d * std::log(2.0 * b) - sum_abs / b;
}

// log of alpha(t)*U(box) + (1-alpha(t))*N(a, t^2 I) at a'
double log_uniform_mix(const std::vector<double>& a_prime,
                       const std::vector<double>& a, double t,
                       const ActionBox& box) {
    const double alpha = std::min(t, 1.0);
    const double log_uni =
        box.contains(a_prime) ? std::log(alpha) - std::log(box.volume()) : kNegInf;
    if (alpha >= 1.0) return log_uni;
    const double log_gauss = std::log1p(-alpha) + log_gaussian(a_prime, a, t);
    return logsumexp2(log_uni, log_gauss);
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::istringstream is(s);
    double x;
    while (is >> x) out.push_back(x);
    return out;
}

} // namespace

ActionBox::ActionBox(std::vector<double> lo, std::vector<double> hi)
    : low(std::move(lo)), high(std::move(hi)) {
    if (low.empty() || low.size() != high.size())
        throw std::invalid_argument("ActionBox: bound vectors must be nonempty and equally sized");
    for (std::size_t i = 0; i < low.size(); ++i) {
        if (!std::isfinite(low[i]) || !std::isfinite(high[i]) || !(low[i] < high[i]))
            throw std::invalid_argument("ActionBox: requires finite low[i] < high[i]");
    }
}

ActionBox ActionBox::symmetric(double half, int dim) {
    return ActionBox(std::vector<double>(dim, -half), std::vector<double>(dim, half));
}

double ActionBox::volume() const {
    double v = 1.0;
    for (std::size_t i = 0; i < low.size(); ++i) v *= high[i] - low[i];
    return v;
}

bool ActionBox::contains(const std::vector<double>& a) const {
    if (a.size() != low.size()) return false;
    for (std::size_t i = 0; i < low.size(); ++i)
        if (!(a[i] >= low[i] && a[i] <= high[i])) return false;
    return true;
}

std::vector<double> ActionBox::clip(const std::vector<double>& a) const {
    std::vector<double> out(a);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(out[i], low[i], high[i]);
    return out;
}

std::string family_name(NoiseFamily f) {
    switch (f) {
    case NoiseFamily::Gaussian: return "gaussian";
    case NoiseFamily::Laplace: return "laplace";
    case NoiseFamily::UniformMix: return "uniform_mix";
    case NoiseFamily::Hybrid: return "hybrid";
    }
    return "unknown";
}

NoiseFamily family_from_name(const std::string& name) {
    if (name == "gaussian") return NoiseFamily::Gaussian;
    if (name == "laplace") return NoiseFamily::Laplace;
    if (name == "uniform_mix") return NoiseFamily::UniformMix;
    if (name == "hybrid") return NoiseFamily::Hybrid;
    throw std::invalid_argument("unknown noise family: " + name);
}

NoiseSpec::NoiseSpec(NoiseFamily f, double s, ActionBox b, int nodes)
    : family(f), sigma(s), box(std::move(b)), quadrature_nodes(nodes) {
    validate();
}

void NoiseSpec::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw std::invalid_argument("NoiseSpec: sigma must be positive");
    if (family == NoiseFamily::Hybrid && sigma > 1.0)
        throw std::invalid_argument("NoiseSpec: Hybrid requires sigma in (0, 1]");
    if (quadrature_nodes < 1)
        throw std::invalid_argument("NoiseSpec: quadrature_nodes must be positive");
    if (box.dim() < 1)
        throw std::invalid_argument("NoiseSpec: box is unset");
}

std::string NoiseSpec::to_config_text() const {
    std::ostringstream os;
    os << "family = " << family_name(family) << "\n";
    os << "sigma = " << format_double(sigma) << "\n";
    os << "box_low =";
    for (double x : box.low) os << " " << format_double(x);
    os << "\nbox_high =";
    for (double x : box.high) os << " " << format_double(x);
    os << "\nquadrature_nodes = " << quadrature_nodes << "\n";
    return os.str();
}

NoiseSpec NoiseSpec::from_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("NoiseSpec config: missing '=' in line: " + line);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    for (const auto& [key, _] : kv) {
        if (key != "family" && key != "sigma" && key != "box_low" &&
            key != "box_high" && key != "quadrature_nodes")
            throw std::invalid_argument("NoiseSpec config: unknown key: " + key);
    }
    NoiseSpec spec;
    spec.family = family_from_name(kv.at("family"));
    spec.sigma = std::stod(kv.at("sigma"));
    spec.box = ActionBox(parse_double_list(kv.at("box_low")),
                         parse_double_list(kv.at("box_high")));
    if (kv.count("quadrature_nodes"))
        spec.quadrature_nodes = std::stoi(kv.at("quadrature_nodes"));
    spec.validate();
    return spec;
}

std::vector<double> sample_noise(const std::vector<double>& a,
                                 const NoiseSpec& spec, Rng& rng) {
    spec.validate();
    if (!all_finite(a))
        throw std::invalid_argument("sample_noise: non-finite action");
    if (!spec.box.contains(a))
        throw std::invalid_argument("sample_noise: action outside the box");

    const int d = spec.box.dim();
    std::vector<double> out(a);

    auto uniform_over_box = [&]() {
        for (int i = 0; i < d; ++i)
            out[i] = rng.uniform(spec.box.low[i], spec.box.high[i]);
    };
    auto gaussian_at = [&](double scale) {
        for (int i = 0; i < d; ++i) out[i] = a[i] + scale * rng.normal();
    };
    auto uniform_mix_at = [&](double t) {
        const double alpha = std::min(t, 1.0);
        if (rng.uniform01() < alpha)
            uniform_over_box();
        else
            gaussian_at(t);
    };

    switch (spec.family) {
    case NoiseFamily::Gaussian:
        gaussian_at(spec.sigma);
        break;
    case NoiseFamily::Laplace: {
        const double b = spec.sigma / std::sqrt(2.0);
        for (int i = 0; i < d; ++i) out[i] = a[i] + rng.laplace(b);
        break;
    }
    case NoiseFamily::UniformMix:
        uniform_mix_at(spec.sigma);
        break;
    case NoiseFamily::Hybrid: {
        const double lambda = rng.uniform(std::log(spec.sigma), 0.0);
        uniform_mix_at(std::exp(lambda));
        break;
    }
    }
    return out;
}

double log_density(const NoiseSpec& spec, const std::vector<double>& a_prime,
                   const std::vector<double>& a) {
    spec.validate();
    if (!all_finite(a_prime) || !all_finite(a))
        throw std::invalid_argument("log_density: non-finite action");
    if (!spec.box.contains(a))
        throw std::invalid_argument("log_density: conditioning action outside the box");

    switch (spec.family) {
    case NoiseFamily::Gaussian:
        return log_gaussian(a_prime, a, spec.sigma);
    case NoiseFamily::Laplace:
        return log_laplace(a_prime, a, spec.sigma);
    case NoiseFamily::UniformMix:
        return log_uniform_mix(a_prime, a, spec.sigma, spec.box);
    case NoiseFamily::Hybrid: {
        const double lo = std::log(spec.sigma);
        if (lo == 0.0) // sigma == 1: lambda is a point mass at 0
            return log_uniform_mix(a_prime, a, 1.0, spec.box);
        std::vector<double> nodes, weights;
        gauss_legendre(spec.quadrature_nodes, lo, 0.0, nodes, weights);
        // log E_lambda[q] = logsumexp_i(log w_i + log q_i) - log(0 - lo)
        double best = kNegInf;
        std::vector<double> terms(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            terms[i] = std::log(weights[i]) +
                       log_uniform_mix(a_prime, a, std::exp(nodes[i]), spec.box);
            best = std::max(best, terms[i]);
        }
        if (best == kNegInf) return kNegInf;
        double acc = 0.0;
        for (double t : terms) acc += std::exp(t - best);
        return best + std::log(acc) - std::log(-lo);
    }
    }
    return kNegInf;
}

double limit_ratio(const NoiseSpec& spec, const std::vector<double>& a,
                   const std::vector<double>& a1, const std::vector<double>& a2) {
    if (spec.family != NoiseFamily::Gaussian && spec.family != NoiseFamily::Laplace)
        throw std::invalid_argument("limit_ratio: Gaussian or Laplace family only");
    const double l1 = log_density(spec, a, a1);
    const double l2 = log_density(spec, a, a2);
    return std::exp(l1 - l2);
}

void gauss_legendre(int n, double lo, double hi, std::vector<double>& nodes,
                    std::vector<double>& weights) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        // Newton iteration on P_n from the Chebyshev-like initial guess
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 0; k < n; ++k) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k + 1.0) * x * p1 - k * p2) / (k + 1.0);
            }
            dp = n * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / dp;
            x -= dx;
            if (std::fabs(dx) < 1e-15) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    // map from [-1, 1] to [lo, hi]
    const double c = 0.5 * (lo + hi);
    const double h = 0.5 * (hi - lo);
    for (int i = 0; i < n; ++i) {
        nodes[i] = c - h * nodes[i];
        weights[i] *= h;
    }
}

} // namespace pani
