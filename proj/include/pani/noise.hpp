#pragma once

#include <string>
#include <vector>

#include "pani/rng.hpp"

namespace pani {

// Axis-aligned action box with per-dimension bounds.
struct ActionBox {
    std::vector<double> low;
    std::vector<double> high;

    ActionBox() = default;
    ActionBox(std::vector<double> lo, std::vector<double> hi);

    // symmetric box [-half, half]^dim
    static ActionBox symmetric(double half, int dim);

    int dim() const { return static_cast<int>(low.size()); }
    double volume() const;
    bool contains(const std::vector<double>& a) const;
    std::vector<double> clip(const std::vector<double>& a) const;
};

enum class NoiseFamily { Gaussian, Laplace, UniformMix, Hybrid };

std::string family_name(NoiseFamily f);
NoiseFamily family_from_name(const std::string& name);

// Action-perturbation distribution q_sigma(a'|a).
//
// Gaussian:   a' = a + sigma * eps, eps ~ N(0, I).
// Laplace:    per-dimension Laplace with scale sigma/sqrt(2), so the
//             variance matches the Gaussian of the same sigma.
// UniformMix: with probability alpha(t) = min(t, 1) uniform over the box,
//             otherwise Gaussian at scale t (here t = sigma).
// Hybrid:     lambda ~ U(log sigma, 0), t = exp(lambda), then UniformMix
//             at level t. Requires sigma in (0, 1]; sigma sets the overall
//             level, not a standard deviation.
struct NoiseSpec {
    NoiseFamily family = NoiseFamily::Gaussian;
    double sigma = 0.1;
    ActionBox box;
    int quadrature_nodes = 64; // Hybrid density only

    NoiseSpec() = default;
    NoiseSpec(NoiseFamily f, double s, ActionBox b, int nodes = 64);

    void validate() const;

    // plain-text configuration block (key = value lines)
    std::string to_config_text() const;
    static NoiseSpec from_config_text(const std::string& text);
};

// Draws a' ~ q_sigma(.|a). Rejects non-finite a and a outside spec.box.
// Gaussian/Laplace draws are not clipped to the box.
std::vector<double> sample_noise(const std::vector<double>& a,
                                 const NoiseSpec& spec, Rng& rng);

// log q_sigma(a'|a). The Hybrid scale expectation is approximated with
// Gauss-Legendre quadrature over lambda in [log sigma, 0] using
// spec.quadrature_nodes nodes. Never returns NaN; if the base kernel of a
// mixture underflows, the uniform component alone survives.
double log_density(const NoiseSpec& spec, const std::vector<double>& a_prime,
                   const std::vector<double>& a);

// q_sigma(a|a1) / q_sigma(a|a2), computed in log space.
// Gaussian and Laplace families only.
double limit_ratio(const NoiseSpec& spec, const std::vector<double>& a,
                   const std::vector<double>& a1, const std::vector<double>& a2);

// Gauss-Legendre nodes/weights on [lo, hi]; exact for polynomials of
// degree 2n-1. Used for the Hybrid scale integral and in test oracles.
void gauss_legendre(int n, double lo, double hi, std::vector<double>& nodes,
                    std::vector<double>& weights);

} // namespace pani
