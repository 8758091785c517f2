#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner loops used by the MLP trainer and the NAMDP builder.
// Every kernel has a scalar reference implementation and, where the host
// CPU supports it, a SIMD variant (AVX2+FMA on x86-64, NEON on aarch64).
// The active implementation is picked once at startup and can be forced
// for equivalence testing.

namespace pani::kern {

enum class Impl { Scalar, Avx2, Neon };

struct Kernels {
    // sum_i x[i] * y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // y[i] = a * x[i] + b * y[i]
    void (*axpby)(double a, const double* x, double b, double* y, std::size_t n);
    // x[i] = max(x[i], 0)
    void (*relu)(double* x, std::size_t n);
    // dx[i] = pre[i] > 0 ? dy[i] : 0
    void (*relu_bwd)(const double* pre, const double* dy, double* dx, std::size_t n);
    // sum_i (x[i] - y[i])^2
    double (*sq_dist)(const double* x, const double* y, std::size_t n);
    // bias-corrected Adam update over a flat parameter block
    void (*adam_step)(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2);
};

// Kernel table for a specific implementation; Avx2/Neon fall back to
// scalar entries when the build or CPU lacks them.
const Kernels& table(Impl impl);

// Implementation selected at startup (best supported, overridable via
// the PANI_KERNEL_IMPL environment variable: "scalar", "avx2", "neon").
Impl active_impl();
const Kernels& active();

// Force an implementation (used by equivalence tests); returns false if
// the requested implementation is unavailable on this host.
bool set_active_impl(Impl impl);

bool impl_available(Impl impl);
std::string impl_name(Impl impl);

} // namespace pani::kern
