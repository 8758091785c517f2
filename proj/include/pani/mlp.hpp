#pragma once

#include <cstdint>
#include <vector>

#include "pani/rng.hpp"

namespace pani {

// Dense network with rectified-linear hidden layers and optional per-layer
// layer normalization (affine, applied before the activation). Parameters
// live in one flat vector so Adam updates, Polyak averaging, and
// serialization work on a single contiguous block.
class Mlp {
  public:
    Mlp() = default;
    // layer_dims = {in, hidden..., out}
    Mlp(std::vector<int> layer_dims, bool layer_norm, Rng& rng);

    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    std::size_t n_params() const { return params_.size(); }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& params() { return params_; }
    const std::vector<int>& layer_dims() const { return dims_; }
    bool layer_norm() const { return layer_norm_; }

    std::vector<double> forward(const std::vector<double>& x) const;

    // Scratch space for a batched forward/backward pair.
    struct Workspace {
        std::vector<std::vector<double>> act;  // act[l][b * dim + i], post-activation
        std::vector<std::vector<double>> pre;  // pre-activation (post layer norm)
        std::vector<std::vector<double>> lin;  // linear output before layer norm
        std::vector<std::vector<double>> mu;   // per-sample layer-norm mean
        std::vector<std::vector<double>> is;   // per-sample 1/std
        int batch = 0;
    };

    // y[b * out + k]; keeps everything backward() needs in ws
    void forward_batch(const std::vector<double>& x, int batch,
                       Workspace& ws, std::vector<double>& y) const;

    // Accumulates parameter gradients into grad (size n_params; caller
    // zeroes) and, when dx is non-null, writes input gradients.
    void backward_batch(const Workspace& ws, const std::vector<double>& dy,
                        std::vector<double>& grad, std::vector<double>* dx) const;

  private:
    std::vector<int> dims_;
    bool layer_norm_ = false;
    std::vector<double> params_;
    // per-layer offsets into params_: weight block then bias, followed by
    // layer-norm gain/shift for hidden layers
    std::vector<std::size_t> w_off_, b_off_, g_off_, s_off_;

    int n_layers() const { return static_cast<int>(dims_.size()) - 1; }
    friend struct MlpIo;
};

constexpr double kLayerNormEps = 1e-5;

// Standard bias-corrected Adam over a flat parameter block.
class Adam {
  public:
    Adam() = default;
    explicit Adam(std::size_t n, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    void step(std::vector<double>& params, const std::vector<double>& grad);
    std::uint64_t steps_taken() const { return t_; }
    double lr() const { return lr_; }

  private:
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::uint64_t t_ = 0;
    std::vector<double> m_, v_;
};

// target = rate * online + (1 - rate) * target
void polyak_update(const std::vector<double>& online, double rate,
                   std::vector<double>& target);

// |tau - 1[x < 0]| * x^2
double expectile_loss(double x, double tau);
double expectile_loss_grad(double x, double tau); // d loss / d x

} // namespace pani
