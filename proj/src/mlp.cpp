#include "pani/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "pani/kernels.hpp"

namespace pani {

Mlp::Mlp(std::vector<int> layer_dims, bool layer_norm, Rng& rng)
    : dims_(std::move(layer_dims)), layer_norm_(layer_norm) {
    if (dims_.size() < 2)
        throw std::invalid_argument("Mlp: need at least input and output dims");
    for (int d : dims_)
        if (d < 1) throw std::invalid_argument("Mlp: nonpositive layer dim");

    std::size_t total = 0;
    for (int l = 0; l < n_layers(); ++l) {
        w_off_.push_back(total);
        total += static_cast<std::size_t>(dims_[l + 1]) * dims_[l];
        b_off_.push_back(total);
        total += dims_[l + 1];
        const bool hidden = l < n_layers() - 1;
        g_off_.push_back(total);
        if (hidden && layer_norm_) total += dims_[l + 1];
        s_off_.push_back(total);
        if (hidden && layer_norm_) total += dims_[l + 1];
    }
    params_.assign(total, 0.0);

    // fan-in scaled uniform weights, zero biases, identity layer norm
    for (int l = 0; l < n_layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
        double* w = params_.data() + w_off_[l];
        for (int i = 0; i < dims_[l + 1] * dims_[l]; ++i)
            w[i] = rng.uniform(-bound, bound);
        if (l < n_layers() - 1 && layer_norm_) {
            double* g = params_.data() + g_off_[l];
            for (int i = 0; i < dims_[l + 1]; ++i) g[i] = 1.0;
        }
    }
}

void Mlp::forward_batch(const std::vector<double>& x, int batch, Workspace& ws,
                        std::vector<double>& y) const {
    if (static_cast<int>(x.size()) != batch * dims_.front())
        throw std::invalid_argument("Mlp::forward_batch: input size mismatch");
    const auto& k = kern::active();
    const int layers = n_layers();

    ws.batch = batch;
    ws.act.assign(layers + 1, {});
    ws.pre.assign(layers, {});
    ws.lin.assign(layers, {});
    ws.mu.assign(layers, {});
    ws.is.assign(layers, {});
    ws.act[0] = x;

    for (int l = 0; l < layers; ++l) {
        const int in = dims_[l];
        const int out = dims_[l + 1];
        const bool hidden = l < layers - 1;
        const double* w = params_.data() + w_off_[l];
        const double* b = params_.data() + b_off_[l];

        ws.lin[l].assign(static_cast<std::size_t>(batch) * out, 0.0);
        for (int bi = 0; bi < batch; ++bi) {
            const double* xin = ws.act[l].data() + static_cast<std::size_t>(bi) * in;
            double* lin = ws.lin[l].data() + static_cast<std::size_t>(bi) * out;
            for (int i = 0; i < out; ++i)
                lin[i] = b[i] + k.dot(w + static_cast<std::size_t>(i) * in, xin, in);
        }

        if (!hidden) {
            y = ws.lin[l];
            ws.pre[l] = ws.lin[l];
            return;
        }

        if (layer_norm_) {
            ws.mu[l].assign(batch, 0.0);
            ws.is[l].assign(batch, 0.0);
            ws.pre[l].assign(static_cast<std::size_t>(batch) * out, 0.0);
            const double* g = params_.data() + g_off_[l];
            const double* s = params_.data() + s_off_[l];
            for (int bi = 0; bi < batch; ++bi) {
                const double* lin = ws.lin[l].data() + static_cast<std::size_t>(bi) * out;
                double* pre = ws.pre[l].data() + static_cast<std::size_t>(bi) * out;
                double mu = 0.0;
                for (int i = 0; i < out; ++i) mu += lin[i];
                mu /= out;
                double var = 0.0;
                for (int i = 0; i < out; ++i) {
                    const double c = lin[i] - mu;
                    var += c * c;
                }
                var /= out;
                const double is = 1.0 / std::sqrt(var + kLayerNormEps);
                ws.mu[l][bi] = mu;
                ws.is[l][bi] = is;
                for (int i = 0; i < out; ++i)
                    pre[i] = g[i] * ((lin[i] - mu) * is) + s[i];
            }
        } else {
            ws.pre[l] = ws.lin[l];
        }

        ws.act[l + 1] = ws.pre[l];
        k.relu(ws.act[l + 1].data(), ws.act[l + 1].size());
    }
}

std::vector<double> Mlp::forward(const std::vector<double>& x) const {
    Workspace ws;
    std::vector<double> y;
    forward_batch(x, 1, ws, y);
    return y;
}

void Mlp::backward_batch(const Workspace& ws, const std::vector<double>& dy,
                         std::vector<double>& grad, std::vector<double>* dx) const {
    // an empty grad skips parameter gradients (input gradients only)
    const bool want_params = !grad.empty();
    if (want_params && grad.size() != params_.size())
        throw std::invalid_argument("Mlp::backward_batch: grad size mismatch");
    const auto& k = kern::active();
    const int layers = n_layers();
    const int batch = ws.batch;

    std::vector<double> delta = dy; // gradient wrt current layer's output
    std::vector<double> d_prev;
    for (int l = layers - 1; l >= 0; --l) {
        const int in = dims_[l];
        const int out = dims_[l + 1];
        const bool hidden = l < layers - 1;
        const double* w = params_.data() + w_off_[l];

        if (hidden) {
            // through the activation
            std::vector<double> masked(delta.size());
            k.relu_bwd(ws.pre[l].data(), delta.data(), masked.data(), delta.size());
            delta.swap(masked);

            if (layer_norm_) {
                const double* g = params_.data() + g_off_[l];
                double* dg = want_params ? grad.data() + g_off_[l] : nullptr;
                double* dsh = want_params ? grad.data() + s_off_[l] : nullptr;
                std::vector<double> d_lin(delta.size());
                for (int bi = 0; bi < batch; ++bi) {
                    const double* lin = ws.lin[l].data() + static_cast<std::size_t>(bi) * out;
                    const double* dp = delta.data() + static_cast<std::size_t>(bi) * out;
                    double* dl = d_lin.data() + static_cast<std::size_t>(bi) * out;
                    const double mu = ws.mu[l][bi];
                    const double is = ws.is[l][bi];
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (int i = 0; i < out; ++i) {
                        const double xhat = (lin[i] - mu) * is;
                        const double dxhat = dp[i] * g[i];
                        if (want_params) {
                            dg[i] += dp[i] * xhat;
                            dsh[i] += dp[i];
                        }
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                    }
                    for (int i = 0; i < out; ++i) {
                        const double xhat = (lin[i] - mu) * is;
                        const double dxhat = dp[i] * g[i];
                        dl[i] = is * (dxhat - sum_dxhat / out -
                                      xhat * sum_dxhat_xhat / out);
                    }
                }
                delta.swap(d_lin);
            }
        }

        // weight, bias, and input gradients of the linear map
        double* dw = want_params ? grad.data() + w_off_[l] : nullptr;
        double* db = want_params ? grad.data() + b_off_[l] : nullptr;
        const bool need_dx = l > 0 || dx != nullptr;
        if (need_dx) d_prev.assign(static_cast<std::size_t>(batch) * in, 0.0);
        for (int bi = 0; bi < batch; ++bi) {
            const double* xin = ws.act[l].data() + static_cast<std::size_t>(bi) * in;
            const double* dl = delta.data() + static_cast<std::size_t>(bi) * out;
            double* dxi = need_dx ? d_prev.data() + static_cast<std::size_t>(bi) * in
                                  : nullptr;
            for (int i = 0; i < out; ++i) {
                if (dl[i] != 0.0) {
                    if (want_params)
                        k.axpy(dl[i], xin, dw + static_cast<std::size_t>(i) * in, in);
                    if (dxi) k.axpy(dl[i], w + static_cast<std::size_t>(i) * in, dxi, in);
                }
                if (want_params) db[i] += dl[i];
            }
        }
        if (l > 0)
            delta.swap(d_prev);
        else if (dx)
            *dx = d_prev;
    }
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw std::invalid_argument("Adam::step: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    kern::active().adam_step(params.data(), grad.data(), m_.data(), v_.data(),
                             params.size(), lr_, beta1_, beta2_, eps_, bc1, bc2);
}

void polyak_update(const std::vector<double>& online, double rate,
                   std::vector<double>& target) {
    if (online.size() != target.size())
        throw std::invalid_argument("polyak_update: size mismatch");
    kern::active().axpby(rate, online.data(), 1.0 - rate, target.data(),
                         target.size());
}

double expectile_loss(double x, double tau) {
    const double w = std::fabs(tau - (x < 0.0 ? 1.0 : 0.0));
    return w * x * x;
}

double expectile_loss_grad(double x, double tau) {
    const double w = std::fabs(tau - (x < 0.0 ? 1.0 : 0.0));
    return 2.0 * w * x;
}

} // namespace pani
