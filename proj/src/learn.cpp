#include "pani/learn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "pani/kernels.hpp"

namespace pani {

namespace {

constexpr double kPi = 3.14159265358979323846;

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

// log(1 - tanh(u)^2), stable for large |u|
double log_one_minus_tanh_sq(double u) {
    return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u));
}

std::vector<double> concat_batch(const std::vector<double>& x, int xd,
                                 const std::vector<double>& y, int yd, int batch) {
    std::vector<double> out(static_cast<std::size_t>(batch) * (xd + yd));
    for (int b = 0; b < batch; ++b) {
        std::memcpy(out.data() + static_cast<std::size_t>(b) * (xd + yd),
                    x.data() + static_cast<std::size_t>(b) * xd, xd * sizeof(double));
        std::memcpy(out.data() + static_cast<std::size_t>(b) * (xd + yd) + xd,
                    y.data() + static_cast<std::size_t>(b) * yd, yd * sizeof(double));
    }
    return out;
}

struct Squashed {
    std::vector<double> action; // center + half * tanh(u)
    std::vector<double> dadu;   // half * (1 - tanh(u)^2)
    std::vector<double> tanh_u;
};

Squashed squash(const std::vector<double>& u, const ActionBox& box, int batch) {
    const int ad = box.dim();
    Squashed out;
    out.action.resize(static_cast<std::size_t>(batch) * ad);
    out.dadu.resize(out.action.size());
    out.tanh_u.resize(out.action.size());
    for (int b = 0; b < batch; ++b)
        for (int d = 0; d < ad; ++d) {
            const std::size_t i = static_cast<std::size_t>(b) * ad + d;
            const double center = 0.5 * (box.low[d] + box.high[d]);
            const double half = 0.5 * (box.high[d] - box.low[d]);
            const double t = std::tanh(u[i]);
            out.tanh_u[i] = t;
            out.action[i] = center + half * t;
            out.dadu[i] = half * (1.0 - t * t);
        }
    return out;
}

// min of the two critics with input gradients routed through the
// per-sample argmin; param_grads stays empty so only dx is produced
struct CriticMin {
    std::vector<double> values;   // [batch]
    std::vector<double> d_action; // d qmin / d action coords, [batch * ad]
};

CriticMin critic_min_with_action_grad(const Mlp& q1, const Mlp& q2,
                                      const std::vector<double>& qin, int batch,
                                      int state_dim, int action_dim,
                                      const std::vector<double>& upstream) {
    Mlp::Workspace ws1, ws2;
    std::vector<double> v1, v2;
    q1.forward_batch(qin, batch, ws1, v1);
    q2.forward_batch(qin, batch, ws2, v2);

    std::vector<double> dy1(batch, 0.0), dy2(batch, 0.0);
    CriticMin out;
    out.values.resize(batch);
    for (int b = 0; b < batch; ++b) {
        if (v1[b] <= v2[b]) {
            out.values[b] = v1[b];
            dy1[b] = upstream[b];
        } else {
            out.values[b] = v2[b];
            dy2[b] = upstream[b];
        }
    }

    std::vector<double> empty_grad; // no parameter gradients wanted
    std::vector<double> dx1, dx2;
    q1.backward_batch(ws1, dy1, empty_grad, &dx1);
    q2.backward_batch(ws2, dy2, empty_grad, &dx2);

    const int in = state_dim + action_dim;
    out.d_action.assign(static_cast<std::size_t>(batch) * action_dim, 0.0);
    for (int b = 0; b < batch; ++b)
        for (int d = 0; d < action_dim; ++d)
            out.d_action[static_cast<std::size_t>(b) * action_dim + d] =
                dx1[static_cast<std::size_t>(b) * in + state_dim + d] +
                dx2[static_cast<std::size_t>(b) * in + state_dim + d];
    return out;
}

double critic_mse_step(Mlp& critic, Adam& opt, const std::vector<double>& qin,
                       int batch, const std::vector<double>& target) {
    const LossGrad lg = critic_fit_loss(critic, qin, batch, target);
    opt.step(critic.params(), lg.grad);
    return lg.loss;
}

} // namespace

LossGrad critic_fit_loss(const Mlp& critic, const std::vector<double>& qin,
                         int batch, const std::vector<double>& target) {
    Mlp::Workspace ws;
    std::vector<double> pred;
    critic.forward_batch(qin, batch, ws, pred);
    LossGrad out;
    std::vector<double> dy(batch);
    for (int b = 0; b < batch; ++b) {
        const double err = pred[b] - target[b];
        out.loss += err * err;
        dy[b] = 2.0 * err / batch;
    }
    out.loss /= batch;
    out.grad.assign(critic.n_params(), 0.0);
    critic.backward_batch(ws, dy, out.grad, nullptr);
    return out;
}

std::string algorithm_name(Algorithm a) {
    return a == Algorithm::Td3An ? "td3an" : "iqlan";
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "td3an") return Algorithm::Td3An;
    if (name == "iqlan") return Algorithm::IqlAn;
    throw std::invalid_argument("unknown algorithm: " + name);
}

void TrainConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("TrainConfig: gamma must be in (0, 1)");
    if (!(polyak > 0.0 && polyak <= 1.0))
        throw std::invalid_argument("TrainConfig: polyak must be in (0, 1]");
    if (!(expectile_tau > 0.0 && expectile_tau < 1.0))
        throw std::invalid_argument("TrainConfig: expectile_tau must be in (0, 1)");
    if (sigma < 0.0) throw std::invalid_argument("TrainConfig: sigma must be >= 0");
    if (penalty_coef < 0.0)
        throw std::invalid_argument("TrainConfig: penalty_coef must be >= 0");
    if (batch < 1 || steps < 0 || policy_delay < 1)
        throw std::invalid_argument("TrainConfig: bad batch/steps/policy_delay");
}

std::vector<double> Agent::act(const std::vector<double>& state) const {
    const std::vector<double> head = actor.forward(state);
    std::vector<double> u(head.begin(), head.begin() + action_dim);
    return squash(u, box, 1).action;
}

Agent make_agent(int state_dim, int action_dim, const ActionBox& box,
                 const TrainConfig& config) {
    config.validate();
    Agent agent;
    agent.config = config;
    agent.state_dim = state_dim;
    agent.action_dim = action_dim;
    agent.box = box;

    Rng rng(config.seed ^ 0xa5a5a5a5a5a5a5a5ULL);
    std::vector<int> actor_dims = {state_dim};
    for (int h : config.hidden_dims) actor_dims.push_back(h);
    actor_dims.push_back(config.stochastic_actor ? 2 * action_dim : action_dim);
    std::vector<int> critic_dims = {state_dim + action_dim};
    for (int h : config.hidden_dims) critic_dims.push_back(h);
    critic_dims.push_back(1);

    agent.actor = Mlp(actor_dims, config.layer_norm, rng);
    agent.q1 = Mlp(critic_dims, config.layer_norm, rng);
    agent.q2 = Mlp(critic_dims, config.layer_norm, rng);
    agent.actor_target = agent.actor;
    agent.q1_target = agent.q1;
    agent.q2_target = agent.q2;
    if (config.algorithm == Algorithm::IqlAn) {
        std::vector<int> value_dims = {state_dim};
        for (int h : config.hidden_dims) value_dims.push_back(h);
        value_dims.push_back(1);
        agent.value = Mlp(value_dims, config.layer_norm, rng);
        agent.value_opt = Adam(agent.value.n_params(), config.lr);
    }
    agent.actor_opt = Adam(agent.actor.n_params(), config.lr);
    agent.q1_opt = Adam(agent.q1.n_params(), config.lr);
    agent.q2_opt = Adam(agent.q2.n_params(), config.lr);
    return agent;
}

Batch sample_batch(const TransitionDataset& dataset, int batch_size, Rng& rng) {
    const int sd = dataset.state_dim;
    const int ad = dataset.action_dim;
    Batch batch;
    batch.size = batch_size;
    batch.s.resize(static_cast<std::size_t>(batch_size) * sd);
    batch.a.resize(static_cast<std::size_t>(batch_size) * ad);
    batch.s2.resize(static_cast<std::size_t>(batch_size) * sd);
    batch.r.resize(batch_size);
    batch.done.resize(batch_size);
    for (int b = 0; b < batch_size; ++b) {
        const Transition& t =
            dataset.transitions[rng.uniform_index(dataset.transitions.size())];
        std::copy(t.s.begin(), t.s.end(), batch.s.begin() + static_cast<std::size_t>(b) * sd);
        std::copy(t.a.begin(), t.a.end(), batch.a.begin() + static_cast<std::size_t>(b) * ad);
        std::copy(t.s2.begin(), t.s2.end(), batch.s2.begin() + static_cast<std::size_t>(b) * sd);
        batch.r[b] = t.r;
        batch.done[b] = t.done ? 1 : 0;
    }
    return batch;
}

void apply_action_noise(Batch& batch, const TrainConfig& config,
                        const ActionBox& box, Rng& rng) {
    const int ad = box.dim();
    batch.penalty.assign(batch.size, 0.0);
    if (config.sigma == 0.0) {
        batch.a_prime = batch.a;
        return;
    }
    const NoiseSpec spec(config.noise_family, config.sigma, box,
                         config.quadrature_nodes);
    batch.a_prime.resize(batch.a.size());
    std::vector<double> a(ad);
    for (int b = 0; b < batch.size; ++b) {
        const std::size_t off = static_cast<std::size_t>(b) * ad;
        std::copy(batch.a.begin() + off, batch.a.begin() + off + ad, a.begin());
        const std::vector<double> noised = sample_noise(a, spec, rng);
        std::copy(noised.begin(), noised.end(),
                  batch.a_prime.begin() + static_cast<std::size_t>(b) * ad);
        batch.penalty[b] = config.penalty_coef *
                           kern::active().sq_dist(a.data(), noised.data(), ad);
    }
}

double td3an_critic_update(Agent& agent, const Batch& batch, Rng& rng) {
    const TrainConfig& cfg = agent.config;
    const int b = batch.size;
    const int sd = agent.state_dim;
    const int ad = agent.action_dim;

    // target action: squashed target actor plus clipped policy noise
    Mlp::Workspace ws;
    std::vector<double> u;
    agent.actor_target.forward_batch(batch.s2, b, ws, u);
    std::vector<double> head(static_cast<std::size_t>(b) * ad);
    for (int i = 0; i < b; ++i)
        std::copy(u.begin() + static_cast<std::size_t>(i) * agent.actor.output_dim(),
                  u.begin() + static_cast<std::size_t>(i) * agent.actor.output_dim() + ad,
                  head.begin() + static_cast<std::size_t>(i) * ad);
    std::vector<double> ta = squash(head, agent.box, b).action;
    for (int i = 0; i < b; ++i)
        for (int d = 0; d < ad; ++d) {
            const std::size_t k = static_cast<std::size_t>(i) * ad + d;
            const double eps = std::clamp(cfg.policy_noise * rng.normal(),
                                          -cfg.noise_clip, cfg.noise_clip);
            ta[k] = std::clamp(ta[k] + eps, agent.box.low[d], agent.box.high[d]);
        }

    const std::vector<double> qin2 = concat_batch(batch.s2, sd, ta, ad, b);
    Mlp::Workspace ws1, ws2;
    std::vector<double> q1t, q2t;
    agent.q1_target.forward_batch(qin2, b, ws1, q1t);
    agent.q2_target.forward_batch(qin2, b, ws2, q2t);

    std::vector<double> target(b);
    for (int i = 0; i < b; ++i) {
        const double boot = batch.done[i] ? 0.0 : std::min(q1t[i], q2t[i]);
        target[i] = batch.r[i] - batch.penalty[i] + cfg.gamma * boot;
    }

    const std::vector<double> qin = concat_batch(batch.s, sd, batch.a_prime, ad, b);
    const double l1 = critic_mse_step(agent.q1, agent.q1_opt, qin, b, target);
    const double l2 = critic_mse_step(agent.q2, agent.q2_opt, qin, b, target);
    return l1 + l2;
}

LossGrad td3an_actor_loss(const Agent& agent, const Batch& batch) {
    const TrainConfig& cfg = agent.config;
    const int b = batch.size;
    const int sd = agent.state_dim;
    const int ad = agent.action_dim;

    Mlp::Workspace ws;
    std::vector<double> u;
    agent.actor.forward_batch(batch.s, b, ws, u);
    const Squashed sq = squash(u, agent.box, b);

    const std::vector<double> qin = concat_batch(batch.s, sd, sq.action, ad, b);
    std::vector<double> upstream(b, -1.0 / b);
    const CriticMin cm = critic_min_with_action_grad(
        agent.q1_target, agent.q2_target, qin, b, sd, ad, upstream);

    LossGrad out;
    std::vector<double> du(static_cast<std::size_t>(b) * ad);
    for (int i = 0; i < b; ++i) {
        out.loss -= cm.values[i];
        double bc = 0.0;
        for (int d = 0; d < ad; ++d) {
            const std::size_t k = static_cast<std::size_t>(i) * ad + d;
            const double diff = sq.action[k] - batch.a[k];
            bc += diff * diff;
            du[k] = (cm.d_action[k] + 2.0 * cfg.bc_alpha * diff / b) * sq.dadu[k];
        }
        out.loss += cfg.bc_alpha * bc;
    }
    out.loss /= b;

    out.grad.assign(agent.actor.n_params(), 0.0);
    agent.actor.backward_batch(ws, du, out.grad, nullptr);
    return out;
}

double td3an_actor_update(Agent& agent, const Batch& batch) {
    const LossGrad lg = td3an_actor_loss(agent, batch);
    agent.actor_opt.step(agent.actor.params(), lg.grad);
    return lg.loss;
}

LossGrad iqlan_value_loss(const Agent& agent, const Batch& batch) {
    const TrainConfig& cfg = agent.config;
    const int b = batch.size;
    const int sd = agent.state_dim;
    const int ad = agent.action_dim;

    // expectile regression toward the target critics at dataset actions
    const std::vector<double> qin = concat_batch(batch.s, sd, batch.a, ad, b);
    Mlp::Workspace wsq;
    std::vector<double> q1t, q2t;
    agent.q1_target.forward_batch(qin, b, wsq, q1t);
    agent.q2_target.forward_batch(qin, b, wsq, q2t);

    Mlp::Workspace ws;
    std::vector<double> v;
    agent.value.forward_batch(batch.s, b, ws, v);

    LossGrad out;
    std::vector<double> dv(b);
    for (int i = 0; i < b; ++i) {
        const double x = std::min(q1t[i], q2t[i]) - v[i];
        out.loss += expectile_loss(x, cfg.expectile_tau);
        dv[i] = -expectile_loss_grad(x, cfg.expectile_tau) / b;
    }
    out.loss /= b;

    out.grad.assign(agent.value.n_params(), 0.0);
    agent.value.backward_batch(ws, dv, out.grad, nullptr);
    return out;
}

double iqlan_value_update(Agent& agent, const Batch& batch) {
    const LossGrad lg = iqlan_value_loss(agent, batch);
    agent.value_opt.step(agent.value.params(), lg.grad);
    return lg.loss;
}

double iqlan_critic_update(Agent& agent, const Batch& batch) {
    const TrainConfig& cfg = agent.config;
    const int b = batch.size;
    const int sd = agent.state_dim;
    const int ad = agent.action_dim;

    Mlp::Workspace ws;
    std::vector<double> v2;
    agent.value.forward_batch(batch.s2, b, ws, v2);
    std::vector<double> target(b);
    for (int i = 0; i < b; ++i) {
        const double boot = batch.done[i] ? 0.0 : v2[i];
        target[i] = batch.r[i] - batch.penalty[i] + cfg.gamma * boot;
    }

    const std::vector<double> qin = concat_batch(batch.s, sd, batch.a_prime, ad, b);
    const double l1 = critic_mse_step(agent.q1, agent.q1_opt, qin, b, target);
    const double l2 = critic_mse_step(agent.q2, agent.q2_opt, qin, b, target);
    return l1 + l2;
}

LossGrad iqlan_actor_loss(const Agent& agent, const Batch& batch,
                          const std::vector<double>* eps_in) {
    const TrainConfig& cfg = agent.config;
    const int b = batch.size;
    const int sd = agent.state_dim;
    const int ad = agent.action_dim;

    Mlp::Workspace ws;
    std::vector<double> head;
    agent.actor.forward_batch(batch.s, b, ws, head);

    if (!cfg.stochastic_actor) {
        const Squashed sq = squash(head, agent.box, b);
        const std::vector<double> qin = concat_batch(batch.s, sd, sq.action, ad, b);
        std::vector<double> upstream(b, -1.0 / b);
        const CriticMin cm = critic_min_with_action_grad(
            agent.q1_target, agent.q2_target, qin, b, sd, ad, upstream);
        LossGrad out;
        std::vector<double> du(static_cast<std::size_t>(b) * ad);
        for (int i = 0; i < b; ++i) {
            out.loss -= cm.values[i];
            for (int d = 0; d < ad; ++d) {
                const std::size_t k = static_cast<std::size_t>(i) * ad + d;
                du[k] = cm.d_action[k] * sq.dadu[k];
            }
        }
        out.loss /= b;
        out.grad.assign(agent.actor.n_params(), 0.0);
        agent.actor.backward_batch(ws, du, out.grad, nullptr);
        return out;
    }

    // tanh-Gaussian policy: reparameterized sample, entropy-regularized
    if (!eps_in || eps_in->size() != static_cast<std::size_t>(b) * ad)
        throw std::invalid_argument("iqlan_actor_loss: stochastic actor needs eps draws");
    const double alpha = cfg.actor_entropy_alpha;
    const int out_dim = 2 * ad;
    std::vector<double> mu(static_cast<std::size_t>(b) * ad);
    std::vector<double> log_std(mu.size()), u(mu.size());
    std::vector<std::uint8_t> clamped(mu.size());
    for (int i = 0; i < b; ++i)
        for (int d = 0; d < ad; ++d) {
            const std::size_t k = static_cast<std::size_t>(i) * ad + d;
            mu[k] = head[static_cast<std::size_t>(i) * out_dim + d];
            const double raw = head[static_cast<std::size_t>(i) * out_dim + ad + d];
            clamped[k] = raw < kLogStdMin || raw > kLogStdMax;
            log_std[k] = std::clamp(raw, kLogStdMin, kLogStdMax);
            u[k] = mu[k] + std::exp(log_std[k]) * (*eps_in)[k];
        }
    const Squashed sq = squash(u, agent.box, b);

    const std::vector<double> qin = concat_batch(batch.s, sd, sq.action, ad, b);
    std::vector<double> upstream(b, -1.0 / b);
    const CriticMin cm = critic_min_with_action_grad(
        agent.q1_target, agent.q2_target, qin, b, sd, ad, upstream);

    LossGrad out;
    std::vector<double> dhead(static_cast<std::size_t>(b) * out_dim, 0.0);
    for (int i = 0; i < b; ++i) {
        double logp = 0.0;
        for (int d = 0; d < ad; ++d) {
            const std::size_t k = static_cast<std::size_t>(i) * ad + d;
            const double eps = (*eps_in)[k];
            const double half = 0.5 * (agent.box.high[d] - agent.box.low[d]);
            logp += -0.5 * std::log(2.0 * kPi) - log_std[k] - 0.5 * eps * eps -
                    std::log(half) - log_one_minus_tanh_sq(u[k]);

            // d loss / d u at fixed eps, including the log pi term
            const double t = sq.tanh_u[k];
            const double dq_du = cm.d_action[k] * sq.dadu[k];
            const double dlogp_du = 2.0 * t;
            const double dmu = dq_du + alpha * dlogp_du / b;
            dhead[static_cast<std::size_t>(i) * out_dim + d] = dmu;
            if (!clamped[k]) {
                const double du_dls = std::exp(log_std[k]) * eps;
                dhead[static_cast<std::size_t>(i) * out_dim + ad + d] =
                    dmu * du_dls + alpha * (-1.0) / b;
            }
        }
        out.loss += -cm.values[i] + alpha * logp;
    }
    out.loss /= b;

    out.grad.assign(agent.actor.n_params(), 0.0);
    agent.actor.backward_batch(ws, dhead, out.grad, nullptr);
    return out;
}

double iqlan_actor_update(Agent& agent, const Batch& batch, Rng& rng) {
    LossGrad lg;
    if (agent.config.stochastic_actor) {
        std::vector<double> eps(static_cast<std::size_t>(batch.size) *
                                agent.action_dim);
        for (double& e : eps) e = rng.normal();
        lg = iqlan_actor_loss(agent, batch, &eps);
    } else {
        lg = iqlan_actor_loss(agent, batch, nullptr);
    }
    agent.actor_opt.step(agent.actor.params(), lg.grad);
    return lg.loss;
}

void update_targets(Agent& agent) {
    const double rate = agent.config.polyak;
    polyak_update(agent.q1.params(), rate, agent.q1_target.params());
    polyak_update(agent.q2.params(), rate, agent.q2_target.params());
    polyak_update(agent.actor.params(), rate, agent.actor_target.params());
}

double tanh_gaussian_log_density(const std::vector<double>& mu,
                                 const std::vector<double>& log_std,
                                 const std::vector<double>& action,
                                 const ActionBox& box) {
    double logp = 0.0;
    for (int d = 0; d < box.dim(); ++d) {
        const double center = 0.5 * (box.low[d] + box.high[d]);
        const double half = 0.5 * (box.high[d] - box.low[d]);
        const double z = (action[d] - center) / half;
        if (!(z > -1.0 && z < 1.0))
            return -std::numeric_limits<double>::infinity();
        const double u = std::atanh(z);
        const double ls = std::clamp(log_std[d], kLogStdMin, kLogStdMax);
        const double sigma = std::exp(ls);
        const double e = (u - mu[d]) / sigma;
        logp += -0.5 * std::log(2.0 * kPi) - ls - 0.5 * e * e;
        logp -= std::log(half) + log_one_minus_tanh_sq(u);
    }
    return logp;
}

TrainResult train(const TransitionDataset& dataset, const TrainConfig& config,
                  const TrainOptions& options) {
    dataset.validate();
    config.validate();
    Rng rng(config.seed);

    TrainResult result;
    result.agent = make_agent(dataset.state_dim, dataset.action_dim, dataset.box, config);
    Agent& agent = result.agent;

    std::ofstream metrics_file;
    if (!options.metrics_path.empty()) {
        metrics_file.open(options.metrics_path);
        if (!metrics_file)
            throw std::runtime_error("train: cannot open metrics file " +
                                     options.metrics_path);
        metrics_file << "# config_hash=" << options.config_hash << "\n";
        metrics_file << "step,critic_loss,actor_loss,value_loss,eval_return,"
                        "ood_probability\n";
        metrics_file.flush();
    }

    double critic_sum = 0.0, actor_sum = 0.0, value_sum = 0.0;
    int critic_n = 0, actor_n = 0, value_n = 0;

    auto emit = [&](int step) {
        MetricsRow row;
        row.step = step;
        row.critic_loss = critic_n ? critic_sum / critic_n : 0.0;
        if (actor_n) row.actor_loss = actor_sum / actor_n;
        if (value_n) row.value_loss = value_sum / value_n;
        if (options.eval_env) {
            Rng eval_rng(config.seed ^ 0x5eed5eed5eed5eedULL);
            row.eval_return = evaluate_policy(*options.eval_env, agent,
                                              options.eval_episodes, eval_rng)
                                  .mean_discounted;
        }
        if (options.ood_samples > 0) {
            Rng ood_rng(config.seed ^ 0x00d00d00d00d00dULL);
            row.ood_probability =
                ood_overestimation_probability(agent, dataset, options.ood_samples,
                                               ood_rng)
                    .probability;
        }
        result.metrics.push_back(row);
        if (metrics_file) {
            auto cell = [](double x) {
                return std::isnan(x) ? std::string() : std::to_string(x);
            };
            metrics_file << row.step << "," << cell(row.critic_loss) << ","
                         << cell(row.actor_loss) << "," << cell(row.value_loss)
                         << "," << cell(row.eval_return) << ","
                         << cell(row.ood_probability) << "\n";
            metrics_file.flush();
        }
        critic_sum = actor_sum = value_sum = 0.0;
        critic_n = actor_n = value_n = 0;
    };

    for (int t = 1; t <= config.steps; ++t) {
        Batch batch = sample_batch(dataset, config.batch, rng);
        apply_action_noise(batch, config, dataset.box, rng);

        double critic_loss = 0.0;
        if (config.algorithm == Algorithm::Td3An) {
            if (options.trace) options.trace("critic", t);
            critic_loss = td3an_critic_update(agent, batch, rng);
            if (t % config.policy_delay == 0) {
                if (options.trace) options.trace("actor", t);
                actor_sum += td3an_actor_update(agent, batch);
                ++actor_n;
                if (options.trace) options.trace("targets", t);
                update_targets(agent);
            }
        } else {
            if (options.trace) options.trace("value", t);
            const double value_loss = iqlan_value_update(agent, batch);
            value_sum += value_loss;
            ++value_n;
            if (options.trace) options.trace("critic", t);
            critic_loss = iqlan_critic_update(agent, batch);
            if (options.trace) options.trace("actor", t);
            actor_sum += iqlan_actor_update(agent, batch, rng);
            ++actor_n;
            if (options.trace) options.trace("targets", t);
            update_targets(agent);
            if (!std::isfinite(value_sum))
                throw std::runtime_error("train: non-finite value loss at step " +
                                         std::to_string(t));
        }
        critic_sum += critic_loss;
        ++critic_n;
        if (!std::isfinite(critic_sum) || !std::isfinite(actor_sum))
            throw std::runtime_error("train: non-finite loss at step " +
                                     std::to_string(t));

        if (t % config.metrics_interval == 0 || t == config.steps) emit(t);
    }
    return result;
}

OodEstimate ood_overestimation_probability(const Agent& agent,
                                           const TransitionDataset& dataset,
                                           int n_samples, Rng& rng) {
    if (n_samples < 1)
        throw std::invalid_argument("ood_overestimation_probability: n_samples >= 1");
    const int sd = agent.state_dim;
    const int ad = agent.action_dim;
    const int chunk = 1024;

    long hits = 0;
    int remaining = n_samples;
    while (remaining > 0) {
        const int b = std::min(chunk, remaining);
        remaining -= b;
        std::vector<double> s(static_cast<std::size_t>(b) * sd);
        std::vector<double> a(static_cast<std::size_t>(b) * ad);
        std::vector<double> ap(static_cast<std::size_t>(b) * ad);
        for (int i = 0; i < b; ++i) {
            const Transition& t =
                dataset.transitions[rng.uniform_index(dataset.transitions.size())];
            std::copy(t.s.begin(), t.s.end(), s.begin() + static_cast<std::size_t>(i) * sd);
            std::copy(t.a.begin(), t.a.end(), a.begin() + static_cast<std::size_t>(i) * ad);
            for (int d = 0; d < ad; ++d)
                ap[static_cast<std::size_t>(i) * ad + d] =
                    rng.uniform(agent.box.low[d], agent.box.high[d]);
        }
        Mlp::Workspace ws;
        std::vector<double> q1a, q2a, q1p, q2p;
        const std::vector<double> qin_a = concat_batch(s, sd, a, ad, b);
        const std::vector<double> qin_p = concat_batch(s, sd, ap, ad, b);
        agent.q1.forward_batch(qin_a, b, ws, q1a);
        agent.q2.forward_batch(qin_a, b, ws, q2a);
        agent.q1.forward_batch(qin_p, b, ws, q1p);
        agent.q2.forward_batch(qin_p, b, ws, q2p);
        for (int i = 0; i < b; ++i)
            if (std::min(q1p[i], q2p[i]) > std::min(q1a[i], q2a[i])) ++hits;
    }

    OodEstimate est;
    est.n_samples = n_samples;
    est.probability = static_cast<double>(hits) / n_samples;
    est.ci_half_width =
        1.96 * std::sqrt(est.probability * (1.0 - est.probability) / n_samples);
    return est;
}

namespace {

int snap_to_grid(const ActionGrid& grid, const std::vector<double>& a) {
    const int dim = grid.box.dim();
    const int ppd = static_cast<int>(
        std::lround(std::pow(static_cast<double>(grid.size()), 1.0 / dim)));
    int flat = 0;
    for (int d = 0; d < dim; ++d) {
        const double step = (grid.box.high[d] - grid.box.low[d]) / (ppd - 1);
        int idx = static_cast<int>(std::lround((a[d] - grid.box.low[d]) / step));
        idx = std::clamp(idx, 0, ppd - 1);
        flat = flat * ppd + idx;
    }
    return flat;
}

} // namespace

OodEstimate ood_overestimation_probability(const QGrid& q, const NamdpModel& model,
                                           const TransitionDataset& dataset,
                                           int n_samples, Rng& rng) {
    if (n_samples < 1)
        throw std::invalid_argument("ood_overestimation_probability: n_samples >= 1");
    long hits = 0;
    const int ad = dataset.action_dim;
    std::vector<double> ap(ad);
    for (int i = 0; i < n_samples; ++i) {
        const Transition& t =
            dataset.transitions[rng.uniform_index(dataset.transitions.size())];
        const int s = model.state_index(state_key(t.s, dataset.key_mode));
        if (s < 0)
            throw std::runtime_error("ood_overestimation_probability: state not in model");
        for (int d = 0; d < ad; ++d)
            ap[d] = rng.uniform(model.grid.box.low[d], model.grid.box.high[d]);
        const int ja = snap_to_grid(model.grid, t.a);
        const int jp = snap_to_grid(model.grid, ap);
        if (q.values[s][jp] > q.values[s][ja]) ++hits;
    }
    OodEstimate est;
    est.n_samples = n_samples;
    est.probability = static_cast<double>(hits) / n_samples;
    est.ci_half_width =
        1.96 * std::sqrt(est.probability * (1.0 - est.probability) / n_samples);
    return est;
}

std::vector<double> q_landscape(const Agent& agent, const std::vector<double>& state,
                                const ActionGrid& grid) {
    const int sd = agent.state_dim;
    const int ad = agent.action_dim;
    const int n = grid.size();
    std::vector<double> qin(static_cast<std::size_t>(n) * (sd + ad));
    for (int j = 0; j < n; ++j) {
        std::copy(state.begin(), state.end(),
                  qin.begin() + static_cast<std::size_t>(j) * (sd + ad));
        std::copy(grid.points[j].begin(), grid.points[j].end(),
                  qin.begin() + static_cast<std::size_t>(j) * (sd + ad) + sd);
    }
    Mlp::Workspace ws;
    std::vector<double> v1, v2;
    agent.q1.forward_batch(qin, n, ws, v1);
    agent.q2.forward_batch(qin, n, ws, v2);
    std::vector<double> out(n);
    for (int j = 0; j < n; ++j) out[j] = std::min(v1[j], v2[j]);
    return out;
}

EvalResult evaluate_policy(const ChainEnv& env, const Agent& agent, int episodes,
                           Rng& rng, int max_steps) {
    (void)rng; // the deterministic actor consumes no randomness
    EvalResult out;
    out.episodes = episodes;
    for (int ep = 0; ep < episodes; ++ep) {
        int state = 0;
        double discounted = 0.0, undiscounted = 0.0, g = 1.0;
        for (int t = 0; t < max_steps; ++t) {
            const std::vector<double> a = agent.act({static_cast<double>(state)});
            const ChainEnv::Step st = env.step(state, a[0]);
            discounted += g * st.reward;
            undiscounted += st.reward;
            g *= env.gamma;
            state = st.next_state;
            if (st.done) break;
        }
        out.mean_discounted += discounted;
        out.mean_undiscounted += undiscounted;
    }
    out.mean_discounted /= episodes;
    out.mean_undiscounted /= episodes;
    return out;
}

namespace {

nlohmann::json config_to_json(const TrainConfig& c) {
    return nlohmann::json{
        {"algorithm", algorithm_name(c.algorithm)},
        {"gamma", c.gamma},
        {"polyak", c.polyak},
        {"lr", c.lr},
        {"batch", c.batch},
        {"steps", c.steps},
        {"noise_family", family_name(c.noise_family)},
        {"sigma", c.sigma},
        {"quadrature_nodes", c.quadrature_nodes},
        {"penalty_coef", c.penalty_coef},
        {"expectile_tau", c.expectile_tau},
        {"bc_alpha", c.bc_alpha},
        {"policy_noise", c.policy_noise},
        {"noise_clip", c.noise_clip},
        {"policy_delay", c.policy_delay},
        {"stochastic_actor", c.stochastic_actor},
        {"actor_entropy_alpha", c.actor_entropy_alpha},
        {"hidden_dims", c.hidden_dims},
        {"layer_norm", c.layer_norm},
        {"seed", c.seed},
        {"metrics_interval", c.metrics_interval},
    };
}

TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.algorithm = algorithm_from_name(j.at("algorithm").get<std::string>());
    c.gamma = j.at("gamma").get<double>();
    c.polyak = j.at("polyak").get<double>();
    c.lr = j.at("lr").get<double>();
    c.batch = j.at("batch").get<int>();
    c.steps = j.at("steps").get<int>();
    c.noise_family = family_from_name(j.at("noise_family").get<std::string>());
    c.sigma = j.at("sigma").get<double>();
    c.quadrature_nodes = j.at("quadrature_nodes").get<int>();
    c.penalty_coef = j.at("penalty_coef").get<double>();
    c.expectile_tau = j.at("expectile_tau").get<double>();
    c.bc_alpha = j.at("bc_alpha").get<double>();
    c.policy_noise = j.at("policy_noise").get<double>();
    c.noise_clip = j.at("noise_clip").get<double>();
    c.policy_delay = j.at("policy_delay").get<int>();
    c.stochastic_actor = j.at("stochastic_actor").get<bool>();
    c.actor_entropy_alpha = j.at("actor_entropy_alpha").get<double>();
    c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
    c.layer_norm = j.at("layer_norm").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.metrics_interval = j.at("metrics_interval").get<int>();
    return c;
}

} // namespace

void save_agent(const Agent& agent, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_agent: cannot open " + path);

    std::vector<std::pair<std::string, const std::vector<double>*>> tensors = {
        {"actor", &agent.actor.params()},
        {"q1", &agent.q1.params()},
        {"q2", &agent.q2.params()},
        {"actor_target", &agent.actor_target.params()},
        {"q1_target", &agent.q1_target.params()},
        {"q2_target", &agent.q2_target.params()},
    };
    if (agent.config.algorithm == Algorithm::IqlAn)
        tensors.emplace_back("value", &agent.value.params());

    nlohmann::json header = {
        {"format", "pani-agent-v1"},
        {"state_dim", agent.state_dim},
        {"action_dim", agent.action_dim},
        {"box_low", agent.box.low},
        {"box_high", agent.box.high},
        {"config", config_to_json(agent.config)},
    };
    nlohmann::json tensor_list = nlohmann::json::array();
    for (const auto& [name, params] : tensors)
        tensor_list.push_back({{"name", name}, {"size", params->size()}});
    header["tensors"] = tensor_list;
    out << header.dump() << "\n";
    for (const auto& [name, params] : tensors)
        out.write(reinterpret_cast<const char*>(params->data()),
                  static_cast<std::streamsize>(params->size() * sizeof(double)));
}

Agent load_agent(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_agent: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("load_agent: missing header");
    const nlohmann::json header = nlohmann::json::parse(line);
    if (header.at("format").get<std::string>() != "pani-agent-v1")
        throw std::runtime_error("load_agent: unknown format");

    const TrainConfig config = config_from_json(header.at("config"));
    const ActionBox box(header.at("box_low").get<std::vector<double>>(),
                        header.at("box_high").get<std::vector<double>>());
    Agent agent = make_agent(header.at("state_dim").get<int>(),
                             header.at("action_dim").get<int>(), box, config);

    std::vector<std::pair<std::string, std::vector<double>*>> tensors = {
        {"actor", &agent.actor.params()},
        {"q1", &agent.q1.params()},
        {"q2", &agent.q2.params()},
        {"actor_target", &agent.actor_target.params()},
        {"q1_target", &agent.q1_target.params()},
        {"q2_target", &agent.q2_target.params()},
    };
    if (config.algorithm == Algorithm::IqlAn)
        tensors.emplace_back("value", &agent.value.params());

    const nlohmann::json& tensor_list = header.at("tensors");
    if (tensor_list.size() != tensors.size())
        throw std::runtime_error("load_agent: tensor list mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const std::string name = tensor_list[i].at("name").get<std::string>();
        const std::size_t size = tensor_list[i].at("size").get<std::size_t>();
        if (name != tensors[i].first || size != tensors[i].second->size())
            throw std::runtime_error("load_agent: tensor '" + name + "' mismatch");
        in.read(reinterpret_cast<char*>(tensors[i].second->data()),
                static_cast<std::streamsize>(size * sizeof(double)));
        if (!in) throw std::runtime_error("load_agent: truncated tensor '" + name + "'");
    }
    return agent;
}

} // namespace pani
