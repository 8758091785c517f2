#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "pani/learn.hpp"
#include "pani/noise.hpp"
#include "support/gradcheck.hpp"

using namespace pani;

namespace {

TrainConfig toy_config(Algorithm algorithm) {
    TrainConfig cfg;
    cfg.algorithm = algorithm;
    cfg.hidden_dims = {12, 12};
    cfg.batch = 8;
    cfg.steps = 20;
    cfg.metrics_interval = 5;
    cfg.sigma = 0.2;
    cfg.noise_family = NoiseFamily::Gaussian;
    cfg.seed = 3;
    return cfg;
}

Batch toy_batch(const TransitionDataset& ds, const TrainConfig& cfg, Rng& rng) {
    Batch batch = sample_batch(ds, cfg.batch, rng);
    apply_action_noise(batch, cfg, ds.box, rng);
    return batch;
}

} // namespace

TEST_CASE("targets equal online networks at initialization") {
    const TransitionDataset ds = gen_bandit1d();
    const Agent agent = make_agent(ds.state_dim, ds.action_dim, ds.box,
                                   toy_config(Algorithm::Td3An));
    CHECK(agent.q1_target.params() == agent.q1.params());
    CHECK(agent.q2_target.params() == agent.q2.params());
    CHECK(agent.actor_target.params() == agent.actor.params());
}

TEST_CASE("noise application and penalty arithmetic") {
    const TransitionDataset ds = gen_bandit1d();
    TrainConfig cfg = toy_config(Algorithm::Td3An);
    Rng rng(1);
    Batch batch = toy_batch(ds, cfg, rng);
    for (int i = 0; i < batch.size; ++i) {
        const double d = batch.a[i] - batch.a_prime[i];
        CHECK(batch.penalty[i] == doctest::Approx(d * d).epsilon(1e-12));
    }

    SUBCASE("penalty is the squared distance times the coefficient") {
        // a = (0,0), a' = (0.3, -0.4): squared distance 0.25
        const double d2 = 0.3 * 0.3 + 0.4 * 0.4;
        CHECK(d2 == doctest::Approx(0.25));
        cfg.penalty_coef = 2.0;
        Rng rng2(1);
        Batch b2 = toy_batch(ds, cfg, rng2);
        for (int i = 0; i < b2.size; ++i) {
            const double d = b2.a[i] - b2.a_prime[i];
            CHECK(b2.penalty[i] == doctest::Approx(2.0 * d * d).epsilon(1e-12));
        }
    }
    SUBCASE("sigma 0 disables injection and consumes no draws") {
        cfg.sigma = 0.0;
        Rng rng_a(9), rng_b(9);
        Batch b = sample_batch(ds, cfg.batch, rng_a);
        apply_action_noise(b, cfg, ds.box, rng_a);
        CHECK(b.a_prime == b.a);
        for (double p : b.penalty) CHECK(p == 0.0);
        // rng untouched by the no-noise path
        sample_batch(ds, cfg.batch, rng_b);
        CHECK(rng_a.next_u64() == rng_b.next_u64());
    }
}

TEST_CASE("sigma->0 TD3-AN critic loss equals a plain TD3 reference") {
    const ChainData chain = gen_chain_env(5, 0.3, 0.2, 1.0, 0.99, 16, 11);
    TrainConfig cfg = toy_config(Algorithm::Td3An);
    cfg.sigma = 0.0; // a' = a, penalty 0
    Agent agent = make_agent(1, 1, chain.dataset.box, cfg);
    const Agent reference = agent;

    Rng rng(5);
    Batch batch = sample_batch(chain.dataset, cfg.batch, rng);
    apply_action_noise(batch, cfg, chain.dataset.box, rng);

    // plain TD3 target on the same batch with a cloned random stream
    Rng rng_ref = rng;
    const int b = batch.size;
    Mlp::Workspace ws;
    std::vector<double> u;
    reference.actor_target.forward_batch(batch.s2, b, ws, u);
    std::vector<double> ta(b);
    for (int i = 0; i < b; ++i) {
        const double squashed = std::tanh(u[i]); // box [-1, 1]
        const double eps = std::clamp(cfg.policy_noise * rng_ref.normal(),
                                      -cfg.noise_clip, cfg.noise_clip);
        ta[i] = std::clamp(squashed + eps, -1.0, 1.0);
    }
    std::vector<double> qin2(2 * b), qin(2 * b);
    for (int i = 0; i < b; ++i) {
        qin2[2 * i] = batch.s2[i];
        qin2[2 * i + 1] = ta[i];
        qin[2 * i] = batch.s[i];
        qin[2 * i + 1] = batch.a[i]; // plain TD3 regresses at dataset actions
    }
    std::vector<double> q1t, q2t;
    reference.q1_target.forward_batch(qin2, b, ws, q1t);
    reference.q2_target.forward_batch(qin2, b, ws, q2t);
    std::vector<double> target(b);
    for (int i = 0; i < b; ++i)
        target[i] = batch.r[i] +
                    cfg.gamma * (batch.done[i] ? 0.0 : std::min(q1t[i], q2t[i]));
    const double ref_loss =
        critic_fit_loss(reference.q1, qin, b, target).loss +
        critic_fit_loss(reference.q2, qin, b, target).loss;

    const double loss = td3an_critic_update(agent, batch, rng);
    CHECK(loss == doctest::Approx(ref_loss).epsilon(1e-15));
}

TEST_CASE("penalized targets never exceed their unpenalized counterparts") {
    const TransitionDataset ds = gen_rings(2, 32, {0.4, 0.8}, {1.0, 0.0}, 0.02, 3);
    TrainConfig cfg = toy_config(Algorithm::IqlAn);
    Rng rng(7);
    Agent agent = make_agent(ds.state_dim, ds.action_dim, ds.box, cfg);
    for (int trial = 0; trial < 20; ++trial) {
        Batch batch = toy_batch(ds, cfg, rng);
        for (int i = 0; i < batch.size; ++i) CHECK(batch.penalty[i] >= 0.0);
    }
}

TEST_CASE("actor gradients pass finite differences") {
    const ChainData chain = gen_chain_env(4, 0.0, 0.25, 1.0, 0.9, 16, 13);
    Rng rng(17);

    SUBCASE("td3 actor objective with behavior-cloning term") {
        TrainConfig cfg = toy_config(Algorithm::Td3An);
        cfg.bc_alpha = 0.7;
        Agent agent = make_agent(1, 1, chain.dataset.box, cfg);
        Batch batch = toy_batch(chain.dataset, cfg, rng);
        const LossGrad lg = td3an_actor_loss(agent, batch);
        const double err = max_rel_grad_error(
            agent.actor.params(), lg.grad,
            [&]() { return td3an_actor_loss(agent, batch).loss; });
        CHECK(err <= 1e-4);
    }
    SUBCASE("iql deterministic actor objective") {
        TrainConfig cfg = toy_config(Algorithm::IqlAn);
        Agent agent = make_agent(1, 1, chain.dataset.box, cfg);
        Batch batch = toy_batch(chain.dataset, cfg, rng);
        const LossGrad lg = iqlan_actor_loss(agent, batch);
        const double err = max_rel_grad_error(
            agent.actor.params(), lg.grad,
            [&]() { return iqlan_actor_loss(agent, batch).loss; });
        CHECK(err <= 1e-4);
    }
    SUBCASE("iql stochastic actor objective with fixed draws") {
        TrainConfig cfg = toy_config(Algorithm::IqlAn);
        cfg.stochastic_actor = true;
        cfg.actor_entropy_alpha = 0.3;
        Agent agent = make_agent(1, 1, chain.dataset.box, cfg);
        Batch batch = toy_batch(chain.dataset, cfg, rng);
        std::vector<double> eps(batch.size);
        for (double& e : eps) e = rng.normal();
        const LossGrad lg = iqlan_actor_loss(agent, batch, &eps);
        const double err = max_rel_grad_error(
            agent.actor.params(), lg.grad,
            [&]() { return iqlan_actor_loss(agent, batch, &eps).loss; });
        CHECK(err <= 1e-4);
    }
    SUBCASE("iql value objective through the expectile loss") {
        TrainConfig cfg = toy_config(Algorithm::IqlAn);
        cfg.expectile_tau = 0.7;
        Agent agent = make_agent(1, 1, chain.dataset.box, cfg);
        Batch batch = toy_batch(chain.dataset, cfg, rng);
        const LossGrad lg = iqlan_value_loss(agent, batch);
        const double err = max_rel_grad_error(
            agent.value.params(), lg.grad,
            [&]() { return iqlan_value_loss(agent, batch).loss; });
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("tanh-gaussian log density integrates to one") {
    const ActionBox box(std::vector<double>{-2.0}, std::vector<double>{2.0});
    const std::vector<double> mu = {0.3};
    const std::vector<double> log_std = {-0.5};
    std::vector<double> nodes, weights;
    gauss_legendre(400, -2.0, 2.0, nodes, weights);
    double mass = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        mass += weights[i] *
                std::exp(tanh_gaussian_log_density(mu, log_std, {nodes[i]}, box));
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    // outside the box the density vanishes
    CHECK(tanh_gaussian_log_density(mu, log_std, {2.5}, box) ==
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("training order follows each algorithm") {
    const ChainData chain = gen_chain_env(4, 0.0, 0.25, 1.0, 0.9, 16, 19);

    SUBCASE("td3: actor and targets fire only on delayed steps") {
        TrainConfig cfg = toy_config(Algorithm::Td3An);
        cfg.steps = 10;
        cfg.policy_delay = 2;
        std::vector<std::pair<std::string, int>> events;
        TrainOptions options;
        options.trace = [&](const char* phase, int step) {
            events.emplace_back(phase, step);
        };
        train(chain.dataset, cfg, options);
        int actor_updates = 0, target_updates = 0;
        for (const auto& [phase, step] : events) {
            if (phase == "actor") {
                CHECK(step % 2 == 0);
                ++actor_updates;
            }
            if (phase == "targets") {
                CHECK(step % 2 == 0);
                ++target_updates;
            }
            CHECK(phase != "value");
        }
        CHECK(actor_updates == 5);
        CHECK(target_updates == 5);
    }
    SUBCASE("iql: value, critic, actor, targets every step in order") {
        TrainConfig cfg = toy_config(Algorithm::IqlAn);
        cfg.steps = 4;
        std::vector<std::pair<std::string, int>> events;
        TrainOptions options;
        options.trace = [&](const char* phase, int step) {
            events.emplace_back(phase, step);
        };
        train(chain.dataset, cfg, options);
        REQUIRE(events.size() == 16);
        const char* expected[] = {"value", "critic", "actor", "targets"};
        for (std::size_t i = 0; i < events.size(); ++i) {
            CHECK(events[i].first == expected[i % 4]);
            CHECK(events[i].second == static_cast<int>(i / 4) + 1);
        }
    }
}

TEST_CASE("training is deterministic given the seed") {
    const TransitionDataset ds = gen_bandit1d();
    for (Algorithm algorithm : {Algorithm::Td3An, Algorithm::IqlAn}) {
        TrainConfig cfg = toy_config(algorithm);
        cfg.steps = 30;
        const TrainResult a = train(ds, cfg);
        const TrainResult b = train(ds, cfg);
        CHECK(a.agent.actor.params() == b.agent.actor.params());
        CHECK(a.agent.q1.params() == b.agent.q1.params());
        CHECK(a.agent.q2.params() == b.agent.q2.params());
    }
}

TEST_CASE("divergence guard aborts on non-finite losses") {
    TransitionDataset ds = gen_bandit1d();
    ds.transitions[1].r = 1e308; // finite, but squares to infinity
    TrainConfig cfg = toy_config(Algorithm::Td3An);
    CHECK_THROWS_AS(train(ds, cfg), std::runtime_error);
}

TEST_CASE("metrics stream to disk per interval") {
    const TransitionDataset ds = gen_bandit1d();
    TrainConfig cfg = toy_config(Algorithm::Td3An);
    cfg.steps = 10;
    cfg.metrics_interval = 3;
    const std::string path = "/tmp/pani_test_metrics.csv";
    TrainOptions options;
    options.metrics_path = path;
    options.config_hash = "deadbeef";
    bool saw_partial = false;
    options.trace = [&](const char* phase, int step) {
        if (step == 10 && std::string(phase) == "critic") {
            // rows for steps 3, 6, 9 must already be on disk
            std::ifstream in(path);
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            saw_partial = text.find("\n9,") != std::string::npos;
        }
    };
    const TrainResult result = train(ds, cfg, options);
    CHECK(saw_partial);
    REQUIRE(result.metrics.size() == 4); // steps 3, 6, 9, 10
    CHECK(result.metrics.back().step == 10);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "# config_hash=deadbeef");
    std::getline(in, line);
    CHECK(line == "step,critic_loss,actor_loss,value_loss,eval_return,ood_probability");
    std::remove(path.c_str());
}

TEST_CASE("ood overestimation probability") {
    const TransitionDataset ds = gen_bandit1d();
    TrainConfig cfg = toy_config(Algorithm::Td3An);
    Rng rng(23);

    SUBCASE("constant critics never overestimate strictly") {
        Agent agent = make_agent(1, 1, ds.box, cfg);
        std::fill(agent.q1.params().begin(), agent.q1.params().end(), 0.0);
        std::fill(agent.q2.params().begin(), agent.q2.params().end(), 0.0);
        const OodEstimate est = ood_overestimation_probability(agent, ds, 5000, rng);
        CHECK(est.probability == 0.0);
    }
    SUBCASE("a dataset-peaked q-grid never overestimates") {
        // single state, single dataset action at 0; Q(s, a) = -||a||^2
        TransitionDataset point = ds;
        point.transitions = {{{0.0}, {0.0}, 0.0, {0.0}, true}};
        const ActionGrid grid = ActionGrid::regular(ds.box, 61);
        const NamdpModel model = build_limit_namdp(point, grid, 0.99);
        QGrid q;
        q.values.assign(1, std::vector<double>(grid.size(), 0.0));
        for (int j = 0; j < grid.size(); ++j)
            q.values[0][j] = -grid.points[j][0] * grid.points[j][0];
        const OodEstimate est =
            ood_overestimation_probability(q, model, point, 5000, rng);
        CHECK(est.probability == 0.0);
    }
    SUBCASE("confidence half-width shrinks as 1/sqrt(n)") {
        Agent agent = make_agent(1, 1, ds.box, cfg);
        const OodEstimate est =
            ood_overestimation_probability(agent, ds, 200000, rng);
        CHECK(est.ci_half_width <= 0.003);
    }
}

TEST_CASE("q landscape evaluates the min critic on the grid") {
    const TransitionDataset ds = gen_bandit1d();
    TrainConfig cfg = toy_config(Algorithm::Td3An);
    Agent agent = make_agent(1, 1, ds.box, cfg);
    const ActionGrid grid = ActionGrid::regular(ds.box, 31);
    const std::vector<double> q = q_landscape(agent, {0.0}, grid);
    REQUIRE(static_cast<int>(q.size()) == grid.size());
    // spot-check one point against direct forwards
    const std::vector<double> qin = {0.0, grid.points[7][0]};
    const double q1 = agent.q1.forward(qin)[0];
    const double q2 = agent.q2.forward(qin)[0];
    CHECK(q[7] == doctest::Approx(std::min(q1, q2)).epsilon(1e-12));
}

TEST_CASE("policy evaluation on the chain") {
    const ChainData chain = gen_chain_env(5, 0.3, 0.2, 1.0, 0.9, 16, 29);
    TrainConfig cfg = toy_config(Algorithm::Td3An);
    Rng rng(31);

    SUBCASE("a hand-coded band policy earns the analytic optimal return") {
        Agent agent = make_agent(1, 1, chain.dataset.box, cfg);
        std::fill(agent.actor.params().begin(), agent.actor.params().end(), 0.0);
        agent.actor.params()[agent.actor.n_params() - 1] = std::atanh(0.3);
        const EvalResult result = evaluate_policy(chain.env, agent, 3, rng);
        CHECK(result.mean_discounted ==
              doctest::Approx(chain.env.optimal_return()).epsilon(1e-12));
        CHECK(result.mean_undiscounted == doctest::Approx(1.0));
    }
    SUBCASE("an untrained actor never beats the optimum and reproduces itself") {
        Agent agent = make_agent(1, 1, chain.dataset.box, cfg);
        const EvalResult a = evaluate_policy(chain.env, agent, 3, rng);
        const EvalResult b = evaluate_policy(chain.env, agent, 3, rng);
        CHECK(a.mean_discounted <= chain.env.optimal_return() + 1e-12);
        CHECK(a.mean_discounted == b.mean_discounted);
    }
}

TEST_CASE("duplicated transitions do not add gradient information") {
    // variance of the critic-fit gradient over resampled batches:
    // 2B distinct draws halve the variance of B draws; duplicating B draws
    // to 2B leaves it unchanged
    const TransitionDataset ds = gen_rings(2, 64, {0.4, 0.8}, {1.0, 0.0}, 0.02, 41);
    TrainConfig cfg = toy_config(Algorithm::IqlAn);
    Agent agent = make_agent(ds.state_dim, ds.action_dim, ds.box, cfg);
    const int B = 8, trials = 300;
    Rng rng(43);

    auto grad_component = [&](const Batch& batch) {
        std::vector<double> qin(batch.size * 3);
        std::vector<double> target(batch.size);
        for (int i = 0; i < batch.size; ++i) {
            qin[3 * i] = batch.s[i];
            qin[3 * i + 1] = batch.a_prime[2 * i];
            qin[3 * i + 2] = batch.a_prime[2 * i + 1];
            target[i] = batch.r[i] - batch.penalty[i];
        }
        return critic_fit_loss(agent.q1, qin, batch.size, target).grad[0];
    };
    auto duplicate = [](const Batch& batch) {
        Batch out = batch;
        out.size = 2 * batch.size;
        auto dup = [](auto& v) { v.insert(v.end(), v.begin(), v.end()); };
        dup(out.s);
        dup(out.a);
        dup(out.s2);
        dup(out.r);
        dup(out.done);
        dup(out.a_prime);
        dup(out.penalty);
        return out;
    };
    auto variance_of = [&](int batch_size, bool duplicated) {
        double sum = 0.0, sum_sq = 0.0;
        for (int t = 0; t < trials; ++t) {
            Batch batch = sample_batch(ds, batch_size, rng);
            apply_action_noise(batch, cfg, ds.box, rng);
            const double g = grad_component(duplicated ? duplicate(batch) : batch);
            sum += g;
            sum_sq += g * g;
        }
        const double mean = sum / trials;
        return (sum_sq - trials * mean * mean) / (trials - 1);
    };

    const double v_single = variance_of(B, false);
    const double v_double = variance_of(2 * B, false);
    const double v_dup = variance_of(B, true);
    CHECK(v_double / v_single == doctest::Approx(0.5).epsilon(0.45));
    CHECK(v_dup / v_single == doctest::Approx(1.0).epsilon(0.45));
    CHECK(v_dup > 1.5 * v_double);
}

TEST_CASE("agent serialization round trip") {
    const ChainData chain = gen_chain_env(4, 0.0, 0.25, 1.0, 0.9, 16, 47);
    TrainConfig cfg = toy_config(Algorithm::IqlAn);
    cfg.steps = 15;
    const TrainResult result = train(chain.dataset, cfg);
    const std::string path = "/tmp/pani_test_agent.bin";
    save_agent(result.agent, path);
    const Agent back = load_agent(path);
    CHECK(back.actor.params() == result.agent.actor.params());
    CHECK(back.q1.params() == result.agent.q1.params());
    CHECK(back.value.params() == result.agent.value.params());
    CHECK(back.act({1.0}) == result.agent.act({1.0}));
    CHECK(back.config.expectile_tau == cfg.expectile_tau);
    std::remove(path.c_str());
}

TEST_CASE("paper-table defaults are baked into the config") {
    const TrainConfig cfg;
    CHECK(cfg.lr == 1e-3);
    CHECK(cfg.batch == 256);
    CHECK(cfg.gamma == 0.99);
    CHECK(cfg.polyak == 5e-3);
    CHECK(cfg.policy_noise == 0.2);
    CHECK(cfg.noise_clip == 0.5);
    CHECK(cfg.policy_delay == 2);
    CHECK(cfg.hidden_dims == std::vector<int>{256, 256, 256});
    CHECK(cfg.layer_norm);
}
