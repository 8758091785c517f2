#include "pani/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pani {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string format_component(double x, const StateKeyMode& mode) {
    char buf[64];
    if (mode.kind == StateKeyMode::Rounded) {
        std::snprintf(buf, sizeof(buf), "%.*f", mode.decimals, x);
        // avoid the distinct "-0.000" key
        if (std::string(buf).find_first_not_of("-0.") == std::string::npos &&
            std::string(buf).front() == '-')
            return std::string(buf).substr(1);
    } else {
        std::snprintf(buf, sizeof(buf), "%.17g", x);
    }
    return buf;
}

} // namespace

std::string state_key(const std::vector<double>& s, const StateKeyMode& mode) {
    std::string key;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) key += ',';
        key += format_component(s[i], mode);
    }
    return key;
}

void TransitionDataset::validate() const {
    if (transitions.empty())
        throw std::invalid_argument("TransitionDataset: empty");
    if (state_dim < 1 || action_dim < 1)
        throw std::invalid_argument("TransitionDataset: bad dimensions");
    if (box.dim() != action_dim)
        throw std::invalid_argument("TransitionDataset: box/action_dim mismatch");
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        const Transition& t = transitions[i];
        if (static_cast<int>(t.s.size()) != state_dim ||
            static_cast<int>(t.s2.size()) != state_dim ||
            static_cast<int>(t.a.size()) != action_dim)
            throw std::invalid_argument("TransitionDataset: inconsistent dims at row " +
                                        std::to_string(i));
        auto finite = [](const std::vector<double>& v) {
            for (double x : v)
                if (!std::isfinite(x)) return false;
            return true;
        };
        if (!finite(t.s) || !finite(t.a) || !finite(t.s2) || !std::isfinite(t.r))
            throw std::invalid_argument("TransitionDataset: non-finite entry at row " +
                                        std::to_string(i));
        if (!box.contains(t.a))
            throw std::invalid_argument("TransitionDataset: action outside box at row " +
                                        std::to_string(i));
    }
}

bool TransitionDataset::operator==(const TransitionDataset& other) const {
    if (state_dim != other.state_dim || action_dim != other.action_dim ||
        box.low != other.box.low || box.high != other.box.high ||
        key_mode.kind != other.key_mode.kind ||
        (key_mode.kind == StateKeyMode::Rounded &&
         key_mode.decimals != other.key_mode.decimals) ||
        transitions.size() != other.transitions.size())
        return false;
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        const Transition& x = transitions[i];
        const Transition& y = other.transitions[i];
        if (x.s != y.s || x.a != y.a || x.r != y.r || x.s2 != y.s2 ||
            x.done != y.done)
            return false;
    }
    return true;
}

StateGroups group_by_state(const TransitionDataset& dataset) {
    StateGroups groups;
    for (const Transition& t : dataset.transitions)
        groups[state_key(t.s, dataset.key_mode)].push_back(
            GroupEntry{t.a, t.r, t.s2, t.done});
    return groups;
}

void FiniteMdp::validate() const {
    if (n_states < 1 || n_actions < 1)
        throw std::invalid_argument("FiniteMdp: bad sizes");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("FiniteMdp: gamma must be in (0,1)");
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            if (!std::isfinite(rewards[s][a]))
                throw std::invalid_argument("FiniteMdp: non-finite reward");
            double total = 0.0;
            for (int s2 = 0; s2 < n_states; ++s2) total += transitions[s][a][s2];
            if (std::fabs(total - 1.0) > 1e-12)
                throw std::invalid_argument("FiniteMdp: transition row does not sum to 1");
        }
}

FiniteMdp FiniteMdp::random(int max_states, int max_actions, double gamma,
                            std::uint64_t seed) {
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
    FiniteMdp mdp;
    mdp.n_states = 2 + static_cast<int>(rng.uniform_index(max_states - 1));
    mdp.n_actions = 2 + static_cast<int>(rng.uniform_index(max_actions - 1));
    mdp.gamma = gamma;
    mdp.rewards.assign(mdp.n_states, std::vector<double>(mdp.n_actions, 0.0));
    mdp.transitions.assign(
        mdp.n_states,
        std::vector<std::vector<double>>(mdp.n_actions,
                                         std::vector<double>(mdp.n_states, 0.0)));
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            mdp.rewards[s][a] = rng.uniform(-1.0, 1.0);
            double total = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                // Dirichlet(1) row via normalized exponentials
                double u;
                do { u = rng.uniform01(); } while (u <= 0.0);
                mdp.transitions[s][a][s2] = -std::log(u);
                total += mdp.transitions[s][a][s2];
            }
            for (int s2 = 0; s2 < mdp.n_states; ++s2) mdp.transitions[s][a][s2] /= total;
        }
    mdp.validate();
    return mdp;
}

TransitionDataset gen_bandit1d() {
    TransitionDataset ds;
    ds.state_dim = 1;
    ds.action_dim = 1;
    ds.box = ActionBox::symmetric(1.5, 1);
    ds.key_mode = StateKeyMode::exact();
    ds.transitions.push_back({{0.0}, {-1.0}, 0.0, {0.0}, true});
    ds.transitions.push_back({{0.0}, {1.0}, 1.0, {0.0}, true});
    ds.validate();
    return ds;
}

TransitionDataset gen_rings(int n_rings, int points_per_ring,
                            const std::vector<double>& radii,
                            const std::vector<double>& ring_rewards,
                            double jitter, std::uint64_t seed) {
    if (static_cast<int>(radii.size()) != n_rings ||
        static_cast<int>(ring_rewards.size()) != n_rings)
        throw std::invalid_argument("gen_rings: lists must have length n_rings");
    for (double r : radii)
        if (!(r > 0.0 && r <= 1.0))
            throw std::invalid_argument("gen_rings: radii must lie in (0, 1]");

    Rng rng(seed);
    TransitionDataset ds;
    ds.state_dim = 1;
    ds.action_dim = 2;
    ds.box = ActionBox::symmetric(1.5, 2);
    ds.key_mode = StateKeyMode::exact();
    for (int ring = 0; ring < n_rings; ++ring)
        for (int i = 0; i < points_per_ring; ++i) {
            const double theta = rng.uniform(0.0, 2.0 * kPi);
            const double radius = radii[ring] + jitter * rng.normal();
            std::vector<double> a = ds.box.clip(
                {radius * std::cos(theta), radius * std::sin(theta)});
            ds.transitions.push_back({{0.0}, a, ring_rewards[ring], {0.0}, true});
        }
    ds.validate();
    return ds;
}

TransitionDataset gen_rings_default(std::uint64_t seed) {
    return gen_rings(3, 256, {0.3, 0.6, 0.9}, {1.0, 0.5, 0.0}, 0.02, seed);
}

TransitionDataset gen_pinwheel(int n_arms, int points_per_arm, std::uint64_t seed) {
    if (n_arms < 2) throw std::invalid_argument("gen_pinwheel: n_arms must be >= 2");
    Rng rng(seed);
    TransitionDataset ds;
    ds.state_dim = 1;
    ds.action_dim = 2;
    ds.box = ActionBox::symmetric(1.5, 2);
    ds.key_mode = StateKeyMode::exact();
    const double swirl = 2.0;
    for (int arm = 0; arm < n_arms; ++arm) {
        const double base = 2.0 * kPi * arm / n_arms;
        const double reward = static_cast<double>(arm) / (n_arms - 1);
        for (int i = 0; i < points_per_arm; ++i) {
            const double radius = std::fabs(0.6 + 0.12 * rng.normal());
            const double angle = base + 0.15 * rng.normal() + swirl * radius;
            std::vector<double> a = ds.box.clip(
                {radius * std::cos(angle), radius * std::sin(angle)});
            ds.transitions.push_back({{0.0}, a, reward, {0.0}, true});
        }
    }
    ds.validate();
    return ds;
}

ChainEnv::Step ChainEnv::step(int state, double action) const {
    if (state < 0 || state >= n_states - 1)
        throw std::invalid_argument("ChainEnv::step: state out of range");
    if (std::fabs(action - band_center) <= band_width) {
        const int next = state + 1;
        const bool done = next == n_states - 1;
        return {next, done ? goal_reward : 0.0, done};
    }
    return {state, 0.0, false};
}

double ChainEnv::optimal_return() const {
    return std::pow(gamma, n_states - 2) * goal_reward;
}

ChainData gen_chain_env(int n_states, double band_center, double band_width,
                        double goal_reward, double gamma,
                        int transitions_per_state, std::uint64_t seed) {
    if (n_states < 3) throw std::invalid_argument("gen_chain_env: n_states must be >= 3");
    if (band_center - band_width < -1.0 || band_center + band_width > 1.0)
        throw std::invalid_argument("gen_chain_env: band must lie within [-1, 1]");

    ChainEnv env;
    env.n_states = n_states;
    env.band_center = band_center;
    env.band_width = band_width;
    env.goal_reward = goal_reward;
    env.gamma = gamma;

    Rng rng(seed);
    TransitionDataset ds;
    ds.state_dim = 1;
    ds.action_dim = 1;
    ds.box = env.box;
    ds.key_mode = StateKeyMode::exact();
    for (int k = 0; k < n_states - 1; ++k)
        for (int i = 0; i < transitions_per_state; ++i) {
            double a;
            if (rng.uniform01() < 0.5)
                a = std::clamp(band_center + 0.5 * band_width * rng.normal(),
                               env.box.low[0], env.box.high[0]);
            else
                a = rng.uniform(env.box.low[0], env.box.high[0]);
            const ChainEnv::Step st = env.step(k, a);
            ds.transitions.push_back({{static_cast<double>(k)},
                                      {a},
                                      st.reward,
                                      {static_cast<double>(st.next_state)},
                                      st.done});
        }
    ds.validate();
    return {env, ds};
}

void save_jsonl(const TransitionDataset& dataset, const std::string& path) {
    dataset.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_jsonl: cannot open " + path);
    nlohmann::json header = {
        {"state_dim", dataset.state_dim},
        {"action_dim", dataset.action_dim},
        {"box_low", dataset.box.low},
        {"box_high", dataset.box.high},
        {"state_key", dataset.key_mode.kind == StateKeyMode::Exact ? "exact" : "rounded"},
    };
    if (dataset.key_mode.kind == StateKeyMode::Rounded)
        header["decimals"] = dataset.key_mode.decimals;
    out << header.dump() << "\n";
    for (const Transition& t : dataset.transitions) {
        nlohmann::json row = {
            {"s", t.s}, {"a", t.a}, {"r", t.r}, {"s2", t.s2}, {"done", t.done}};
        out << row.dump() << "\n";
    }
}

TransitionDataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_jsonl: cannot open " + path);

    std::string line;
    int line_no = 0;
    auto parse_line = [&](const std::string& text) {
        nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded())
            throw std::runtime_error("load_jsonl: malformed JSON at line " +
                                     std::to_string(line_no));
        return j;
    };

    if (!std::getline(in, line))
        throw std::runtime_error("load_jsonl: missing header line");
    ++line_no;
    nlohmann::json header = parse_line(line);
    for (const char* key : {"state_dim", "action_dim", "box_low", "box_high", "state_key"})
        if (!header.contains(key))
            throw std::runtime_error("load_jsonl: header missing key '" +
                                     std::string(key) + "' at line 1");

    TransitionDataset ds;
    ds.state_dim = header["state_dim"].get<int>();
    ds.action_dim = header["action_dim"].get<int>();
    ds.box = ActionBox(header["box_low"].get<std::vector<double>>(),
                       header["box_high"].get<std::vector<double>>());
    const std::string mode = header["state_key"].get<std::string>();
    if (mode == "exact") {
        ds.key_mode = StateKeyMode::exact();
    } else if (mode == "rounded") {
        if (!header.contains("decimals"))
            throw std::runtime_error("load_jsonl: header missing key 'decimals' at line 1");
        ds.key_mode = StateKeyMode::rounded(header["decimals"].get<int>());
    } else {
        throw std::runtime_error("load_jsonl: unknown state_key mode '" + mode + "'");
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = parse_line(line);
        for (const char* key : {"s", "a", "r", "s2", "done"})
            if (!j.contains(key))
                throw std::runtime_error("load_jsonl: missing key '" + std::string(key) +
                                         "' at line " + std::to_string(line_no));
        Transition t;
        t.s = j["s"].get<std::vector<double>>();
        t.a = j["a"].get<std::vector<double>>();
        t.r = j["r"].get<double>();
        t.s2 = j["s2"].get<std::vector<double>>();
        t.done = j["done"].get<bool>();
        if (static_cast<int>(t.s.size()) != ds.state_dim ||
            static_cast<int>(t.s2.size()) != ds.state_dim ||
            static_cast<int>(t.a.size()) != ds.action_dim)
            throw std::runtime_error("load_jsonl: dimension mismatch with header at line " +
                                     std::to_string(line_no));
        ds.transitions.push_back(std::move(t));
    }
    ds.validate();
    return ds;
}

} // namespace pani
