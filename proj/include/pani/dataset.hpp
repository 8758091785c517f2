#pragma once

#include <map>
#include <string>
#include <vector>

#include "pani/noise.hpp"
#include "pani/rng.hpp"

namespace pani {

struct Transition {
    std::vector<double> s;
    std::vector<double> a;
    double r = 0.0;
    std::vector<double> s2;
    bool done = false;
};

// How continuous states are grouped into the discrete keys that carry the
// empirical behavior distribution p_D(a|s).
struct StateKeyMode {
    enum Kind { Exact, Rounded } kind = Exact;
    int decimals = 6; // Rounded only

    static StateKeyMode exact() { return {Exact, 0}; }
    static StateKeyMode rounded(int decimals) { return {Rounded, decimals}; }
};

std::string state_key(const std::vector<double>& s, const StateKeyMode& mode);

struct TransitionDataset {
    std::vector<Transition> transitions;
    int state_dim = 0;
    int action_dim = 0;
    ActionBox box;
    StateKeyMode key_mode;

    void validate() const;
    bool operator==(const TransitionDataset& other) const;
};

// Entry of a per-state group: one dataset row, keeping multiplicity.
struct GroupEntry {
    std::vector<double> a;
    double r;
    std::vector<double> s2;
    bool done;
};

using StateGroups = std::map<std::string, std::vector<GroupEntry>>;

// Partitions transitions by state key, preserving duplicates; the empirical
// p_D(a|s) is uniform over a group's entries.
StateGroups group_by_state(const TransitionDataset& dataset);

// Explicit small tabular MDP for the return error-bound experiments.
struct FiniteMdp {
    int n_states = 0;
    int n_actions = 0;
    std::vector<std::vector<double>> rewards;                 // R[s][a]
    std::vector<std::vector<std::vector<double>>> transitions; // P[s][a][s']
    double gamma = 0.9;

    void validate() const;
    static FiniteMdp random(int max_states, int max_actions, double gamma,
                            std::uint64_t seed);
};

// ---------------------------------------------------------------------------
// toy-data generators

// Single state, two terminal arms: (a=-1, r=0) and (a=+1, r=1); box [-1.5, 1.5].
TransitionDataset gen_bandit1d();

// Single-state terminal dataset of jittered circles in a [-1.5, 1.5]^2 box;
// each point is rewarded with its ring's reward.
TransitionDataset gen_rings(int n_rings, int points_per_ring,
                            const std::vector<double>& radii,
                            const std::vector<double>& ring_rewards,
                            double jitter, std::uint64_t seed);
TransitionDataset gen_rings_default(std::uint64_t seed);

// Swirled radial clusters with per-arm rewards spaced uniformly in [0, 1];
// actions clipped to the [-1.5, 1.5]^2 box.
TransitionDataset gen_pinwheel(int n_arms, int points_per_arm, std::uint64_t seed);

// Continuous-action chain. From state k, actions within the band advance to
// k+1, others stay; reaching the last state pays goal_reward and terminates.
struct ChainEnv {
    int n_states = 5;
    double band_center = 0.0;
    double band_width = 0.2;
    double goal_reward = 1.0;
    double gamma = 0.99;
    ActionBox box = ActionBox::symmetric(1.0, 1);

    struct Step {
        int next_state;
        double reward;
        bool done;
    };
    Step step(int state, double action) const;

    // gamma^(n_states-2) * goal_reward
    double optimal_return() const;
};

struct ChainData {
    ChainEnv env;
    TransitionDataset dataset;
};

// Behavior data: per state, a mix of band-centered noisy actions and uniform
// actions, so every nonterminal state key is covered.
ChainData gen_chain_env(int n_states, double band_center, double band_width,
                        double goal_reward, double gamma,
                        int transitions_per_state = 64, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// serialization: one JSON object per line, after a header line with dims,
// box, and state-key mode

void save_jsonl(const TransitionDataset& dataset, const std::string& path);
TransitionDataset load_jsonl(const std::string& path);

} // namespace pani
