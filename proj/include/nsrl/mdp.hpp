#pragma once

#include <span>
#include <string>
#include <vector>

#include "nsrl/rng.hpp"

namespace nsrl {

/// Tolerance for probability-vector checks (row sums, normalization).
inline constexpr double kDistTol = 1e-12;

/// Fixed transition kernels of a finite-horizon tabular MDP. Steps are
/// 0-based internally: h runs over 0..horizon-1. Row (h,s,a) is the
/// distribution of the next state and must sum to 1.
struct TabularMDP {
    int num_states = 0;
    int num_actions = 0;
    int horizon = 0;
    std::vector<double> kernels;  // [H][S][A][S']

    TabularMDP() = default;
    TabularMDP(int S, int A, int H);

    double p(int h, int s, int a, int next) const { return kernels[kernel_index(h, s, a, next)]; }
    double& p(int h, int s, int a, int next) { return kernels[kernel_index(h, s, a, next)]; }
    std::span<const double> next_state_row(int h, int s, int a) const;
    std::span<double> next_state_row(int h, int s, int a);

    std::size_t kernel_index(int h, int s, int a, int next) const {
        return ((static_cast<std::size_t>(h) * num_states + s) * num_actions + a) * num_states + next;
    }
};

/// Per-step (s,a) reward table of a single episode; entries lie in [0,1].
struct RewardTable {
    int num_states = 0;
    int num_actions = 0;
    int horizon = 0;
    int episode = 0;
    std::vector<double> values;  // [H][S][A]

    RewardTable() = default;
    RewardTable(int S, int A, int H, int episode_index = 0);

    double at(int h, int s, int a) const { return values[index(h, s, a)]; }
    double& at(int h, int s, int a) { return values[index(h, s, a)]; }

    std::size_t index(int h, int s, int a) const {
        return (static_cast<std::size_t>(h) * num_states + s) * num_actions + a;
    }
};

/// Per-step, per-state action distributions.
struct PolicyTable {
    int num_states = 0;
    int num_actions = 0;
    int horizon = 0;
    std::vector<double> probs;  // [H][S][A]

    PolicyTable() = default;
    PolicyTable(int S, int A, int H);

    double at(int h, int s, int a) const { return probs[index(h, s, a)]; }
    double& at(int h, int s, int a) { return probs[index(h, s, a)]; }
    std::span<const double> action_row(int h, int s) const;
    std::span<double> action_row(int h, int s);

    std::size_t index(int h, int s, int a) const {
        return (static_cast<std::size_t>(h) * num_states + s) * num_actions + a;
    }
};

/// Per-step (s,a) action values.
struct QTable {
    int num_states = 0;
    int num_actions = 0;
    int horizon = 0;
    std::vector<double> values;  // [H][S][A]

    QTable() = default;
    QTable(int S, int A, int H);

    double at(int h, int s, int a) const { return values[index(h, s, a)]; }
    double& at(int h, int s, int a) { return values[index(h, s, a)]; }
    std::span<const double> action_row(int h, int s) const;

    std::size_t index(int h, int s, int a) const {
        return (static_cast<std::size_t>(h) * num_states + s) * num_actions + a;
    }
};

/// Per-step state values, including the terminal step: rows 0..horizon,
/// where row `horizon` is identically zero for exact evaluations.
struct VTable {
    int num_states = 0;
    int horizon = 0;
    std::vector<double> values;  // [H+1][S]

    VTable() = default;
    VTable(int S, int H);

    double at(int h, int s) const { return values[static_cast<std::size_t>(h) * num_states + s]; }
    double& at(int h, int s) { return values[static_cast<std::size_t>(h) * num_states + s]; }
};

/// Law of the state at each step under a policy started from a fixed state.
struct VisitationProfile {
    int num_states = 0;
    int horizon = 0;
    std::vector<double> probs;  // [H][S]

    VisitationProfile() = default;
    VisitationProfile(int S, int H);

    double at(int h, int s) const { return probs[static_cast<std::size_t>(h) * num_states + s]; }
    double& at(int h, int s) { return probs[static_cast<std::size_t>(h) * num_states + s]; }
};

/// Uniform policy over actions for every (h, s).
PolicyTable uniform_policy(int S, int A, int H);

/// Deterministic policy placing all mass on actions[h * S + s].
PolicyTable point_mass_policy(std::span<const int> actions, int S, int A, int H);

/// Collects every invariant violation of the MDP (dimension mismatches,
/// negative entries, rows whose sums deviate from 1 beyond kDistTol).
/// Returns an empty list when the MDP is well formed; never throws.
std::vector<std::string> validate_mdp(const TabularMDP& mdp);

/// Same checks for a policy: each action row must be a distribution.
std::vector<std::string> validate_policy(const PolicyTable& policy);

/// Draws the next state from the kernel row (h, s, a).
int sample_transition(const TabularMDP& mdp, int h, int s, int a, Rng& rng);

/// Exact optimal solution by backward induction. Ties in the per-state
/// argmax are broken toward the lowest action index, so the optimal policy
/// is a deterministic function of (mdp, rewards).
struct OptimalSolution {
    VTable v;
    QTable q;
    PolicyTable policy;        // point mass on greedy_action
    std::vector<int> greedy_action;  // [H][S]

    int action_at(int h, int s) const { return greedy_action[static_cast<std::size_t>(h) * policy.num_states + s]; }
};
OptimalSolution dp_optimal(const TabularMDP& mdp, const RewardTable& rewards);

/// Exact value of a (possibly stochastic) policy by backward recursion.
struct ExactEval {
    VTable v;
    QTable q;
};
ExactEval evaluate_policy_exact(const TabularMDP& mdp, const RewardTable& rewards,
                                const PolicyTable& policy);

/// Forward propagation of the state law under `policy` from initial state s1.
VisitationProfile visitation_profile(const TabularMDP& mdp, const PolicyTable& policy, int s1);

/// Sup-over-states l1 gaps between the policy-induced step-h kernels and
/// between the step-h action distributions of the two policies.
struct KernelPolicyGap {
    double kernel_gap = 0.0;  // max_s || P_h^pi(.|s) - P_h^pi'(.|s) ||_1
    double policy_gap = 0.0;  // max_s || pi_h(.|s)  - pi'_h(.|s)  ||_1
};
KernelPolicyGap policy_kernel_distance(const TabularMDP& mdp, int h, const PolicyTable& a,
                                       const PolicyTable& b);

}  // namespace nsrl
