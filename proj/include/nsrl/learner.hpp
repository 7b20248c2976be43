#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nsrl/mdp.hpp"
#include "nsrl/schedule.hpp"

namespace nsrl {

/// Thresholds x into [lo, hi]; an infinite x lands on the nearest bound,
/// which realizes the x/0 = infinity convention used by the theory
/// schedules below.
double clamp(double x, double lo, double hi);

/// Learner hyperparameters. `restart_cycle` is the number of episodes
/// between resets of the policy/Q estimates; `num_periods` is the resulting
/// number of restart periods ceil(K / restart_cycle).
struct Hyperparams {
    double delta = 0.01;
    double alpha = 0.0;
    int restart_cycle = 1;
    int num_periods = 1;
    double lambda = 1.0;
    double beta = 0.0;
    double c_beta = 1.0;

    /// Cap applied to the step size when a zero iterate-variation bound
    /// would make it infinite.
    static constexpr double kAlphaCap = 1e3;
};

/// Step size, restart cycle and bonus multiplier for the restart learner,
/// derived from the instance dimensions, a confidence level and an upper
/// bound on the total variation of per-episode optimal policies. A zero
/// bound yields the longest cycle (no restart after the first episode).
Hyperparams theory_hyperparams_power(int K, int H, int S, int A, double delta,
                                     double policy_var_bound, double c_beta = 1.0);

/// Variant for the predictive learner: the step size is driven by an upper
/// bound on the total squared variation of the learner's own Q iterates.
/// A zero iterate bound caps the step size at Hyperparams::kAlphaCap.
Hyperparams theory_hyperparams_powerpp(int K, int H, int S, int A, double delta,
                                       double policy_var_bound, double q_var_bound,
                                       double c_beta = 1.0);

/// Visit counts accumulated over completed episodes: per step h, how often
/// each (s,a) pair and each (s,a,s') transition has occurred.
struct VisitCounts {
    int num_states = 0;
    int num_actions = 0;
    int horizon = 0;
    std::vector<long long> pair_counts;  // [H][S][A]
    std::vector<long long> next_counts;  // [H][S][A][S']

    VisitCounts() = default;
    VisitCounts(int S, int A, int H);

    long long pair(int h, int s, int a) const { return pair_counts[pair_index(h, s, a)]; }
    long long next(int h, int s, int a, int s2) const { return next_counts[next_index(h, s, a, s2)]; }
    void record(int h, int s, int a, int s2);

    /// Violations of pair[h][s][a] == sum_s' next[h][s][a][s'] and of the
    /// per-step total matching the number of completed episodes (pass -1 to
    /// skip the per-step total check).
    std::vector<std::string> consistency_violations(long long completed_episodes = -1) const;

    std::size_t pair_index(int h, int s, int a) const {
        return (static_cast<std::size_t>(h) * num_states + s) * num_actions + a;
    }
    std::size_t next_index(int h, int s, int a, int s2) const {
        return pair_index(h, s, a) * num_states + s2;
    }
};

/// Multiplicative-weights policy update: per state, the new action
/// distribution is proportional to prev(a) * exp(alpha * q(s,a)), computed
/// in log space with max subtraction so large exponents stay finite.
PolicyTable exp_weights_update(const PolicyTable& prev, const QTable& q_prev, double alpha);

/// Result of the optimistic count-based policy evaluation.
struct OptimisticEval {
    QTable q;
    VTable v;
    QTable bonus;   // beta / sqrt(count + lambda)
    QTable weight;  // empirical next-step value estimate
};

/// Backward optimistic evaluation with count-based least-squares weights:
///   w_h(s,a)   = sum_s' counts(h,s,a,s') * V_{h+1}(s') / (count(h,s,a) + lambda)
///   bonus      = beta / sqrt(count(h,s,a) + lambda)
///   Q_h(s,a)   = r_h(s,a) + clip(w_h + bonus, 0, H - h - 1)   (0-based h)
///   V_h(s)     = <Q_h(s,.), policy_h(.|s)>
/// Counts must be internally consistent or the call throws.
OptimisticEval evaluate_policy_optimistic(const VisitCounts& counts, const RewardTable& rewards,
                                          const PolicyTable& policy, double lambda, double beta);

enum class Variant { Power, PowerPP, UniformBaseline };

std::string variant_name(Variant v);

/// Everything recorded about one episode: the trajectory, the executed
/// policy, the end-of-episode evaluation and its bonus table (computed from
/// counts of strictly earlier episodes).
struct EpisodeRecord {
    int episode = 0;  // 1-based
    bool restarted = false;
    std::vector<int> states;   // H+1 entries
    std::vector<int> actions;  // H entries
    PolicyTable policy;
    QTable q;
    VTable v;
    QTable bonus;
    double visited_bonus = 0.0;  // sum_h bonus(h, s_h, a_h)
};

/// Complete record of one run: per-episode records plus the realized reward
/// tables. Immutable once returned.
struct RunTrace {
    int num_states = 0;
    int num_actions = 0;
    int horizon = 0;
    int num_episodes = 0;
    Variant variant = Variant::Power;
    Hyperparams hp;
    std::uint64_t seed = 0;
    std::vector<EpisodeRecord> episodes;
    std::vector<RewardTable> rewards;

    std::vector<QTable> q_iterates() const;
};

/// Mutable learner state threaded through episodes. Single-owner: one run
/// mutates it sequentially; parallelism happens across runs.
struct LearnerState {
    Variant variant = Variant::Power;
    Hyperparams hp;
    int completed_episodes = 0;
    VisitCounts counts;
    PolicyTable prev_policy;
    QTable prev_q;
    RewardTable prev_rewards;  // predictive variant only; zero before episode 1

    LearnerState(Variant variant, const Hyperparams& hp, int S, int A, int H);

    /// Restart fires when (k - 1) mod restart_cycle == 0 (1-based k): at
    /// episode 1, then every `restart_cycle` episodes; a cycle of 1
    /// restarts every episode.
    bool restart_due(int k) const { return (k - 1) % hp.restart_cycle == 0; }
};

/// Runs one episode of the restart learner: restart bookkeeping, the
/// multiplicative-weights update, the rollout against the simulator, the
/// end-of-episode optimistic evaluation (with pre-episode counts) and the
/// count update, in that order.
EpisodeRecord power_episode(LearnerState& state, const TabularMDP& mdp, const RewardTable& rewards,
                            int s1, Rng& rng);

/// One episode of the predictive learner: an intermediate update from the
/// previous iterate, an intermediate evaluation against the previous
/// episode's rewards, and a main update from the intermediate iterate; only
/// the main policy is executed.
EpisodeRecord powerpp_episode(LearnerState& state, const TabularMDP& mdp,
                              const RewardTable& rewards, int s1, Rng& rng);

enum class InitialStateRule { Fixed, Random };

struct RunOptions {
    InitialStateRule s1_rule = InitialStateRule::Fixed;
    int fixed_s1 = 0;
};

/// Drives a full K-episode run of the chosen variant against the schedule.
/// The uniform baseline is the restart learner with a zero step size.
RunTrace run_algorithm(const TabularMDP& mdp, const RewardSchedule& schedule, const Hyperparams& hp,
                       Variant variant, std::uint64_t seed, const RunOptions& options = {});

/// Text serialization of a trace (full precision); equal traces produce
/// equal strings, which is what the determinism tests compare.
std::string serialize_trace(const RunTrace& trace);

}  // namespace nsrl
