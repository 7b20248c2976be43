#pragma once

#include <vector>

#include "nsrl/learner.hpp"
#include "nsrl/mdp.hpp"

namespace nsrl {

/// Gap between an optimistic iterate and the true one-step backup of its own
/// value table: err(h,s,a) = r(h,s,a) + E_{s'~P}[v(h+1,s')] - q(h,s,a).
/// Computed with the simulator's ground-truth kernels.
QTable prediction_error(const TabularMDP& mdp, const RewardTable& rewards, const QTable& q,
                        const VTable& v);

/// Exact expectation of a per-(h,s,a) table along trajectories of `policy`
/// from s1, via forward propagation of the visitation profile:
/// sum_h sum_s profile_h(s) * sum_a policy(a|s) * f(h,s,a).
double expected_under_optimal(const TabularMDP& mdp, const PolicyTable& policy, const QTable& f,
                              int s1);

/// Martingale increments of one episode, one per step. Each term combines a
/// policy-sampling difference and a transition-sampling difference between
/// the optimistic iterate and the exact value of the executed policy; every
/// term is bounded by 4H in absolute value.
std::vector<double> martingale_terms(const TabularMDP& mdp, const RewardTable& rewards,
                                     const EpisodeRecord& record);

/// The dynamic regret of a run split into its three exact components. The
/// identity holds in exact arithmetic, so the residual only reflects float
/// accumulation over the K*H terms.
struct DecompositionReport {
    double dynamic_regret = 0.0;
    double performance_term = 0.0;  // expected update gap under per-episode optima
    double error_term = 0.0;        // prediction-error gap (expected minus realized)
    double martingale = 0.0;        // summed sampling-noise increments
    double residual = 0.0;
    double tolerance = 0.0;               // 1e-8 * max(1, |dynamic regret|)
    double max_abs_martingale_step = 0.0;
    bool residual_ok = false;
    bool martingale_bound_ok = false;  // every step within [-4H, 4H]
    bool ok = false;
};
DecompositionReport verify_decomposition(const TabularMDP& mdp, const RunTrace& trace);

/// Deterministic bound on the bonus collected along visited pairs:
/// lhs = sum_k sum_h bonus_k(h, s_h, a_h), rhs = beta*H*sqrt(2dK log((K+lambda)/lambda))
/// with d = S*A. Must hold exactly on every completed run.
struct BonusSumCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool ok = false;
};
BonusSumCheck verify_bonus_sum(const RunTrace& trace);

/// Violation statistics of the optimism sandwich -2*bonus <= err <= 0 over
/// all (episode, h, s, a) cells of a run. A high-probability property, so
/// this is reported as a rate rather than asserted.
struct SandwichStats {
    long long violations = 0;
    long long cells = 0;
    double rate = 0.0;
};
SandwichStats ucb_sandwich_stats(const TabularMDP& mdp, const RunTrace& trace);

/// Dynamic and static regret of a run. The static comparator maximizes the
/// summed value over episodes: computed exactly from the episode-averaged
/// rewards when the initial state is constant, by enumerating deterministic
/// policies when S*A*H <= 24, and otherwise replaced by the best
/// per-episode optimal policy, which yields a lower bound on static regret
/// (flagged as such).
struct RegretReport {
    std::vector<double> instant_dynamic;      // [K], each in [0, H]
    std::vector<double> cumulative_dynamic;   // [K]
    std::vector<double> cumulative_static;    // [K], uses the final comparator
    std::vector<double> optimal_value;        // per-episode optimal value at s1
    std::vector<double> executed_value;       // exact value of the executed policy
    std::vector<double> comparator_value;     // value of the static comparator
    double dynamic_total = 0.0;
    double static_total = 0.0;
    bool static_is_lower_bound = false;
};
RegretReport regret_report(const TabularMDP& mdp, const RunTrace& trace);

}  // namespace nsrl
