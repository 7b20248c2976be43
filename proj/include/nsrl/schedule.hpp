#pragma once

#include <cstdint>
#include <vector>

#include "nsrl/mdp.hpp"

namespace nsrl {

/// Random instance generator. Kernel rows are drawn from a symmetric
/// Dirichlet (concentration 1 by default) and blended with the uniform
/// distribution: row = (1 - mixing) * dirichlet + mixing * uniform, so
/// mixing = 1 yields the uniform kernel exactly.
TabularMDP make_random_mdp(int S, int A, int H, std::uint64_t seed, double mixing,
                           double concentration = 1.0);

/// What an adaptive adversary may read about the learner: how often each
/// action has been taken at each (h, s) since the learner's last restart.
struct ActionHistory {
    int num_states = 0;
    int num_actions = 0;
    int horizon = 0;
    std::vector<long long> period_counts;  // [H][S][A]

    ActionHistory() = default;
    ActionHistory(int S, int A, int H);

    long long at(int h, int s, int a) const { return period_counts[index(h, s, a)]; }
    void record(int h, int s, int a) { ++period_counts[index(h, s, a)]; }
    void reset_period();

    /// Most-taken action at (h, s), lowest index on ties; -1 when unvisited.
    int most_taken(int h, int s) const;

    std::size_t index(int h, int s, int a) const {
        return (static_cast<std::size_t>(h) * num_states + s) * num_actions + a;
    }
};

enum class ScheduleKind { Piecewise, Drift, Adaptive };

/// Per-episode reward table supplier. Non-adaptive kinds are pure functions
/// of (episode, seed); the adaptive kind additionally reads the learner's
/// action history for the episodes played so far.
struct RewardSchedule {
    ScheduleKind kind = ScheduleKind::Piecewise;
    int num_states = 0;
    int num_actions = 0;
    int horizon = 0;
    int num_episodes = 0;
    std::uint64_t seed = 0;

    int num_changes = 0;              // piecewise
    std::vector<int> block_starts;    // piecewise: sorted, block_starts[0] == 1
    double amplitude = 0.0;           // drift
    double period = 1.0;              // drift
    double strength = 0.0;            // adaptive
    std::vector<double> base;         // [H][S][A] drift/adaptive base rewards
    std::vector<double> phase;        // [H][S][A] drift phases

    bool is_adaptive() const { return kind == ScheduleKind::Adaptive; }

    /// Rewards for 1-based episode k. Non-adaptive kinds only.
    RewardTable table_for(int k) const;

    /// Rewards for 1-based episode k given the learner history; required for
    /// the adaptive kind, equivalent to table_for(k) for the others.
    RewardTable table_for(int k, const ActionHistory& history) const;
};

/// num_changes fresh reward tables at change points drawn without
/// replacement from episodes 2..K; rewards are constant within each block.
RewardSchedule schedule_piecewise(int S, int A, int H, int K, int num_changes, std::uint64_t seed);

/// Sinusoidal drift around a safe base: r = base + amplitude * sin(2*pi*k /
/// period + phase), base in [amplitude, 1 - amplitude]. Per-(h,s,a) random
/// phases make the per-state optimal actions actually swap over time.
RewardSchedule schedule_drift(int S, int A, int H, int K, double amplitude, double period,
                              std::uint64_t seed);

/// Shifts reward away from the learner's most-taken action at each (h, s)
/// over the current restart period, by `strength`, clipped to [0,1].
RewardSchedule schedule_adaptive(int S, int A, int H, int K, double strength, std::uint64_t seed);

/// A variation budget together with its per-episode contributions; the
/// first episode contributes 0 by convention.
struct VariationSeries {
    double total = 0.0;
    std::vector<double> per_episode;  // [K], per_episode[0] == 0
};

/// Total sup-over-states l1 drift between optimal policies of consecutive
/// episodes, with the deterministic lowest-index tie-break of dp_optimal.
VariationSeries compute_policy_variation(const TabularMDP& mdp,
                                         const std::vector<RewardTable>& realized_rewards);

/// Total squared sup-norm drift between consecutive Q iterates:
/// sum_k sum_h max_s ||Q_h^k(s,.) - Q_h^{k-1}(s,.)||_inf^2.
VariationSeries compute_q_variation(const std::vector<QTable>& iterates);

}  // namespace nsrl
