#include "nsrl/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nsrl {

namespace {

double clip01(double x) { return std::min(1.0, std::max(0.0, x)); }

void require_schedule_dims(int S, int A, int H, int K) {
    if (S < 1 || A < 1 || H < 1) throw std::invalid_argument("schedule: dimensions must be positive");
    if (K < 1) throw std::invalid_argument("schedule: number of episodes must be >= 1");
}

RewardTable fresh_table(int S, int A, int H, std::uint64_t seed, int episode) {
    Rng rng(seed);
    RewardTable table(S, A, H, episode);
    for (double& v : table.values) v = rng.uniform01();
    return table;
}

}  // namespace

TabularMDP make_random_mdp(int S, int A, int H, std::uint64_t seed, double mixing,
                           double concentration) {
    if (mixing < 0.0 || mixing > 1.0)
        throw std::invalid_argument("make_random_mdp: mixing must lie in [0,1]");
    if (!(concentration > 0.0))
        throw std::invalid_argument("make_random_mdp: concentration must be positive");
    TabularMDP mdp(S, A, H);
    Rng rng(seed);
    std::vector<double> draw(S);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                double total = 0.0;
                for (int next = 0; next < S; ++next) {
                    draw[next] = rng.gamma(concentration);
                    total += draw[next];
                }
                auto row = mdp.next_state_row(h, s, a);
                for (int next = 0; next < S; ++next)
                    row[next] = mixing >= 1.0
                                    ? 1.0 / S
                                    : (1.0 - mixing) * (draw[next] / total) + mixing / S;
            }
    return mdp;
}

ActionHistory::ActionHistory(int S, int A, int H) : num_states(S), num_actions(A), horizon(H) {
    period_counts.assign(static_cast<std::size_t>(H) * S * A, 0);
}

void ActionHistory::reset_period() {
    std::fill(period_counts.begin(), period_counts.end(), 0);
}

int ActionHistory::most_taken(int h, int s) const {
    long long best_count = 0;
    int best = -1;
    for (int a = 0; a < num_actions; ++a) {
        long long c = at(h, s, a);
        if (c > best_count) {
            best_count = c;
            best = a;
        }
    }
    return best;
}

RewardTable RewardSchedule::table_for(int k) const {
    if (is_adaptive())
        throw std::logic_error("adaptive schedule requires the learner history");
    if (k < 1 || k > num_episodes) throw std::out_of_range("episode index out of range");
    if (kind == ScheduleKind::Piecewise) {
        auto it = std::upper_bound(block_starts.begin(), block_starts.end(), k);
        int block = static_cast<int>(it - block_starts.begin()) - 1;
        return fresh_table(num_states, num_actions, horizon, mix_seed(seed, block), k);
    }
    // drift
    RewardTable table(num_states, num_actions, horizon, k);
    for (std::size_t i = 0; i < table.values.size(); ++i)
        table.values[i] = clip01(
            base[i] + amplitude * std::sin(2.0 * std::numbers::pi * k / period + phase[i]));
    return table;
}

RewardTable RewardSchedule::table_for(int k, const ActionHistory& history) const {
    if (!is_adaptive()) return table_for(k);
    if (k < 1 || k > num_episodes) throw std::out_of_range("episode index out of range");
    RewardTable table(num_states, num_actions, horizon, k);
    for (std::size_t i = 0; i < table.values.size(); ++i) table.values[i] = base[i];
    for (int h = 0; h < horizon; ++h)
        for (int s = 0; s < num_states; ++s) {
            int favored = history.most_taken(h, s);
            if (favored < 0) continue;
            double& r = table.at(h, s, favored);
            r = clip01(r - strength);
        }
    return table;
}

RewardSchedule schedule_piecewise(int S, int A, int H, int K, int num_changes, std::uint64_t seed) {
    require_schedule_dims(S, A, H, K);
    if (num_changes < 0 || num_changes >= K)
        throw std::invalid_argument("schedule_piecewise: need 0 <= num_changes < K");
    RewardSchedule sched;
    sched.kind = ScheduleKind::Piecewise;
    sched.num_states = S;
    sched.num_actions = A;
    sched.horizon = H;
    sched.num_episodes = K;
    sched.seed = seed;
    sched.num_changes = num_changes;
    // Change points drawn without replacement from {2, ..., K}.
    Rng rng(mix_seed(seed, 0));
    std::vector<int> candidates(K - 1);
    for (int i = 0; i < K - 1; ++i) candidates[i] = i + 2;
    for (int i = 0; i < num_changes; ++i) {
        int j = i + rng.uniform_int(static_cast<int>(candidates.size()) - i);
        std::swap(candidates[i], candidates[j]);
    }
    sched.block_starts.assign(candidates.begin(), candidates.begin() + num_changes);
    sched.block_starts.push_back(1);
    std::sort(sched.block_starts.begin(), sched.block_starts.end());
    return sched;
}

RewardSchedule schedule_drift(int S, int A, int H, int K, double amplitude, double period,
                              std::uint64_t seed) {
    require_schedule_dims(S, A, H, K);
    if (amplitude < 0.0 || amplitude > 0.5)
        throw std::invalid_argument("schedule_drift: amplitude must lie in [0, 0.5]");
    if (!(period >= 1.0)) throw std::invalid_argument("schedule_drift: period must be >= 1");
    RewardSchedule sched;
    sched.kind = ScheduleKind::Drift;
    sched.num_states = S;
    sched.num_actions = A;
    sched.horizon = H;
    sched.num_episodes = K;
    sched.seed = seed;
    sched.amplitude = amplitude;
    sched.period = period;
    Rng rng(seed);
    std::size_t n = static_cast<std::size_t>(H) * S * A;
    sched.base.resize(n);
    sched.phase.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        sched.base[i] = amplitude + (1.0 - 2.0 * amplitude) * rng.uniform01();
    for (std::size_t i = 0; i < n; ++i)
        sched.phase[i] = 2.0 * std::numbers::pi * rng.uniform01();
    return sched;
}

RewardSchedule schedule_adaptive(int S, int A, int H, int K, double strength, std::uint64_t seed) {
    require_schedule_dims(S, A, H, K);
    if (strength < 0.0 || strength > 1.0)
        throw std::invalid_argument("schedule_adaptive: strength must lie in [0,1]");
    RewardSchedule sched;
    sched.kind = ScheduleKind::Adaptive;
    sched.num_states = S;
    sched.num_actions = A;
    sched.horizon = H;
    sched.num_episodes = K;
    sched.seed = seed;
    sched.strength = strength;
    Rng rng(seed);
    sched.base.resize(static_cast<std::size_t>(H) * S * A);
    for (double& v : sched.base) v = rng.uniform01();
    return sched;
}

VariationSeries compute_policy_variation(const TabularMDP& mdp,
                                         const std::vector<RewardTable>& realized_rewards) {
    VariationSeries series;
    series.per_episode.assign(realized_rewards.size(), 0.0);
    if (realized_rewards.empty()) return series;
    OptimalSolution prev = dp_optimal(mdp, realized_rewards[0]);
    for (std::size_t k = 1; k < realized_rewards.size(); ++k) {
        OptimalSolution cur = dp_optimal(mdp, realized_rewards[k]);
        double contribution = 0.0;
        for (int h = 0; h < mdp.horizon; ++h) {
            double worst_state = 0.0;
            for (int s = 0; s < mdp.num_states; ++s) {
                double l1 = 0.0;
                for (int a = 0; a < mdp.num_actions; ++a)
                    l1 += std::abs(cur.policy.at(h, s, a) - prev.policy.at(h, s, a));
                worst_state = std::max(worst_state, l1);
            }
            contribution += worst_state;
        }
        series.per_episode[k] = contribution;
        series.total += contribution;
        prev = std::move(cur);
    }
    return series;
}

VariationSeries compute_q_variation(const std::vector<QTable>& iterates) {
    VariationSeries series;
    series.per_episode.assign(iterates.size(), 0.0);
    for (std::size_t k = 1; k < iterates.size(); ++k) {
        const QTable& cur = iterates[k];
        const QTable& prev = iterates[k - 1];
        if (cur.values.size() != prev.values.size())
            throw std::invalid_argument("compute_q_variation: iterate shapes differ");
        double contribution = 0.0;
        for (int h = 0; h < cur.horizon; ++h) {
            double worst_state = 0.0;
            for (int s = 0; s < cur.num_states; ++s) {
                double gap = 0.0;
                for (int a = 0; a < cur.num_actions; ++a)
                    gap = std::max(gap, std::abs(cur.at(h, s, a) - prev.at(h, s, a)));
                worst_state = std::max(worst_state, gap);
            }
            contribution += worst_state * worst_state;
        }
        series.per_episode[k] = contribution;
        series.total += contribution;
    }
    return series;
}

}  // namespace nsrl
