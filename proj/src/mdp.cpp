#include "nsrl/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nsrl {

namespace {

std::string coords(int h, int s, int a) {
    return "(h=" + std::to_string(h) + ",s=" + std::to_string(s) + ",a=" + std::to_string(a) + ")";
}

void require_dims(int S, int A, int H) {
    if (S < 1 || A < 1 || H < 1)
        throw std::invalid_argument("dimensions must be positive, got S=" + std::to_string(S) +
                                    " A=" + std::to_string(A) + " H=" + std::to_string(H));
}

void require_index(int v, int n, const char* what) {
    if (v < 0 || v >= n)
        throw std::out_of_range(std::string(what) + " " + std::to_string(v) + " out of range [0," +
                                std::to_string(n) + ")");
}

}  // namespace

TabularMDP::TabularMDP(int S, int A, int H) : num_states(S), num_actions(A), horizon(H) {
    require_dims(S, A, H);
    kernels.assign(static_cast<std::size_t>(H) * S * A * S, 0.0);
}

std::span<const double> TabularMDP::next_state_row(int h, int s, int a) const {
    return {kernels.data() + kernel_index(h, s, a, 0), static_cast<std::size_t>(num_states)};
}

std::span<double> TabularMDP::next_state_row(int h, int s, int a) {
    return {kernels.data() + kernel_index(h, s, a, 0), static_cast<std::size_t>(num_states)};
}

RewardTable::RewardTable(int S, int A, int H, int episode_index)
    : num_states(S), num_actions(A), horizon(H), episode(episode_index) {
    require_dims(S, A, H);
    values.assign(static_cast<std::size_t>(H) * S * A, 0.0);
}

PolicyTable::PolicyTable(int S, int A, int H) : num_states(S), num_actions(A), horizon(H) {
    require_dims(S, A, H);
    probs.assign(static_cast<std::size_t>(H) * S * A, 0.0);
}

std::span<const double> PolicyTable::action_row(int h, int s) const {
    return {probs.data() + index(h, s, 0), static_cast<std::size_t>(num_actions)};
}

std::span<double> PolicyTable::action_row(int h, int s) {
    return {probs.data() + index(h, s, 0), static_cast<std::size_t>(num_actions)};
}

QTable::QTable(int S, int A, int H) : num_states(S), num_actions(A), horizon(H) {
    require_dims(S, A, H);
    values.assign(static_cast<std::size_t>(H) * S * A, 0.0);
}

std::span<const double> QTable::action_row(int h, int s) const {
    return {values.data() + index(h, s, 0), static_cast<std::size_t>(num_actions)};
}

VTable::VTable(int S, int H) : num_states(S), horizon(H) {
    values.assign(static_cast<std::size_t>(H + 1) * S, 0.0);
}

VisitationProfile::VisitationProfile(int S, int H) : num_states(S), horizon(H) {
    probs.assign(static_cast<std::size_t>(H) * S, 0.0);
}

PolicyTable uniform_policy(int S, int A, int H) {
    PolicyTable pi(S, A, H);
    std::fill(pi.probs.begin(), pi.probs.end(), 1.0 / A);
    return pi;
}

PolicyTable point_mass_policy(std::span<const int> actions, int S, int A, int H) {
    if (actions.size() != static_cast<std::size_t>(H) * S)
        throw std::invalid_argument("point_mass_policy: action list must have H*S entries");
    PolicyTable pi(S, A, H);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) {
            int a = actions[static_cast<std::size_t>(h) * S + s];
            require_index(a, A, "action");
            pi.at(h, s, a) = 1.0;
        }
    return pi;
}

std::vector<std::string> validate_mdp(const TabularMDP& mdp) {
    std::vector<std::string> violations;
    if (mdp.num_states < 1 || mdp.num_actions < 1 || mdp.horizon < 1) {
        violations.push_back("non-positive dimensions S=" + std::to_string(mdp.num_states) +
                             " A=" + std::to_string(mdp.num_actions) +
                             " H=" + std::to_string(mdp.horizon));
        return violations;
    }
    std::size_t expected =
        static_cast<std::size_t>(mdp.horizon) * mdp.num_states * mdp.num_actions * mdp.num_states;
    if (mdp.kernels.size() != expected) {
        violations.push_back("kernel storage has " + std::to_string(mdp.kernels.size()) +
                             " entries, expected " + std::to_string(expected));
        return violations;
    }
    for (int h = 0; h < mdp.horizon; ++h)
        for (int s = 0; s < mdp.num_states; ++s)
            for (int a = 0; a < mdp.num_actions; ++a) {
                double sum = 0.0;
                for (int next = 0; next < mdp.num_states; ++next) {
                    double p = mdp.p(h, s, a, next);
                    if (!std::isfinite(p))
                        violations.push_back("non-finite entry at " + coords(h, s, a) +
                                             " s'=" + std::to_string(next));
                    else if (p < 0.0)
                        violations.push_back("negative entry " + std::to_string(p) + " at " +
                                             coords(h, s, a) + " s'=" + std::to_string(next));
                    sum += p;
                }
                if (std::abs(sum - 1.0) > kDistTol)
                    violations.push_back("row sum " + std::to_string(sum) + " != 1 at " +
                                         coords(h, s, a));
            }
    return violations;
}

std::vector<std::string> validate_policy(const PolicyTable& policy) {
    std::vector<std::string> violations;
    for (int h = 0; h < policy.horizon; ++h)
        for (int s = 0; s < policy.num_states; ++s) {
            double sum = 0.0;
            for (int a = 0; a < policy.num_actions; ++a) {
                double p = policy.at(h, s, a);
                if (!std::isfinite(p) || p < 0.0)
                    violations.push_back("bad probability " + std::to_string(p) + " at " +
                                         coords(h, s, a));
                else
                    sum += p;
            }
            if (std::abs(sum - 1.0) > kDistTol)
                violations.push_back("action row sum " + std::to_string(sum) + " != 1 at (h=" +
                                     std::to_string(h) + ",s=" + std::to_string(s) + ")");
        }
    return violations;
}

int sample_transition(const TabularMDP& mdp, int h, int s, int a, Rng& rng) {
    require_index(h, mdp.horizon, "step");
    require_index(s, mdp.num_states, "state");
    require_index(a, mdp.num_actions, "action");
    return rng.categorical(mdp.next_state_row(h, s, a));
}

OptimalSolution dp_optimal(const TabularMDP& mdp, const RewardTable& rewards) {
    const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
    OptimalSolution out;
    out.v = VTable(S, H);
    out.q = QTable(S, A, H);
    out.policy = PolicyTable(S, A, H);
    out.greedy_action.assign(static_cast<std::size_t>(H) * S, 0);
    for (int h = H - 1; h >= 0; --h)
        for (int s = 0; s < S; ++s) {
            int best = 0;
            double best_value = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < A; ++a) {
                double continuation = 0.0;
                for (int next = 0; next < S; ++next)
                    continuation += mdp.p(h, s, a, next) * out.v.at(h + 1, next);
                double q = rewards.at(h, s, a) + continuation;
                out.q.at(h, s, a) = q;
                if (q > best_value) {  // strict: ties keep the lowest index
                    best_value = q;
                    best = a;
                }
            }
            out.v.at(h, s) = best_value;
            out.greedy_action[static_cast<std::size_t>(h) * S + s] = best;
            out.policy.at(h, s, best) = 1.0;
        }
    return out;
}

ExactEval evaluate_policy_exact(const TabularMDP& mdp, const RewardTable& rewards,
                                const PolicyTable& policy) {
    const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
    ExactEval out;
    out.v = VTable(S, H);
    out.q = QTable(S, A, H);
    for (int h = H - 1; h >= 0; --h)
        for (int s = 0; s < S; ++s) {
            double value = 0.0;
            for (int a = 0; a < A; ++a) {
                double continuation = 0.0;
                for (int next = 0; next < S; ++next)
                    continuation += mdp.p(h, s, a, next) * out.v.at(h + 1, next);
                double q = rewards.at(h, s, a) + continuation;
                out.q.at(h, s, a) = q;
                value += policy.at(h, s, a) * q;
            }
            out.v.at(h, s) = value;
        }
    return out;
}

VisitationProfile visitation_profile(const TabularMDP& mdp, const PolicyTable& policy, int s1) {
    const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
    require_index(s1, S, "state");
    VisitationProfile profile(S, H);
    profile.at(0, s1) = 1.0;
    for (int h = 0; h + 1 < H; ++h)
        for (int s = 0; s < S; ++s) {
            double mass = profile.at(h, s);
            if (mass == 0.0) continue;
            for (int a = 0; a < A; ++a) {
                double w = mass * policy.at(h, s, a);
                if (w == 0.0) continue;
                for (int next = 0; next < S; ++next)
                    profile.at(h + 1, next) += w * mdp.p(h, s, a, next);
            }
        }
    return profile;
}

KernelPolicyGap policy_kernel_distance(const TabularMDP& mdp, int h, const PolicyTable& a,
                                       const PolicyTable& b) {
    const int S = mdp.num_states, A = mdp.num_actions;
    require_index(h, mdp.horizon, "step");
    KernelPolicyGap gap;
    for (int s = 0; s < S; ++s) {
        double policy_l1 = 0.0;
        for (int act = 0; act < A; ++act) policy_l1 += std::abs(a.at(h, s, act) - b.at(h, s, act));
        double kernel_l1 = 0.0;
        for (int next = 0; next < S; ++next) {
            double pa = 0.0, pb = 0.0;
            for (int act = 0; act < A; ++act) {
                pa += mdp.p(h, s, act, next) * a.at(h, s, act);
                pb += mdp.p(h, s, act, next) * b.at(h, s, act);
            }
            kernel_l1 += std::abs(pa - pb);
        }
        gap.policy_gap = std::max(gap.policy_gap, policy_l1);
        gap.kernel_gap = std::max(gap.kernel_gap, kernel_l1);
    }
    return gap;
}

}  // namespace nsrl
