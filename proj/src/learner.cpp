#include "nsrl/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace nsrl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_positive_dims(int K, int H, int S, int A) {
    if (K < 1 || H < 1 || S < 1 || A < 1)
        throw std::invalid_argument("theory hyperparameters: K, H, S, A must be positive");
}

void require_confidence(double delta) {
    if (!(delta > 0.0) || delta > 1.0)
        throw std::invalid_argument("delta must lie in (0,1]");
}

double bonus_multiplier(int K, int H, int S, int A, double delta, double c_beta) {
    double d = static_cast<double>(S) * A;
    double T = static_cast<double>(K) * H;
    return c_beta * H * std::sqrt(S * std::log(d * T / delta));
}

void append_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

double clamp(double x, double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("clamp: lower bound exceeds upper bound");
    return std::max(std::min(x, hi), lo);
}

Hyperparams theory_hyperparams_power(int K, int H, int S, int A, double delta,
                                     double policy_var_bound, double c_beta) {
    require_positive_dims(K, H, S, A);
    require_confidence(delta);
    if (policy_var_bound < 0.0)
        throw std::invalid_argument("policy variation bound must be non-negative");
    if (!(c_beta > 0.0)) throw std::invalid_argument("c_beta must be positive");
    const double T = static_cast<double>(K) * H;
    const double log_actions = std::log(static_cast<double>(A));
    double cycle_raw = policy_var_bound == 0.0
                           ? kInf
                           : std::pow(T * std::sqrt(log_actions) / (H * policy_var_bound), 2.0 / 3.0);
    Hyperparams hp;
    hp.delta = delta;
    hp.c_beta = c_beta;
    hp.lambda = 1.0;
    hp.restart_cycle = static_cast<int>(clamp(std::floor(cycle_raw), 1.0, static_cast<double>(K)));
    hp.num_periods = (K + hp.restart_cycle - 1) / hp.restart_cycle;
    hp.alpha = std::sqrt(hp.num_periods * log_actions / (static_cast<double>(K) * H * H));
    hp.beta = bonus_multiplier(K, H, S, A, delta, c_beta);
    return hp;
}

Hyperparams theory_hyperparams_powerpp(int K, int H, int S, int A, double delta,
                                       double policy_var_bound, double q_var_bound,
                                       double c_beta) {
    require_positive_dims(K, H, S, A);
    require_confidence(delta);
    if (policy_var_bound < 0.0 || q_var_bound < 0.0)
        throw std::invalid_argument("variation bounds must be non-negative");
    if (!(c_beta > 0.0)) throw std::invalid_argument("c_beta must be positive");
    const double T = static_cast<double>(K) * H;
    const double log_actions = std::log(static_cast<double>(A));
    double cycle_raw =
        policy_var_bound == 0.0
            ? kInf
            : std::pow(std::sqrt(q_var_bound * T * log_actions) /
                           (static_cast<double>(H) * H * policy_var_bound),
                       2.0 / 3.0);
    Hyperparams hp;
    hp.delta = delta;
    hp.c_beta = c_beta;
    hp.lambda = 1.0;
    hp.restart_cycle = static_cast<int>(clamp(std::floor(cycle_raw), 1.0, static_cast<double>(K)));
    hp.num_periods = (K + hp.restart_cycle - 1) / hp.restart_cycle;
    if (q_var_bound == 0.0) {
        std::cerr << "theory_hyperparams_powerpp: zero iterate-variation bound, "
                     "capping the step size at "
                  << Hyperparams::kAlphaCap << "\n";
        hp.alpha = Hyperparams::kAlphaCap;
    } else {
        hp.alpha = std::sqrt(hp.num_periods * H * log_actions / q_var_bound);
    }
    hp.beta = bonus_multiplier(K, H, S, A, delta, c_beta);
    return hp;
}

VisitCounts::VisitCounts(int S, int A, int H) : num_states(S), num_actions(A), horizon(H) {
    pair_counts.assign(static_cast<std::size_t>(H) * S * A, 0);
    next_counts.assign(static_cast<std::size_t>(H) * S * A * S, 0);
}

void VisitCounts::record(int h, int s, int a, int s2) {
    ++pair_counts[pair_index(h, s, a)];
    ++next_counts[next_index(h, s, a, s2)];
}

std::vector<std::string> VisitCounts::consistency_violations(long long completed_episodes) const {
    std::vector<std::string> violations;
    for (int h = 0; h < horizon; ++h) {
        long long step_total = 0;
        for (int s = 0; s < num_states; ++s)
            for (int a = 0; a < num_actions; ++a) {
                long long triples = 0;
                for (int s2 = 0; s2 < num_states; ++s2) triples += next(h, s, a, s2);
                long long pairs = pair(h, s, a);
                step_total += pairs;
                if (pairs != triples)
                    violations.push_back("pair count " + std::to_string(pairs) +
                                         " != transition total " + std::to_string(triples) +
                                         " at (h=" + std::to_string(h) + ",s=" + std::to_string(s) +
                                         ",a=" + std::to_string(a) + ")");
            }
        if (completed_episodes >= 0 && step_total != completed_episodes)
            violations.push_back("step " + std::to_string(h) + " holds " +
                                 std::to_string(step_total) + " visits, expected " +
                                 std::to_string(completed_episodes));
    }
    return violations;
}

PolicyTable exp_weights_update(const PolicyTable& prev, const QTable& q_prev, double alpha) {
    const int S = prev.num_states, A = prev.num_actions, H = prev.horizon;
    if (q_prev.num_states != S || q_prev.num_actions != A || q_prev.horizon != H)
        throw std::invalid_argument("exp_weights_update: shape mismatch");
    if (!std::isfinite(alpha) || alpha < 0.0)
        throw std::invalid_argument("exp_weights_update: step size must be finite and >= 0");
    if (alpha == 0.0) return prev;
    PolicyTable out(S, A, H);
    std::vector<double> logits(A);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) {
            double peak = -kInf;
            for (int a = 0; a < A; ++a) {
                double p = prev.at(h, s, a);
                double q = q_prev.at(h, s, a);
                if (!std::isfinite(q))
                    throw std::invalid_argument("exp_weights_update: non-finite action value");
                logits[a] = p > 0.0 ? std::log(p) + alpha * q : -kInf;
                peak = std::max(peak, logits[a]);
            }
            if (peak == -kInf)
                throw std::invalid_argument("exp_weights_update: all-zero action row at (h=" +
                                            std::to_string(h) + ",s=" + std::to_string(s) + ")");
            double total = 0.0;
            for (int a = 0; a < A; ++a) {
                double w = std::exp(logits[a] - peak);
                out.at(h, s, a) = w;
                total += w;
            }
            for (int a = 0; a < A; ++a) out.at(h, s, a) /= total;
        }
    return out;
}

OptimisticEval evaluate_policy_optimistic(const VisitCounts& counts, const RewardTable& rewards,
                                          const PolicyTable& policy, double lambda, double beta) {
    const int S = counts.num_states, A = counts.num_actions, H = counts.horizon;
    if (rewards.num_states != S || rewards.num_actions != A || rewards.horizon != H ||
        policy.num_states != S || policy.num_actions != A || policy.horizon != H)
        throw std::invalid_argument("evaluate_policy_optimistic: shape mismatch");
    if (!(lambda > 0.0))
        throw std::invalid_argument("evaluate_policy_optimistic: lambda must be positive");
    if (!(beta >= 0.0))
        throw std::invalid_argument("evaluate_policy_optimistic: beta must be non-negative");
    auto bad = counts.consistency_violations();
    if (!bad.empty())
        throw std::invalid_argument("evaluate_policy_optimistic: inconsistent counts: " + bad.front());

    OptimisticEval out;
    out.q = QTable(S, A, H);
    out.v = VTable(S, H);
    out.bonus = QTable(S, A, H);
    out.weight = QTable(S, A, H);
    for (int h = H - 1; h >= 0; --h) {
        const double cap = static_cast<double>(H - 1 - h);
        for (int s = 0; s < S; ++s) {
            double value = 0.0;
            for (int a = 0; a < A; ++a) {
                double denom = static_cast<double>(counts.pair(h, s, a)) + lambda;
                double w = 0.0;
                for (int s2 = 0; s2 < S; ++s2) {
                    long long c = counts.next(h, s, a, s2);
                    if (c != 0) w += static_cast<double>(c) * out.v.at(h + 1, s2);
                }
                w /= denom;
                double bonus = beta / std::sqrt(denom);
                double q = rewards.at(h, s, a) + clamp(w + bonus, 0.0, cap);
                out.weight.at(h, s, a) = w;
                out.bonus.at(h, s, a) = bonus;
                out.q.at(h, s, a) = q;
                value += policy.at(h, s, a) * q;
            }
            out.v.at(h, s) = value;
        }
    }
    return out;
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Power: return "power";
        case Variant::PowerPP: return "powerpp";
        case Variant::UniformBaseline: return "uniform-baseline";
    }
    return "unknown";
}

std::vector<QTable> RunTrace::q_iterates() const {
    std::vector<QTable> qs;
    qs.reserve(episodes.size());
    for (const EpisodeRecord& rec : episodes) qs.push_back(rec.q);
    return qs;
}

LearnerState::LearnerState(Variant variant_in, const Hyperparams& hp_in, int S, int A, int H)
    : variant(variant_in),
      hp(hp_in),
      counts(S, A, H),
      prev_policy(uniform_policy(S, A, H)),
      prev_q(S, A, H),
      prev_rewards(S, A, H) {
    if (hp.restart_cycle < 1)
        throw std::invalid_argument("restart cycle must be >= 1");
    if (!(hp.lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    if (!(hp.beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
    require_confidence(hp.delta);
}

namespace {

struct Rollout {
    std::vector<int> states;   // H+1
    std::vector<int> actions;  // H
};

Rollout roll_episode(const TabularMDP& mdp, const PolicyTable& policy, int s1, Rng& rng) {
    Rollout r;
    r.states.reserve(mdp.horizon + 1);
    r.actions.reserve(mdp.horizon);
    r.states.push_back(s1);
    int s = s1;
    for (int h = 0; h < mdp.horizon; ++h) {
        int a = rng.categorical(policy.action_row(h, s));
        int next = sample_transition(mdp, h, s, a, rng);
        r.actions.push_back(a);
        r.states.push_back(next);
        s = next;
    }
    return r;
}

EpisodeRecord finish_episode(LearnerState& state, const TabularMDP& mdp,
                             const RewardTable& rewards, const PolicyTable& policy,
                             Rollout&& rollout, int k, bool restarted) {
    // Evaluation first: the bonus table must reflect counts of strictly
    // earlier episodes, so this episode's visits are recorded afterwards.
    OptimisticEval eval =
        evaluate_policy_optimistic(state.counts, rewards, policy, state.hp.lambda, state.hp.beta);
    EpisodeRecord rec;
    rec.episode = k;
    rec.restarted = restarted;
    rec.states = std::move(rollout.states);
    rec.actions = std::move(rollout.actions);
    rec.policy = policy;
    rec.q = eval.q;
    rec.v = eval.v;
    rec.bonus = eval.bonus;
    for (int h = 0; h < mdp.horizon; ++h)
        rec.visited_bonus += eval.bonus.at(h, rec.states[h], rec.actions[h]);
    for (int h = 0; h < mdp.horizon; ++h)
        state.counts.record(h, rec.states[h], rec.actions[h], rec.states[h + 1]);
    state.prev_policy = policy;
    state.prev_q = std::move(eval.q);
    state.completed_episodes = k;
    return rec;
}

void apply_restart(LearnerState& state) {
    std::fill(state.prev_q.values.begin(), state.prev_q.values.end(), 0.0);
    state.prev_policy = uniform_policy(state.counts.num_states, state.counts.num_actions,
                                       state.counts.horizon);
}

}  // namespace

EpisodeRecord power_episode(LearnerState& state, const TabularMDP& mdp, const RewardTable& rewards,
                            int s1, Rng& rng) {
    const int k = state.completed_episodes + 1;
    const bool restarted = state.restart_due(k);
    if (restarted) apply_restart(state);
    PolicyTable policy = exp_weights_update(state.prev_policy, state.prev_q, state.hp.alpha);
    Rollout rollout = roll_episode(mdp, policy, s1, rng);
    return finish_episode(state, mdp, rewards, policy, std::move(rollout), k, restarted);
}

EpisodeRecord powerpp_episode(LearnerState& state, const TabularMDP& mdp,
                              const RewardTable& rewards, int s1, Rng& rng) {
    const int k = state.completed_episodes + 1;
    const bool restarted = state.restart_due(k);
    if (restarted) apply_restart(state);
    // Intermediate step from the predictable sequence; evaluated against the
    // previous episode's rewards and never executed.
    PolicyTable half_policy = exp_weights_update(state.prev_policy, state.prev_q, state.hp.alpha);
    OptimisticEval half_eval = evaluate_policy_optimistic(state.counts, state.prev_rewards,
                                                          half_policy, state.hp.lambda,
                                                          state.hp.beta);
    PolicyTable policy = exp_weights_update(state.prev_policy, half_eval.q, state.hp.alpha);
    Rollout rollout = roll_episode(mdp, policy, s1, rng);
    EpisodeRecord rec = finish_episode(state, mdp, rewards, policy, std::move(rollout), k, restarted);
    state.prev_rewards = rewards;
    return rec;
}

RunTrace run_algorithm(const TabularMDP& mdp, const RewardSchedule& schedule, const Hyperparams& hp,
                       Variant variant, std::uint64_t seed, const RunOptions& options) {
    const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
    const int K = schedule.num_episodes;
    if (schedule.num_states != S || schedule.num_actions != A || schedule.horizon != H)
        throw std::invalid_argument("run_algorithm: schedule shape does not match the MDP");
    if (auto bad = validate_mdp(mdp); !bad.empty())
        throw std::invalid_argument("run_algorithm: invalid MDP: " + bad.front());
    if (hp.restart_cycle > K)
        throw std::invalid_argument("run_algorithm: restart cycle exceeds the number of episodes");
    if (options.s1_rule == InitialStateRule::Fixed &&
        (options.fixed_s1 < 0 || options.fixed_s1 >= S))
        throw std::out_of_range("run_algorithm: initial state out of range");

    Hyperparams effective = hp;
    if (variant == Variant::UniformBaseline) effective.alpha = 0.0;

    RunTrace trace;
    trace.num_states = S;
    trace.num_actions = A;
    trace.horizon = H;
    trace.num_episodes = K;
    trace.variant = variant;
    trace.hp = effective;
    trace.seed = seed;
    trace.episodes.reserve(K);
    trace.rewards.reserve(K);

    LearnerState state(variant, effective, S, A, H);
    ActionHistory history(S, A, H);
    Rng rng(seed);
    for (int k = 1; k <= K; ++k) {
        int s1 = options.s1_rule == InitialStateRule::Fixed ? options.fixed_s1 : rng.uniform_int(S);
        // The adversary picks rewards from the history of episodes 1..k-1,
        // before the learner's restart resets the current period.
        RewardTable rewards =
            schedule.is_adaptive() ? schedule.table_for(k, history) : schedule.table_for(k);
        if (state.restart_due(k)) history.reset_period();
        EpisodeRecord rec = variant == Variant::PowerPP
                                ? powerpp_episode(state, mdp, rewards, s1, rng)
                                : power_episode(state, mdp, rewards, s1, rng);
        for (int h = 0; h < H; ++h) history.record(h, rec.states[h], rec.actions[h]);
        trace.episodes.push_back(std::move(rec));
        trace.rewards.push_back(std::move(rewards));
    }
    return trace;
}

std::string serialize_trace(const RunTrace& trace) {
    std::string out;
    out.reserve(trace.episodes.size() * 512 + 256);
    out += "variant=" + variant_name(trace.variant);
    out += " S=" + std::to_string(trace.num_states) + " A=" + std::to_string(trace.num_actions) +
           " H=" + std::to_string(trace.horizon) + " K=" + std::to_string(trace.num_episodes) +
           " seed=" + std::to_string(trace.seed) + "\nhp:";
    for (double v : {trace.hp.delta, trace.hp.alpha, static_cast<double>(trace.hp.restart_cycle),
                     static_cast<double>(trace.hp.num_periods), trace.hp.lambda, trace.hp.beta,
                     trace.hp.c_beta}) {
        out += ' ';
        append_double(out, v);
    }
    out += '\n';
    for (std::size_t k = 0; k < trace.episodes.size(); ++k) {
        const EpisodeRecord& rec = trace.episodes[k];
        out += "episode " + std::to_string(rec.episode) + (rec.restarted ? " restart\n" : "\n");
        out += "states:";
        for (int s : rec.states) out += ' ' + std::to_string(s);
        out += "\nactions:";
        for (int a : rec.actions) out += ' ' + std::to_string(a);
        out += "\npolicy:";
        for (double v : rec.policy.probs) {
            out += ' ';
            append_double(out, v);
        }
        out += "\nq:";
        for (double v : rec.q.values) {
            out += ' ';
            append_double(out, v);
        }
        out += "\nv:";
        for (double v : rec.v.values) {
            out += ' ';
            append_double(out, v);
        }
        out += "\nbonus:";
        for (double v : rec.bonus.values) {
            out += ' ';
            append_double(out, v);
        }
        out += "\nvisited_bonus: ";
        append_double(out, rec.visited_bonus);
        out += "\nrewards:";
        for (double v : trace.rewards[k].values) {
            out += ' ';
            append_double(out, v);
        }
        out += '\n';
    }
    return out;
}

}  // namespace nsrl
