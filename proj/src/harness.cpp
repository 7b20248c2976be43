#include "nsrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace nsrl {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[40];
    for (int prec : {15, 16, 17}) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

struct ParseCtx {
    int line = 0;
    std::vector<std::string>* errors = nullptr;

    void fail(const std::string& msg) const {
        errors->push_back("line " + std::to_string(line) + ": " + msg);
    }
};

bool parse_long(const std::string& v, long long& out) {
    char* end = nullptr;
    out = std::strtoll(v.c_str(), &end, 10);
    return end && *end == '\0' && !v.empty();
}

bool parse_real(const std::string& v, double& out) {
    char* end = nullptr;
    out = std::strtod(v.c_str(), &end);
    return end && *end == '\0' && !v.empty();
}

bool parse_seed_list(const std::string& v, std::vector<std::uint64_t>& out) {
    out.clear();
    for (const std::string& raw : split(v, ',')) {
        std::string tok = trim(raw);
        if (tok.empty()) return false;
        std::size_t dots = tok.find("..");
        if (dots != std::string::npos) {
            long long lo = 0, hi = 0;
            if (!parse_long(trim(tok.substr(0, dots)), lo) ||
                !parse_long(trim(tok.substr(dots + 2)), hi) || lo < 0 || hi < lo)
                return false;
            for (long long s = lo; s <= hi; ++s) out.push_back(static_cast<std::uint64_t>(s));
        } else {
            long long s = 0;
            if (!parse_long(tok, s) || s < 0) return false;
            out.push_back(static_cast<std::uint64_t>(s));
        }
    }
    return !out.empty();
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::vector<std::string> errors;
    bool seeds_given = false;

    ParseCtx ctx;
    ctx.errors = &errors;

    auto want_int = [&](const std::string& v, int lo, int hi, int& dst, const char* what) {
        long long parsed = 0;
        if (!parse_long(v, parsed) || parsed < lo || parsed > hi)
            ctx.fail(std::string(what) + " must be an integer in [" + std::to_string(lo) + "," +
                     std::to_string(hi) + "], got '" + v + "'");
        else
            dst = static_cast<int>(parsed);
    };
    auto want_seed = [&](const std::string& v, std::uint64_t& dst, const char* what) {
        long long parsed = 0;
        if (!parse_long(v, parsed) || parsed < 0)
            ctx.fail(std::string(what) + " must be a non-negative integer, got '" + v + "'");
        else
            dst = static_cast<std::uint64_t>(parsed);
    };
    auto want_real = [&](const std::string& v, double lo, double hi, double& dst,
                         const char* what) {
        double parsed = 0;
        if (!parse_real(v, parsed) || !(parsed >= lo) || !(parsed <= hi))
            ctx.fail(std::string(what) + " must lie in [" + format_double(lo) + "," +
                     format_double(hi) + "], got '" + v + "'");
        else
            dst = parsed;
    };

    int line_no = 0;
    for (const std::string& raw_line : split(text, '\n')) {
        ++line_no;
        ctx.line = line_no;
        std::string line = raw_line;
        if (std::size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            ctx.fail("expected 'key = value', got '" + line + "'");
            continue;
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.empty()) {
            ctx.fail("missing value for key '" + key + "'");
            continue;
        }

        if (key == "mdp.S") want_int(value, 1, 1 << 20, cfg.S, "mdp.S");
        else if (key == "mdp.A") want_int(value, 1, 1 << 20, cfg.A, "mdp.A");
        else if (key == "mdp.H") want_int(value, 1, 1 << 20, cfg.H, "mdp.H");
        else if (key == "mdp.seed") want_seed(value, cfg.mdp_seed, "mdp.seed");
        else if (key == "mdp.mixing") want_real(value, 0.0, 1.0, cfg.mixing, "mdp.mixing");
        else if (key == "schedule.kind") {
            if (value == "piecewise") cfg.schedule_kind = ScheduleKind::Piecewise;
            else if (value == "drift") cfg.schedule_kind = ScheduleKind::Drift;
            else if (value == "adaptive") cfg.schedule_kind = ScheduleKind::Adaptive;
            else ctx.fail("schedule.kind must be piecewise|drift|adaptive, got '" + value + "'");
        } else if (key == "schedule.num_changes")
            want_int(value, 0, 1 << 30, cfg.num_changes, "schedule.num_changes");
        else if (key == "schedule.amplitude")
            want_real(value, 0.0, 0.5, cfg.amplitude, "schedule.amplitude");
        else if (key == "schedule.period") {
            double parsed = 0;
            if (!parse_real(value, parsed) || !(parsed >= 1.0))
                ctx.fail("schedule.period must be >= 1, got '" + value + "'");
            else
                cfg.period = parsed;
        } else if (key == "schedule.strength")
            want_real(value, 0.0, 1.0, cfg.strength, "schedule.strength");
        else if (key == "schedule.seed") want_seed(value, cfg.schedule_seed, "schedule.seed");
        else if (key == "algo.variant") {
            if (value == "power" || value == "powerpp" || value == "no-restart-ablation" ||
                value == "uniform-baseline")
                cfg.variant = value;
            else
                ctx.fail("algo.variant must be power|powerpp|no-restart-ablation|uniform-baseline, "
                         "got '" + value + "'");
        } else if (key == "algo.mode") {
            if (value == "theory" || value == "manual") cfg.hp_mode = value;
            else ctx.fail("algo.mode must be theory|manual, got '" + value + "'");
        } else if (key == "algo.delta") {
            double parsed = 0;
            if (!parse_real(value, parsed) || !(parsed > 0.0) || parsed > 1.0)
                ctx.fail("delta must lie in (0,1]");
            else
                cfg.delta = parsed;
        } else if (key == "algo.c_beta") {
            double parsed = 0;
            if (!parse_real(value, parsed) || !(parsed > 0.0))
                ctx.fail("algo.c_beta must be positive, got '" + value + "'");
            else
                cfg.c_beta = parsed;
        } else if (key == "algo.p_t_bound") {
            if (value == "oracle") {
                cfg.p_t_oracle = true;
                cfg.p_t_bound = 0.0;
            } else {
                cfg.p_t_oracle = false;
                double parsed = 0;
                if (!parse_real(value, parsed) || parsed < 0.0)
                    ctx.fail("algo.p_t_bound must be a non-negative number or 'oracle'");
                else
                    cfg.p_t_bound = parsed;
            }
        } else if (key == "algo.d_t_bound") {
            if (value == "pilot") {
                cfg.d_t_pilot = true;
                cfg.d_t_bound = -1.0;
            } else if (value == "generic") {
                cfg.d_t_pilot = false;
                cfg.d_t_bound = -1.0;
            } else {
                cfg.d_t_pilot = false;
                double parsed = 0;
                if (!parse_real(value, parsed) || parsed < 0.0)
                    ctx.fail("algo.d_t_bound must be a non-negative number, 'generic' or 'pilot'");
                else
                    cfg.d_t_bound = parsed;
            }
        } else if (key == "algo.alpha") {
            double parsed = 0;
            if (value == "unset") cfg.alpha_override = -1.0;
            else if (!parse_real(value, parsed) || !(parsed >= 0.0))
                ctx.fail("algo.alpha must be >= 0, got '" + value + "'");
            else
                cfg.alpha_override = parsed;
        } else if (key == "algo.tau") {
            double parsed = 0;
            if (value == "unset") cfg.tau_override = -1.0;
            else if (!parse_real(value, parsed) || !(parsed >= 1.0))
                ctx.fail("algo.tau must be >= 1, got '" + value + "'");
            else
                cfg.tau_override = parsed;
        } else if (key == "algo.beta") {
            double parsed = 0;
            if (value == "unset") cfg.beta_override = -1.0;
            else if (!parse_real(value, parsed) || !(parsed >= 0.0))
                ctx.fail("algo.beta must be >= 0, got '" + value + "'");
            else
                cfg.beta_override = parsed;
        } else if (key == "algo.lambda") {
            double parsed = 0;
            if (value == "unset") cfg.lambda_override = -1.0;
            else if (!parse_real(value, parsed) || !(parsed > 0.0))
                ctx.fail("algo.lambda must be positive, got '" + value + "'");
            else
                cfg.lambda_override = parsed;
        } else if (key == "run.K")
            want_int(value, 1, 1 << 30, cfg.K, "run.K");
        else if (key == "run.seeds") {
            if (!parse_seed_list(value, cfg.seeds))
                ctx.fail("run.seeds must be a non-empty list like '1,2,5' or '0..19'");
            else
                seeds_given = true;
        } else if (key == "run.s1_rule") {
            if (value == "fixed" || value == "random") cfg.s1_rule = value;
            else ctx.fail("run.s1_rule must be fixed|random, got '" + value + "'");
        } else if (key == "run.s1")
            want_int(value, 0, 1 << 30, cfg.s1, "run.s1");
        else if (key == "out.dir")
            cfg.out_dir = value;
        else
            ctx.fail("unknown key '" + key + "'");
    }

    if (!seeds_given) errors.push_back("missing required key run.seeds");
    if (cfg.s1 >= cfg.S && cfg.s1_rule == "fixed")
        errors.push_back("run.s1 = " + std::to_string(cfg.s1) + " out of range for mdp.S = " +
                         std::to_string(cfg.S));
    if (cfg.num_changes >= cfg.K)
        errors.push_back("schedule.num_changes must be < run.K");
    if (cfg.hp_mode == "manual" &&
        (cfg.alpha_override < 0.0 || cfg.tau_override < 0.0 || cfg.beta_override < 0.0 ||
         cfg.lambda_override <= 0.0))
        errors.push_back("algo.mode = manual requires algo.alpha, algo.tau, algo.beta, algo.lambda");

    if (!errors.empty()) {
        std::string msg = "config errors:";
        for (const std::string& e : errors) msg += "\n  " + e;
        throw std::runtime_error(msg);
    }
    return cfg;
}

std::string echo_config(const ExperimentConfig& cfg) {
    std::string out;
    auto emit = [&](const std::string& key, const std::string& value) {
        out += key + " = " + value + "\n";
    };
    emit("mdp.S", std::to_string(cfg.S));
    emit("mdp.A", std::to_string(cfg.A));
    emit("mdp.H", std::to_string(cfg.H));
    emit("mdp.seed", std::to_string(cfg.mdp_seed));
    emit("mdp.mixing", format_double(cfg.mixing));
    switch (cfg.schedule_kind) {
        case ScheduleKind::Piecewise: emit("schedule.kind", "piecewise"); break;
        case ScheduleKind::Drift: emit("schedule.kind", "drift"); break;
        case ScheduleKind::Adaptive: emit("schedule.kind", "adaptive"); break;
    }
    emit("schedule.num_changes", std::to_string(cfg.num_changes));
    emit("schedule.amplitude", format_double(cfg.amplitude));
    emit("schedule.period", format_double(cfg.period == 0.0 ? static_cast<double>(cfg.K) : cfg.period));
    emit("schedule.strength", format_double(cfg.strength));
    emit("schedule.seed", std::to_string(cfg.schedule_seed));
    emit("algo.variant", cfg.variant);
    emit("algo.mode", cfg.hp_mode);
    emit("algo.delta", format_double(cfg.delta));
    emit("algo.c_beta", format_double(cfg.c_beta));
    emit("algo.p_t_bound", cfg.p_t_oracle ? "oracle" : format_double(cfg.p_t_bound));
    emit("algo.d_t_bound", cfg.d_t_pilot ? "pilot"
                                         : (cfg.d_t_bound < 0.0 ? "generic" : format_double(cfg.d_t_bound)));
    emit("algo.alpha", cfg.alpha_override < 0.0 ? "unset" : format_double(cfg.alpha_override));
    emit("algo.tau", cfg.tau_override < 0.0 ? "unset" : format_double(cfg.tau_override));
    emit("algo.beta", cfg.beta_override < 0.0 ? "unset" : format_double(cfg.beta_override));
    emit("algo.lambda", cfg.lambda_override <= 0.0 ? "unset" : format_double(cfg.lambda_override));
    emit("run.K", std::to_string(cfg.K));
    std::string seeds;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        if (i) seeds += ',';
        seeds += std::to_string(cfg.seeds[i]);
    }
    emit("run.seeds", seeds);
    emit("run.s1_rule", cfg.s1_rule);
    emit("run.s1", std::to_string(cfg.s1));
    emit("out.dir", cfg.out_dir);
    return out;
}

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(echo_config(cfg)); }

TabularMDP build_mdp(const ExperimentConfig& cfg) {
    return make_random_mdp(cfg.S, cfg.A, cfg.H, cfg.mdp_seed, cfg.mixing);
}

RewardSchedule build_schedule(const ExperimentConfig& cfg) {
    switch (cfg.schedule_kind) {
        case ScheduleKind::Piecewise:
            return schedule_piecewise(cfg.S, cfg.A, cfg.H, cfg.K, cfg.num_changes,
                                      cfg.schedule_seed);
        case ScheduleKind::Drift:
            return schedule_drift(cfg.S, cfg.A, cfg.H, cfg.K, cfg.amplitude,
                                  cfg.period == 0.0 ? static_cast<double>(cfg.K) : cfg.period,
                                  cfg.schedule_seed);
        case ScheduleKind::Adaptive:
            return schedule_adaptive(cfg.S, cfg.A, cfg.H, cfg.K, cfg.strength, cfg.schedule_seed);
    }
    throw std::logic_error("unreachable schedule kind");
}

namespace {

Variant variant_of(const ExperimentConfig& cfg) {
    if (cfg.variant == "powerpp") return Variant::PowerPP;
    if (cfg.variant == "uniform-baseline") return Variant::UniformBaseline;
    return Variant::Power;  // power and no-restart-ablation
}

double generic_q_var_bound(const ExperimentConfig& cfg) {
    return static_cast<double>(cfg.K) * cfg.H * cfg.H * cfg.H;
}

/// Effective upper bound on the optimal-policy variation for theory mode.
double effective_policy_var_bound(const ExperimentConfig& cfg, const TabularMDP& mdp,
                                  const RewardSchedule& schedule) {
    if (!cfg.p_t_oracle) return cfg.p_t_bound;
    if (schedule.is_adaptive())
        throw std::runtime_error(
            "algo.p_t_bound = oracle is undefined for adaptive schedules (measure post hoc)");
    std::vector<RewardTable> tables;
    tables.reserve(cfg.K);
    for (int k = 1; k <= cfg.K; ++k) tables.push_back(schedule.table_for(k));
    return compute_policy_variation(mdp, tables).total;
}

Hyperparams resolve_hyperparams(const ExperimentConfig& cfg, double policy_var_bound,
                                double q_var_bound) {
    if (cfg.hp_mode == "manual") {
        Hyperparams hp;
        hp.delta = cfg.delta;
        hp.c_beta = cfg.c_beta;
        hp.alpha = cfg.alpha_override;
        hp.restart_cycle = cfg.variant == "no-restart-ablation"
                               ? cfg.K
                               : static_cast<int>(cfg.tau_override);
        hp.restart_cycle = std::min(hp.restart_cycle, cfg.K);
        hp.num_periods = (cfg.K + hp.restart_cycle - 1) / hp.restart_cycle;
        hp.beta = cfg.beta_override;
        hp.lambda = cfg.lambda_override;
        return hp;
    }
    if (cfg.variant == "powerpp")
        return theory_hyperparams_powerpp(cfg.K, cfg.H, cfg.S, cfg.A, cfg.delta, policy_var_bound,
                                          q_var_bound, cfg.c_beta);
    if (cfg.variant == "no-restart-ablation")
        return theory_hyperparams_power(cfg.K, cfg.H, cfg.S, cfg.A, cfg.delta, 0.0, cfg.c_beta);
    return theory_hyperparams_power(cfg.K, cfg.H, cfg.S, cfg.A, cfg.delta, policy_var_bound,
                                    cfg.c_beta);
}

RunOptions run_options(const ExperimentConfig& cfg) {
    RunOptions opt;
    opt.s1_rule = cfg.s1_rule == "random" ? InitialStateRule::Random : InitialStateRule::Fixed;
    opt.fixed_s1 = cfg.s1;
    return opt;
}

std::vector<double> cumulative(const std::vector<double>& per_episode) {
    std::vector<double> cum(per_episode.size());
    double total = 0.0;
    for (std::size_t i = 0; i < per_episode.size(); ++i) {
        total += per_episode[i];
        cum[i] = total;
    }
    return cum;
}

}  // namespace

SeedOutcome run_one_seed(const ExperimentConfig& cfg, const TabularMDP& mdp,
                         const RewardSchedule& schedule, std::uint64_t seed) {
    auto started = std::chrono::steady_clock::now();
    SeedOutcome out;
    out.seed = seed;

    double policy_var_bound = effective_policy_var_bound(cfg, mdp, schedule);
    Variant variant = variant_of(cfg);
    RunOptions options = run_options(cfg);

    double q_var_bound = cfg.d_t_bound >= 0.0 ? cfg.d_t_bound : generic_q_var_bound(cfg);
    if (variant == Variant::PowerPP && cfg.d_t_pilot && cfg.hp_mode == "theory") {
        // Pilot pass with the generic bound; the measured iterate variation
        // of the pilot run then backs the step size of the reported run.
        Hyperparams pilot_hp =
            resolve_hyperparams(cfg, policy_var_bound, generic_q_var_bound(cfg));
        RunTrace pilot = run_algorithm(mdp, schedule, pilot_hp, variant, seed, options);
        q_var_bound = compute_q_variation(pilot.q_iterates()).total;
    }
    out.q_var_bound_used = variant == Variant::PowerPP ? q_var_bound : -1.0;

    Hyperparams hp = resolve_hyperparams(cfg, policy_var_bound, q_var_bound);
    RunTrace trace = run_algorithm(mdp, schedule, hp, variant, seed, options);

    RegretReport regret = regret_report(mdp, trace);
    VariationSeries policy_var = compute_policy_variation(mdp, trace.rewards);
    VariationSeries q_var = compute_q_variation(trace.q_iterates());
    out.bonus_check = verify_bonus_sum(trace);
    out.decomposition = verify_decomposition(mdp, trace);
    out.sandwich = ucb_sandwich_stats(mdp, trace);

    out.cum_dynamic = regret.cumulative_dynamic;
    out.cum_static = regret.cumulative_static;
    std::vector<double> visited(trace.num_episodes);
    for (int k = 0; k < trace.num_episodes; ++k) visited[k] = trace.episodes[k].visited_bonus;
    out.cum_bonus = cumulative(visited);
    out.cum_policy_var = cumulative(policy_var.per_episode);
    out.cum_q_var = cumulative(q_var.per_episode);
    out.static_is_lower_bound = regret.static_is_lower_bound;
    out.policy_var_total = policy_var.total;
    out.q_var_total = q_var.total;
    out.final_dynamic = regret.dynamic_total;
    out.final_static = regret.static_total;
    out.diag_ok = out.bonus_check.ok && out.decomposition.ok;
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();
    return out;
}

namespace {

const char* kRowHeader =
    "config_hash,seed,episode,algorithm,cum_dyn_regret,cum_static_regret,static_is_lower_bound,"
    "cum_bonus,cum_policy_var,cum_q_var,decomp_residual,diag_ok\n";

void write_rows(std::ostream& os, const std::string& hash, const ExperimentConfig& cfg,
                const std::vector<SeedOutcome>& outcomes, const std::string& prefix) {
    for (const SeedOutcome& oc : outcomes) {
        const int K = static_cast<int>(oc.cum_dynamic.size());
        for (int k = 0; k < K; ++k) {
            os << prefix << hash << ',' << oc.seed << ',' << (k + 1) << ',' << cfg.variant << ','
               << format_double(oc.cum_dynamic[k]) << ',' << format_double(oc.cum_static[k]) << ','
               << (oc.static_is_lower_bound ? 1 : 0) << ',' << format_double(oc.cum_bonus[k]) << ','
               << format_double(oc.cum_policy_var[k]) << ',' << format_double(oc.cum_q_var[k])
               << ',';
            if (k + 1 == K) os << format_double(oc.decomposition.residual);
            os << ',' << (oc.diag_ok ? 1 : 0) << '\n';
        }
    }
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe out;
    if (xs.empty()) return out;
    double sum = 0.0;
    for (double x : xs) sum += x;
    out.mean = sum / xs.size();
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(ss / (xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
    }
    return out;
}

// Wall time is kept out of the CSVs: the result files are byte-deterministic
// functions of (config, seed), timings go to the timing.txt sidecar.
const char* kSummaryHeader =
    "config_hash,algorithm,K,num_seeds,final_dyn_mean,final_dyn_se,final_static_mean,"
    "final_static_se,policy_var_mean,q_var_mean,bonus_ok_count,decomp_ok_count,max_abs_residual,"
    "sandwich_rate_mean\n";

std::string summary_row(const std::string& hash, const ExperimentConfig& cfg,
                        const std::vector<SeedOutcome>& outcomes) {
    std::vector<double> dyn, stat, pv, qv, rates;
    int bonus_ok = 0, decomp_ok = 0;
    double max_residual = 0.0;
    for (const SeedOutcome& oc : outcomes) {
        dyn.push_back(oc.final_dynamic);
        stat.push_back(oc.final_static);
        pv.push_back(oc.policy_var_total);
        qv.push_back(oc.q_var_total);
        rates.push_back(oc.sandwich.rate);
        bonus_ok += oc.bonus_check.ok ? 1 : 0;
        decomp_ok += oc.decomposition.ok ? 1 : 0;
        max_residual = std::max(max_residual, std::abs(oc.decomposition.residual));
    }
    MeanSe d = mean_se(dyn), s = mean_se(stat), p = mean_se(pv), q = mean_se(qv), r = mean_se(rates);
    std::string row = hash;
    row += ',' + cfg.variant;
    row += ',' + std::to_string(cfg.K);
    row += ',' + std::to_string(outcomes.size());
    for (double v : {d.mean, d.se, s.mean, s.se, p.mean, q.mean}) row += ',' + format_double(v);
    row += ',' + std::to_string(bonus_ok);
    row += ',' + std::to_string(decomp_ok);
    row += ',' + format_double(max_residual);
    row += ',' + format_double(r.mean);
    row += '\n';
    return row;
}

std::vector<SeedOutcome> run_all_seeds(const ExperimentConfig& cfg, const CliOptions& cli) {
    TabularMDP mdp = build_mdp(cfg);
    RewardSchedule schedule = build_schedule(cfg);
    std::vector<std::uint64_t> seeds = cfg.seeds;
    for (std::uint64_t& s : seeds) s += cli.seed_offset;

    std::vector<SeedOutcome> outcomes(seeds.size());
    int workers = std::max(1, cli.workers);
    if (workers == 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i)
            outcomes[i] = run_one_seed(cfg, mdp, schedule, seeds[i]);
        return outcomes;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= seeds.size()) return;
                try {
                    outcomes[i] = run_one_seed(cfg, mdp, schedule, seeds[i]);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return outcomes;
}

fs::path output_dir(const ExperimentConfig& cfg, const CliOptions& cli) {
    return fs::path(cli.out_dir.empty() ? cfg.out_dir : cli.out_dir);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const CliOptions& cli) {
    ExperimentResult result;
    result.hash = config_hash(cfg);
    result.outcomes = run_all_seeds(cfg, cli);
    for (const SeedOutcome& oc : result.outcomes) result.all_diag_ok &= oc.diag_ok;

    fs::path dir = output_dir(cfg, cli);
    fs::create_directories(dir);
    {
        std::ofstream echo(dir / "config_echo.txt", std::ios::binary);
        echo << echo_config(cfg);
    }
    {
        std::ofstream rows(dir / "rows.csv", std::ios::binary);
        rows << kRowHeader;
        write_rows(rows, result.hash, cfg, result.outcomes, "");
    }
    {
        std::ofstream summary(dir / "summary.csv", std::ios::binary);
        summary << kSummaryHeader;
        summary << summary_row(result.hash, cfg, result.outcomes);
    }
    {
        double wall = 0.0;
        for (const SeedOutcome& oc : result.outcomes) wall += oc.wall_ms;
        std::ofstream timing(dir / "timing.txt", std::ios::binary);
        timing << "wall_ms_total " << format_double(wall) << "\n";
    }
    return result;
}

namespace {

ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis, double value) {
    ExperimentConfig cfg = base;
    auto as_int = [&](const char* what) {
        double rounded = std::round(value);
        if (std::abs(rounded - value) > 1e-9)
            throw std::runtime_error(std::string("sweep: ") + what + " needs integer values");
        return static_cast<int>(rounded);
    };
    if (axis == "run.K") cfg.K = as_int("run.K");
    else if (axis == "mdp.S") cfg.S = as_int("mdp.S");
    else if (axis == "mdp.A") cfg.A = as_int("mdp.A");
    else if (axis == "mdp.H") cfg.H = as_int("mdp.H");
    else if (axis == "mdp.mixing") cfg.mixing = value;
    else if (axis == "schedule.num_changes") cfg.num_changes = as_int("schedule.num_changes");
    else if (axis == "schedule.amplitude") cfg.amplitude = value;
    else if (axis == "schedule.period") cfg.period = value;
    else if (axis == "schedule.strength") cfg.strength = value;
    else if (axis == "algo.delta") cfg.delta = value;
    else if (axis == "algo.c_beta") cfg.c_beta = value;
    else if (axis == "algo.p_t_bound") { cfg.p_t_bound = value; cfg.p_t_oracle = false; }
    else if (axis == "algo.d_t_bound") { cfg.d_t_bound = value; cfg.d_t_pilot = false; }
    else if (axis == "algo.alpha") cfg.alpha_override = value;
    else if (axis == "algo.tau") cfg.tau_override = value;
    else if (axis == "algo.beta") cfg.beta_override = value;
    else if (axis == "algo.lambda") cfg.lambda_override = value;
    else throw std::runtime_error("sweep: axis '" + axis + "' is not a numeric config key");
    return cfg;
}

std::string axis_dir_name(const std::string& axis, double value) {
    std::string name = axis + "=" + format_double(value);
    for (char& c : name)
        if (c == '.') c = '_';
    return name;
}

}  // namespace

bool sweep(const ExperimentConfig& base, const std::string& axis,
           const std::vector<double>& values, const CliOptions& cli) {
    if (values.empty()) throw std::runtime_error("sweep: no axis values given");
    fs::path root = output_dir(base, cli);
    fs::create_directories(root);

    std::ofstream rows(root / "sweep_rows.csv", std::ios::binary);
    rows << "axis,axis_value," << (kRowHeader + 0);
    std::ofstream summary(root / "sweep_summary.csv", std::ios::binary);
    summary << "axis,axis_value," << (kSummaryHeader + 0);

    bool all_ok = true;
    std::vector<double> mean_final(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        ExperimentConfig cfg = apply_axis(base, axis, values[i]);
        CliOptions sub = cli;
        sub.out_dir = (root / axis_dir_name(axis, values[i])).string();
        ExperimentResult res = run_experiment(cfg, sub);
        all_ok &= res.all_diag_ok;

        std::string prefix = axis + "," + format_double(values[i]) + ",";
        write_rows(rows, res.hash, cfg, res.outcomes, prefix);
        summary << prefix << summary_row(res.hash, cfg, res.outcomes);

        std::vector<double> finals;
        for (const SeedOutcome& oc : res.outcomes) finals.push_back(oc.final_dynamic);
        mean_final[i] = mean_se(finals).mean;
    }

    if (axis == "run.K") {
        // Least-squares fit of log(mean final dynamic regret) vs log(T).
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < values.size(); ++i) {
            double T = values[i] * base.H;
            if (mean_final[i] > 0.0 && T > 0.0) {
                xs.push_back(std::log(T));
                ys.push_back(std::log(mean_final[i]));
            }
        }
        double slope = 0.0, intercept = 0.0;
        if (xs.size() >= 2) {
            double mx = 0.0, my = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                mx += xs[i];
                my += ys[i];
            }
            mx /= xs.size();
            my /= ys.size();
            double sxy = 0.0, sxx = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                sxy += (xs[i] - mx) * (ys[i] - my);
                sxx += (xs[i] - mx) * (xs[i] - mx);
            }
            slope = sxy / sxx;
            intercept = my - slope * mx;
        }
        std::ofstream fit(root / "sweep_fit.csv", std::ios::binary);
        fit << "axis,num_points,loglog_slope,loglog_intercept\n";
        fit << axis << ',' << xs.size() << ',' << format_double(slope) << ','
            << format_double(intercept) << '\n';
    }
    return all_ok;
}

namespace {

struct CheckTable {
    bool all_ok = true;

    void report(const std::string& name, bool ok, const std::string& detail = "") {
        all_ok &= ok;
        std::cout << "CHECK " << name << ": " << (ok ? "PASS" : "FAIL");
        if (!detail.empty()) std::cout << " (" << detail << ")";
        std::cout << "\n";
    }
};

/// Exhaustive best deterministic-policy value from a fixed start state.
double brute_force_optimal_value(const TabularMDP& mdp, const RewardTable& rewards, int s1) {
    const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
    std::vector<int> assignment(static_cast<std::size_t>(H) * S, 0);
    double best = -std::numeric_limits<double>::infinity();
    for (;;) {
        PolicyTable pi = point_mass_policy(assignment, S, A, H);
        best = std::max(best, evaluate_policy_exact(mdp, rewards, pi).v.at(0, s1));
        std::size_t i = 0;
        while (i < assignment.size() && ++assignment[i] == A) assignment[i++] = 0;
        if (i == assignment.size()) break;
    }
    return best;
}

}  // namespace

bool run_checks(const ExperimentConfig& cfg, const CliOptions& cli) {
    CheckTable table;

    // Generator output is always a valid MDP.
    TabularMDP good = make_random_mdp(4, 3, 3, 7, 0.1);
    table.report("mdp-validate-accepts-generated", validate_mdp(good).empty());

    // A corrupted kernel row surfaces with its coordinates.
    TabularMDP corrupt = good;
    corrupt.p(1, 2, 0, 0) -= 0.1;
    auto violations = validate_mdp(corrupt);
    bool flagged = !violations.empty() &&
                   violations.front().find("(h=1,s=2,a=0)") != std::string::npos;
    table.report("mdp-validate-flags-corruption", flagged,
                 violations.empty() ? "no violation reported" : violations.front());

    // Backward induction equals brute-force policy enumeration.
    {
        bool ok = true;
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            TabularMDP mdp = make_random_mdp(3, 2, 3, 100 + trial, 0.0);
            Rng rng(200 + trial);
            RewardTable rewards(3, 2, 3);
            for (double& v : rewards.values) v = rng.uniform01();
            double dp = dp_optimal(mdp, rewards).v.at(0, 0);
            double brute = brute_force_optimal_value(mdp, rewards, 0);
            worst = std::max(worst, std::abs(dp - brute));
            ok &= std::abs(dp - brute) <= 1e-10;
        }
        table.report("dp-matches-brute-force", ok, "max gap " + format_double(worst));
    }

    // Exact evaluation satisfies the step-wise backup identity.
    {
        TabularMDP mdp = make_random_mdp(5, 3, 4, 11, 0.0);
        Rng rng(12);
        RewardTable rewards(5, 3, 4);
        for (double& v : rewards.values) v = rng.uniform01();
        PolicyTable pi = uniform_policy(5, 3, 4);
        ExactEval eval = evaluate_policy_exact(mdp, rewards, pi);
        double residual = 0.0;
        for (int h = 0; h < 4; ++h)
            for (int s = 0; s < 5; ++s)
                for (int a = 0; a < 3; ++a) {
                    double backup = rewards.at(h, s, a);
                    for (int s2 = 0; s2 < 5; ++s2)
                        backup += mdp.p(h, s, a, s2) * eval.v.at(h + 1, s2);
                    residual = std::max(residual, std::abs(eval.q.at(h, s, a) - backup));
                }
        table.report("bellman-residual", residual <= 1e-12, format_double(residual));
    }

    // Visitation profiles stay normalized.
    {
        TabularMDP mdp = make_random_mdp(6, 2, 5, 13, 0.0);
        VisitationProfile prof = visitation_profile(mdp, uniform_policy(6, 2, 5), 0);
        double worst = 0.0;
        for (int h = 0; h < 5; ++h) {
            double sum = 0.0;
            for (int s = 0; s < 6; ++s) sum += prof.at(h, s);
            worst = std::max(worst, std::abs(sum - 1.0));
        }
        table.report("visitation-normalized", worst <= 1e-12, format_double(worst));
    }

    // Induced-kernel distance never exceeds the policy distance.
    {
        bool ok = true;
        Rng rng(17);
        for (int trial = 0; trial < 200; ++trial) {
            TabularMDP mdp = make_random_mdp(4, 3, 3, 300 + trial, 0.0);
            PolicyTable a = uniform_policy(4, 3, 3), b = uniform_policy(4, 3, 3);
            for (double& v : a.probs) v = rng.uniform01();
            for (double& v : b.probs) v = rng.uniform01();
            for (int h = 0; h < 3; ++h)
                for (int s = 0; s < 4; ++s) {
                    double sa = 0.0, sb = 0.0;
                    for (int act = 0; act < 3; ++act) {
                        sa += a.at(h, s, act);
                        sb += b.at(h, s, act);
                    }
                    for (int act = 0; act < 3; ++act) {
                        a.at(h, s, act) /= sa;
                        b.at(h, s, act) /= sb;
                    }
                }
            for (int h = 0; h < 3; ++h) {
                KernelPolicyGap gap = policy_kernel_distance(mdp, h, a, b);
                ok &= gap.kernel_gap <= gap.policy_gap + 1e-12;
            }
        }
        table.report("smoothness-ratio", ok);
    }

    // The exact optimum dominates random policies.
    {
        bool ok = true;
        TabularMDP mdp = make_random_mdp(4, 3, 4, 19, 0.0);
        Rng rng(20);
        RewardTable rewards(4, 3, 4);
        for (double& v : rewards.values) v = rng.uniform01();
        OptimalSolution opt = dp_optimal(mdp, rewards);
        for (int trial = 0; trial < 100; ++trial) {
            PolicyTable pi = uniform_policy(4, 3, 4);
            for (double& v : pi.probs) v = rng.uniform01();
            for (int h = 0; h < 4; ++h)
                for (int s = 0; s < 4; ++s) {
                    double sum = 0.0;
                    for (int a = 0; a < 3; ++a) sum += pi.at(h, s, a);
                    for (int a = 0; a < 3; ++a) pi.at(h, s, a) /= sum;
                }
            ExactEval eval = evaluate_policy_exact(mdp, rewards, pi);
            for (int s = 0; s < 4; ++s) ok &= opt.v.at(0, s) >= eval.v.at(0, s) - 1e-12;
        }
        table.report("optimality-dominance", ok);
    }

    // Relabeling actions permutes the optimal policy but not its value.
    {
        TabularMDP mdp = make_random_mdp(4, 3, 3, 23, 0.0);
        Rng rng(24);
        RewardTable rewards(4, 3, 3);
        for (double& v : rewards.values) v = rng.uniform01();
        const int perm[3] = {2, 0, 1};
        TabularMDP permuted(4, 3, 3);
        RewardTable permuted_rewards(4, 3, 3);
        for (int h = 0; h < 3; ++h)
            for (int s = 0; s < 4; ++s)
                for (int a = 0; a < 3; ++a) {
                    permuted_rewards.at(h, s, perm[a]) = rewards.at(h, s, a);
                    for (int s2 = 0; s2 < 4; ++s2)
                        permuted.p(h, s, perm[a], s2) = mdp.p(h, s, a, s2);
                }
        double v0 = dp_optimal(mdp, rewards).v.at(0, 0);
        double v1 = dp_optimal(permuted, permuted_rewards).v.at(0, 0);
        table.report("action-relabel-value-invariance", std::abs(v0 - v1) <= 1e-12,
                     format_double(std::abs(v0 - v1)));
    }

    // Theory cycle with a zero variation bound never restarts after episode 1.
    {
        Hyperparams hp = theory_hyperparams_power(50, 3, 4, 3, 0.1, 0.0);
        bool ok = hp.restart_cycle == 50 && hp.num_periods == 1;
        table.report("theory-no-restart-at-zero-variation", ok);
    }

    // Short run of the configured experiment: deterministic invariants.
    {
        ExperimentConfig small = cfg;
        small.K = std::min(cfg.K, 60);
        small.num_changes = std::min(small.num_changes, small.K - 1);
        small.seeds = {cfg.seeds.empty() ? 1 : cfg.seeds.front() + cli.seed_offset};
        TabularMDP mdp = build_mdp(small);
        RewardSchedule schedule = build_schedule(small);
        SeedOutcome oc = run_one_seed(small, mdp, schedule, small.seeds.front());
        table.report("short-run-decomposition", oc.decomposition.ok,
                     "residual " + format_double(oc.decomposition.residual));
        table.report("short-run-bonus-lemma", oc.bonus_check.ok,
                     format_double(oc.bonus_check.lhs) + " <= " +
                         format_double(oc.bonus_check.rhs));
        bool dominance = true;
        for (std::size_t k = 0; k < oc.cum_dynamic.size(); ++k)
            dominance &= oc.cum_dynamic[k] >= oc.cum_static[k] - 1e-10;
        table.report("short-run-dynamic-dominates-static", dominance);
    }

    return table.all_ok;
}

bool run_oracle(const ExperimentConfig& cfg, const CliOptions& cli) {
    TabularMDP mdp = build_mdp(cfg);
    RewardSchedule schedule = build_schedule(cfg);
    std::uint64_t seed = cfg.seeds.front() + cli.seed_offset;
    SeedOutcome oc = run_one_seed(cfg, mdp, schedule, seed);

    std::cout << "config_hash " << config_hash(cfg) << "\n";
    std::cout << "seed " << seed << "\n";
    std::cout << "realized_policy_variation " << format_double(oc.policy_var_total) << "\n";
    std::cout << "realized_q_variation " << format_double(oc.q_var_total) << "\n";

    // Per-episode optimal values of the realized schedule from the run's
    // initial states. Recomputed here to print them; cheap at desk scale.
    Hyperparams hp = resolve_hyperparams(cfg, cfg.p_t_oracle ? oc.policy_var_total : cfg.p_t_bound,
                                         oc.q_var_bound_used >= 0 ? oc.q_var_bound_used
                                                                  : generic_q_var_bound(cfg));
    RunTrace trace = run_algorithm(mdp, schedule, hp, variant_of(cfg), seed, run_options(cfg));
    std::cout << "episode optimal_value\n";
    for (int k = 0; k < trace.num_episodes; ++k) {
        OptimalSolution opt = dp_optimal(mdp, trace.rewards[k]);
        std::cout << (k + 1) << ' ' << format_double(opt.v.at(0, trace.episodes[k].states[0]))
                  << "\n";
    }
    return true;
}

}  // namespace nsrl
