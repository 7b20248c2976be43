#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nsrl/diagnostics.hpp"
#include "nsrl/learner.hpp"
#include "nsrl/schedule.hpp"

namespace nsrl {

/// Full-precision text form of a double: parsing it back recovers the exact
/// value, which keeps the summary recomputable from the row-level CSV.
std::string format_double(double v);

/// FNV-1a 64-bit hash, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

/// Flat key = value experiment description. Every field has a documented
/// default except the seed list, which must be given explicitly.
struct ExperimentConfig {
    // mdp.*
    int S = 8;
    int A = 4;
    int H = 5;
    std::uint64_t mdp_seed = 1;
    double mixing = 0.0;
    // schedule.*
    ScheduleKind schedule_kind = ScheduleKind::Piecewise;
    int num_changes = 0;
    double amplitude = 0.1;
    double period = 0.0;  // 0 means "one full cycle": defaults to K
    double strength = 0.2;
    std::uint64_t schedule_seed = 2;
    // algo.*
    std::string variant = "power";  // power | powerpp | no-restart-ablation | uniform-baseline
    std::string hp_mode = "theory";  // theory | manual
    double delta = 0.01;
    double c_beta = 1.0;
    double p_t_bound = 0.0;
    bool p_t_oracle = false;  // algo.p_t_bound = oracle
    double d_t_bound = -1.0;  // unset: the generic bound K*H^3
    bool d_t_pilot = false;   // algo.d_t_bound = pilot
    double alpha_override = -1.0;   // manual mode only; < 0 means unset
    double tau_override = -1.0;
    double beta_override = -1.0;
    double lambda_override = -1.0;
    // run.*
    int K = 500;
    std::vector<std::uint64_t> seeds;
    std::string s1_rule = "fixed";  // fixed | random
    int s1 = 0;
    // out.*
    std::string out_dir = "out";
};

/// Strict parse of the flat config format. Unknown keys, malformed values
/// and out-of-range values throw std::runtime_error with one message per
/// offending line, each carrying its line number.
ExperimentConfig parse_config(const std::string& text);

/// Canonical echo with every key present (defaults filled in).
std::string echo_config(const ExperimentConfig& cfg);

/// Hash of the canonical echo; identifies the config in result rows.
std::string config_hash(const ExperimentConfig& cfg);

TabularMDP build_mdp(const ExperimentConfig& cfg);
RewardSchedule build_schedule(const ExperimentConfig& cfg);

/// Everything the harness keeps per seed once the trace has been reduced.
struct SeedOutcome {
    std::uint64_t seed = 0;
    std::vector<double> cum_dynamic;   // per episode
    std::vector<double> cum_static;    // per episode, final comparator
    std::vector<double> cum_bonus;     // per episode
    std::vector<double> cum_policy_var;  // realized optimal-policy drift so far
    std::vector<double> cum_q_var;       // realized iterate drift so far
    bool static_is_lower_bound = false;
    BonusSumCheck bonus_check;
    DecompositionReport decomposition;
    SandwichStats sandwich;
    double policy_var_total = 0.0;
    double q_var_total = 0.0;
    double q_var_bound_used = -1.0;  // predictive variant: bound behind alpha
    double final_dynamic = 0.0;
    double final_static = 0.0;
    bool diag_ok = false;
    double wall_ms = 0.0;
};

/// Runs one seed end to end (including the pilot pass when the predictive
/// variant uses a realized iterate-variation bound) and reduces the trace
/// to row series plus diagnostics.
SeedOutcome run_one_seed(const ExperimentConfig& cfg, const TabularMDP& mdp,
                         const RewardSchedule& schedule, std::uint64_t seed);

struct CliOptions {
    std::string out_dir;  // overrides cfg.out_dir when non-empty
    int workers = 1;
    std::uint64_t seed_offset = 0;
};

struct ExperimentResult {
    std::string hash;
    std::vector<SeedOutcome> outcomes;
    bool all_diag_ok = true;
};

/// Executes every seed of the config (in parallel when workers > 1), writes
/// rows.csv / summary.csv / config_echo.txt under the output directory, and
/// reports whether every deterministic invariant held.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const CliOptions& cli);

/// Re-runs the experiment once per axis value; emits sweep_rows.csv and
/// sweep_summary.csv, plus sweep_fit.csv (log-log slope of mean final
/// dynamic regret against the total step count) when the axis is run.K.
bool sweep(const ExperimentConfig& cfg, const std::string& axis, const std::vector<double>& values,
           const CliOptions& cli);

/// Invariant battery over built-in tiny instances plus a short run of the
/// configured experiment. Prints one line per check; true iff all pass.
bool run_checks(const ExperimentConfig& cfg, const CliOptions& cli);

/// Prints realized variation budgets and per-episode optimal values for the
/// configured instance (runs the first seed to realize them).
bool run_oracle(const ExperimentConfig& cfg, const CliOptions& cli);

}  // namespace nsrl
