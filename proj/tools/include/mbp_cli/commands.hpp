#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mbp_cli/config.hpp"

namespace mbp::cli {

struct GlobalOptions {
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::uint64_t> seed;
    /// 0 means one worker per hardware thread.
    unsigned threads = 0;
};

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitViolation = 2;

/// Runs body(i) for i in [0, n) on up to `threads` workers. The first exception is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

// ---- run ----

struct RunOutcome {
    RunRecord record;
    nlohmann::json summary;
    /// Relative sup-norm error against e^{lambda t} u0 when u0 is an eigenvector of L_h0 and the map is linear.
    std::optional<double> analytic_error;
};

RunOutcome run_experiment(const ExperimentConfig& cfg);

/// series.csv, field_t{time}.pgm/.csv and summary.json under `dir`.
void write_run_outputs(const ExperimentConfig& cfg, const RunOutcome& out, const std::filesystem::path& dir);

std::string series_csv(const RunRecord& record);

// ---- converge ----

struct ConvergenceRow {
    double tau;
    double error;
    /// error(previous tau) / error(this tau); absent on the first row.
    std::optional<double> ratio;
    std::optional<double> order;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    double tau_ref = 0.0;
    /// Least-squares slope of log(error) against log(tau).
    double slope = 0.0;
};

ConvergenceTable converge(const ExperimentConfig& cfg, std::vector<double> taus, double tau_ref, unsigned threads = 1);
std::string convergence_csv(const ConvergenceTable& table);

// ---- mbp-stress ----

struct StressRow {
    double tau;
    std::size_t steps;
    double kappa;
    bool control;
    double max_excess;
    std::size_t violations;
    std::string status;
};

struct StressReport {
    std::vector<StressRow> rows;
    double tolerance = 0.0;
    /// Compliant rows only.
    bool passed = true;
    /// Whether the under-stabilized control left the bound or blew up.
    std::optional<bool> control_violated;
};

/// Each tau runs `steps` steps with the configured kappa; the control reruns it with kappa = 0.
StressReport mbp_stress(const ExperimentConfig& cfg, const std::vector<double>& taus, std::size_t steps,
                        bool with_control = true, unsigned threads = 1);
std::string stress_csv(const StressReport& report);

// ---- verify-ops ----

struct SweepCase {
    std::string name;
    GridConfig grid;
    OperatorConfig op;
    /// Triplet file (`row,col,value`) checked instead of a constructed operator.
    std::optional<std::filesystem::path> fixture;
    std::string check = "zero_row_sum";
};

struct OpsRow {
    std::string name;
    std::string family;
    std::size_t n = 0;
    bool sign = true;
    bool dominance = true;
    bool constants = true;
    double row_identity = 0.0;
    /// Spectral vs dense phi_1 action; absent when either path is unavailable.
    std::optional<double> spectral_dense;
    /// Offending rows as `row:defect`.
    std::vector<std::string> failing_rows;
    std::string error;
    bool passed = true;
};

std::vector<SweepCase> default_sweep();
/// `[[case]]` tables with grid/operator keys and `[[fixture]]` tables with `name`, `file`, `check`.
std::vector<SweepCase> parse_sweep(const std::string& text, const std::filesystem::path& base_dir);
std::vector<OpsRow> verify_ops(const std::vector<SweepCase>& cases, unsigned threads = 1);
std::string ops_csv(const std::vector<OpsRow>& rows);

// ---- command entry points (write files, print a short report, return an exit code) ----

int cmd_run(const std::filesystem::path& config, const GlobalOptions& g, std::ostream& log);
int cmd_converge(const std::filesystem::path& config, const std::vector<double>& taus, double tau_ref,
                 const GlobalOptions& g, std::ostream& log);
int cmd_mbp_stress(const std::filesystem::path& config, const std::vector<double>& taus, std::size_t steps,
                   const GlobalOptions& g, std::ostream& log);
int cmd_verify_ops(const std::optional<std::filesystem::path>& sweep, const GlobalOptions& g, std::ostream& log);

}  // namespace mbp::cli
