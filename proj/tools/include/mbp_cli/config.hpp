#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mbp/nonlin.hpp"
#include "mbp/operators.hpp"
#include "mbp/stepper.hpp"

namespace mbp::cli {

struct GridConfig {
    int d = 2;
    /// Per-axis [lo, hi]; one interval is broadcast to every axis.
    std::vector<Interval> box{{0.0, 1.0}};
    int M0 = 64;
    std::string bc = "periodic";
    /// Dirichlet data id: zero, constant, sin_t (g_value sin(t) psi(x), psi = prod cos(pi xi)).
    std::string g = "zero";
    double g_value = 0.0;

    bool operator==(const GridConfig&) const = default;
};

struct OperatorConfig {
    std::string family = "laplacian";
    double eps2 = 1.0;
    double delta = 0.0;
    std::string kernel = "constant";
    double s = 0.5;
    std::string gamma = "2";
    int quadrature_points = 64;

    bool operator==(const OperatorConfig&) const = default;
};

struct NonlinearityConfig {
    std::string family = "double_well";
    double lambda = 1.0;
    int p = 2;
    double theta = 0.8;
    double theta_c = 1.6;
    double R = 1.0;
    double T = 1.0;
    double a = 1.0;
    double b = 1.0;
    std::optional<double> beta;
    std::optional<double> kappa;
    bool allow_unsafe_kappa = false;

    bool operator==(const NonlinearityConfig&) const = default;
};

struct FieldConfig {
    std::string kind = "scalar";
    int m = 1;

    bool operator==(const FieldConfig&) const = default;
};

struct InitialConfig {
    /// uniform (random in [-amplitude, amplitude]), constant, mode (amplitude prod sin(k_a x_a)).
    std::string kind = "uniform";
    double amplitude = 0.9;
    double value = 0.0;
    std::vector<int> mode{1};

    bool operator==(const InitialConfig&) const = default;
};

struct StepperBlock {
    std::string scheme = "etdrk2";
    double tau = 0.01;
    double T = 1.0;
    std::string exp_strategy = "spectral";
    double krylov_tol = 1e-12;
    int krylov_max_dim = 64;

    bool operator==(const StepperBlock&) const = default;
};

struct OutputConfig {
    std::string dir = "out";
    std::vector<double> snapshot_times;
    int energy_cadence = 1;

    bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    GridConfig grid;
    OperatorConfig op;
    NonlinearityConfig nonlinearity;
    FieldConfig field;
    InitialConfig initial;
    StepperBlock stepper;
    OutputConfig output;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Unknown keys and bad values raise ConfigError naming the field path.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& cfg);

ExperimentConfig parse_config(const std::string& text, bool json_format);
std::string serialize_config(const ExperimentConfig& cfg, bool json_format = false);

/// `.json` files are read as JSON, everything else as TOML.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Cross-field checks (operator family vs bc and dimension, field kind vs nonlinearity, ...).
void validate(const ExperimentConfig& cfg);

/// Everything a run needs, built from a validated config.
struct Problem {
    std::shared_ptr<const OperatorSpec> op;
    NonlinearSpec spec;
    StepperConfig stepper_config;
    ComponentBoundary component_boundary;
    FieldKind kind = FieldKind::Scalar;
    std::size_t m = 1;
};

Grid make_grid(const GridConfig& g, FieldKind kind = FieldKind::Scalar);
std::shared_ptr<const OperatorSpec> make_operator(const OperatorConfig& o, const Grid& grid);
NonlinearSpec make_nonlinearity(const NonlinearityConfig& n);
Problem build_problem(const ExperimentConfig& cfg);
Stepper make_stepper(const Problem& p);
Field initial_field(const ExperimentConfig& cfg, const Problem& p);

}  // namespace mbp::cli
