#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mbp/expkernel.hpp"
#include "mbp/grid.hpp"
#include "mbp/nonlin.hpp"
#include "mbp/operators.hpp"

namespace mbp {

enum class Scheme { Etd1, Etdrk2 };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& name);

struct StepperConfig {
    Scheme scheme = Scheme::Etdrk2;
    double tau = 0.01;
    double kappa = 2.0;
    double t_final = 1.0;
    ExpStrategy strategy = ExpStrategy::Spectral;
    KrylovOptions krylov;
    bool allow_unsafe_kappa = false;
    /// Energy is evaluated every `energy_cadence` steps and at the last step; 0 disables it.
    std::size_t energy_cadence = 1;
    std::vector<double> snapshot_times;

    /// Allowed overshoot of the bound: 1e-12, or 10x the Krylov tolerance on that path.
    double mbp_tolerance() const;
};

/// Dirichlet data for multi-component fields: writes the components of g(t, x) into `out`.
using ComponentBoundaryFunction = std::function<void(double, std::span<const double>, std::span<double>)>;

struct ComponentBoundary {
    ComponentBoundaryFunction g;
    bool time_dependent = false;
};

class Stepper {
public:
    /// Scalar field; Dirichlet data comes from the operator's grid.
    static Stepper scalar(std::shared_ptr<const OperatorSpec> op, NonlinearSpec spec, StepperConfig cfg);
    /// Vector field with m components, double-well nonlinearity.
    static Stepper vector(std::shared_ptr<const OperatorSpec> op, std::size_t m, StepperConfig cfg,
                          ComponentBoundary boundary = {});
    /// Symmetric m x m field; periodic or homogeneous Dirichlet only.
    static Stepper matrix(std::shared_ptr<const OperatorSpec> op, std::size_t m, StepperConfig cfg);

    Field step(const Field& v, double t) const;
    Field etd1_step(const Field& v, double t) const;
    Field etdrk2_step(const Field& v, double t) const;

    const StepperConfig& config() const { return cfg_; }
    const OperatorSpec& op() const { return *op_; }
    std::shared_ptr<const OperatorSpec> op_ptr() const { return op_; }
    const StabilizedMap& map() const { return map_; }
    const PhiEvaluator& evaluator() const { return eval_; }
    double bound() const { return map_.beta(); }
    double mbp_tolerance() const { return cfg_.mbp_tolerance(); }

    /// L_hc g(t) for each evolved component.
    std::vector<std::vector<double>> forcing(double t) const;

private:
    Stepper(std::shared_ptr<const OperatorSpec> op, StabilizedMap map, StepperConfig cfg, ComponentBoundary boundary);

    void check_field(const Field& v) const;
    std::vector<std::vector<double>> split(const Field& v) const;
    Field join(const Field& like, const std::vector<std::vector<double>>& comps) const;
    std::vector<std::vector<double>> nonlinear(const Field& v) const;

    std::shared_ptr<const OperatorSpec> op_;
    StabilizedMap map_;
    StepperConfig cfg_;
    ComponentBoundary boundary_;
    PhiEvaluator eval_;
    /// Evolved entries of a node block (the upper triangle for matrix fields).
    std::vector<std::size_t> evolved_;
    std::vector<std::vector<double>> cached_forcing_;
    bool has_forcing_ = false;
};

enum class RunStatus { Completed, NonFinite, DomainViolation, ExponentialFailure };

std::string to_string(RunStatus s);

struct Violation {
    std::size_t step;
    double time;
    double excess;
};

struct Snapshot {
    double time;
    Field field;
};

struct RunRecord {
    std::vector<double> times;
    std::vector<double> sup_norms;
    /// NaN where energy was not evaluated.
    std::vector<double> energies;
    std::vector<Violation> violations;
    std::vector<Snapshot> snapshots;
    RunStatus status = RunStatus::Completed;
    std::string message;
    Field final_state;
    double bound = 0.0;
    double wall_seconds = 0.0;

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    /// max_n sup_norm_n - bound.
    double max_excess() const;
};

struct Monitors {
    std::function<double(const Field&)> energy;
    std::function<void(std::size_t, double, const Field&)> on_step;
};

/// Number of steps tau needs to reach t_final exactly; throws when t_final is not a multiple of tau.
std::size_t step_count(double t_final, double tau);

RunRecord run(const Stepper& stepper, const Field& initial, const Monitors& monitors = {});

}  // namespace mbp
