#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mbp/grid.hpp"
#include "mbp/nonlin.hpp"
#include "mbp/operators.hpp"
#include "mbp/stepper.hpp"

namespace mbp {

/// E = h^d ( -1/2 <v, L_h0 v>_W - <v, L_hc g>_W + sum_i W_i F(v_i) ).
/// The linear term makes grad E = -(L_h0 v + L_hc g + f(v)), so the flow is the gradient flow of E.
double discrete_energy(const OperatorSpec& op, const NonlinearSpec& spec, std::span<const double> v);
double discrete_energy(const OperatorSpec& op, const NonlinearSpec& spec, const Field& v);

/// Vector Ginzburg-Landau energy with potential (|u|^2 - 1)^2 / 4 and the same quadratic form per component.
double vector_energy(const OperatorSpec& op, const Field& u, const ComponentBoundary& boundary = {});

struct EnergyReport {
    std::vector<double> times;
    std::vector<double> energies;
    bool monotone = true;
    bool finite = true;
    std::optional<std::size_t> first_violation;
    double first_violation_magnitude = 0.0;
    std::size_t violation_count = 0;
    /// max_n E_n - E_0.
    double max_increase = 0.0;
};

/// Flags E_{n+1} > E_n + rel_tol (1 + |E_n|); NaN entries (not evaluated) are skipped.
EnergyReport monitor(std::span<const double> times, std::span<const double> energies, double rel_tol = 1e-10);
EnergyReport monitor(const RunRecord& record, double rel_tol = 1e-10);

}  // namespace mbp
