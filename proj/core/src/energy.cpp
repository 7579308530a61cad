#include "mbp/energy.hpp"

#include <cmath>

namespace mbp {

namespace {

void check_energy_bc(const OperatorSpec& op, bool time_dependent) {
    if (op.grid().bc_kind() == BcKind::Dirichlet && time_dependent)
        throw ConfigError("energy is undefined for time-dependent dirichlet data");
}

double cell_volume(const Grid& g) { return std::pow(g.h(), g.dim()); }

/// -1/2 <v, L v>_W - <v, L_hc g>_W.
double quadratic_part(const OperatorSpec& op, std::span<const double> v, const std::vector<double>& w,
                      const std::vector<double>& forcing) {
    auto lv = apply(op, v);
    double q = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        q -= 0.5 * w[i] * v[i] * lv[i];
        if (!forcing.empty()) q -= w[i] * v[i] * forcing[i];
    }
    return q;
}

}  // namespace

double discrete_energy(const OperatorSpec& op, const NonlinearSpec& spec, std::span<const double> v) {
    check_energy_bc(op, op.grid().bc().time_dependent);
    if (!spec.potential) throw Error("nonlinearity has no potential");
    if (v.size() != op.size()) throw Error("field length does not match operator");
    const auto w = op.grid().weights();
    std::vector<double> forcing;
    if (op.grid().bc_kind() == BcKind::Dirichlet && op.grid().bc().g) forcing = boundary_forcing(op, 0.0);
    double e = quadratic_part(op, v, w, forcing);
    for (std::size_t i = 0; i < v.size(); ++i) e += w[i] * spec.potential(v[i]);
    return cell_volume(op.grid()) * e;
}

double discrete_energy(const OperatorSpec& op, const NonlinearSpec& spec, const Field& v) {
    if (v.kind() != FieldKind::Scalar) throw Error("discrete_energy needs a scalar field");
    return discrete_energy(op, spec, v.values());
}

double vector_energy(const OperatorSpec& op, const Field& u, const ComponentBoundary& boundary) {
    if (u.kind() != FieldKind::Vector) throw Error("vector_energy needs a vector field");
    if (u.nodes() != op.size()) throw Error("field length does not match operator");
    check_energy_bc(op, boundary.time_dependent);
    const auto w = op.grid().weights();
    const std::size_t m = u.m();
    std::vector<std::vector<double>> forcing(m);
    if (op.grid().bc_kind() == BcKind::Dirichlet && boundary.g && op.constraint_count() > 0) {
        std::vector<std::vector<double>> vals(m, std::vector<double>(op.constraint_count()));
        std::vector<double> node(m);
        for (std::size_t k = 0; k < op.constraint_count(); ++k) {
            boundary.g(0.0, op.grid().lattice_coordinates(op.constraint_points()[k]), node);
            for (std::size_t c = 0; c < m; ++c) vals[c][k] = node[c];
        }
        for (std::size_t c = 0; c < m; ++c) forcing[c] = boundary_forcing(op, vals[c]);
    }
    double e = 0.0;
    for (std::size_t c = 0; c < m; ++c) e += quadratic_part(op, u.component(c), w, forcing[c]);
    for (std::size_t i = 0; i < u.nodes(); ++i) {
        double r2 = 0.0;
        for (double x : u.node(i)) r2 += x * x;
        e += w[i] * 0.25 * (r2 - 1.0) * (r2 - 1.0);
    }
    return cell_volume(op.grid()) * e;
}

EnergyReport monitor(std::span<const double> times, std::span<const double> energies, double rel_tol) {
    if (times.size() != energies.size()) throw Error("energy series length mismatch");
    EnergyReport rep;
    std::optional<double> prev, first;
    for (std::size_t n = 0; n < energies.size(); ++n) {
        const double e = energies[n];
        if (std::isnan(e) && n > 0 && n + 1 < energies.size()) continue;
        rep.times.push_back(times[n]);
        rep.energies.push_back(e);
        if (!std::isfinite(e)) {
            rep.finite = false;
            continue;
        }
        if (!first) first = e;
        rep.max_increase = std::max(rep.max_increase, e - *first);
        if (prev && e > *prev + rel_tol * (1.0 + std::abs(*prev))) {
            rep.monotone = false;
            ++rep.violation_count;
            if (!rep.first_violation) {
                rep.first_violation = n;
                rep.first_violation_magnitude = e - *prev;
            }
        }
        prev = e;
    }
    return rep;
}

EnergyReport monitor(const RunRecord& record, double rel_tol) {
    return monitor(record.times, record.energies, rel_tol);
}

}  // namespace mbp
