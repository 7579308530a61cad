#include "mbp/stepper.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace mbp {

std::string to_string(Scheme s) { return s == Scheme::Etd1 ? "etd1" : "etdrk2"; }

Scheme parse_scheme(const std::string& name) {
    if (name == "etd1") return Scheme::Etd1;
    if (name == "etdrk2") return Scheme::Etdrk2;
    throw ConfigError("unknown stepper.scheme '" + name + "'");
}

std::string to_string(RunStatus s) {
    switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::NonFinite: return "non-finite";
    case RunStatus::DomainViolation: return "domain-violation";
    case RunStatus::ExponentialFailure: return "exponential-failure";
    }
    return "unknown";
}

double StepperConfig::mbp_tolerance() const {
    return strategy == ExpStrategy::Krylov ? std::max(1e-12, 10.0 * krylov.tol) : 1e-12;
}

Stepper::Stepper(std::shared_ptr<const OperatorSpec> op, StabilizedMap map, StepperConfig cfg,
                 ComponentBoundary boundary)
    : op_(std::move(op)),
      map_(std::move(map)),
      cfg_(std::move(cfg)),
      boundary_(std::move(boundary)),
      eval_(op_, map_.kappa(), cfg_.tau, cfg_.strategy, cfg_.krylov) {
    const std::size_t stride = map_.stride();
    if (map_.arity() == Arity::Matrix) {
        for (std::size_t r = 0; r < map_.m(); ++r)
            for (std::size_t c = r; c < map_.m(); ++c) evolved_.push_back(r * map_.m() + c);
    } else {
        for (std::size_t k = 0; k < stride; ++k) evolved_.push_back(k);
    }
    if (op_->grid().bc_kind() == BcKind::Dirichlet && op_->constraint_count() > 0) {
        if (map_.arity() == Arity::Scalar)
            has_forcing_ = static_cast<bool>(op_->grid().bc().g);
        else if (map_.arity() == Arity::Vector)
            has_forcing_ = static_cast<bool>(boundary_.g);
    }
    const bool time_dependent =
        map_.arity() == Arity::Scalar ? op_->grid().bc().time_dependent : boundary_.time_dependent;
    if (has_forcing_ && !time_dependent) cached_forcing_ = forcing(0.0);
}

Stepper Stepper::scalar(std::shared_ptr<const OperatorSpec> op, NonlinearSpec spec, StepperConfig cfg) {
    if (!op) throw Error("null operator");
    auto map = StabilizedMap::scalar(std::move(spec), cfg.kappa, cfg.allow_unsafe_kappa);
    return Stepper(std::move(op), std::move(map), std::move(cfg), {});
}

Stepper Stepper::vector(std::shared_ptr<const OperatorSpec> op, std::size_t m, StepperConfig cfg,
                        ComponentBoundary boundary) {
    if (!op) throw Error("null operator");
    auto map = StabilizedMap::vector(m, cfg.kappa, cfg.allow_unsafe_kappa);
    return Stepper(std::move(op), std::move(map), std::move(cfg), std::move(boundary));
}

Stepper Stepper::matrix(std::shared_ptr<const OperatorSpec> op, std::size_t m, StepperConfig cfg) {
    if (!op) throw Error("null operator");
    if (op->grid().bc_kind() == BcKind::Neumann) throw ConfigError("matrix fields support periodic or dirichlet bc");
    if (op->grid().bc_kind() == BcKind::Dirichlet && op->grid().bc().g)
        throw ConfigError("matrix fields support homogeneous dirichlet data only");
    auto map = StabilizedMap::matrix(m, cfg.kappa, cfg.allow_unsafe_kappa);
    return Stepper(std::move(op), std::move(map), std::move(cfg), {});
}

std::vector<std::vector<double>> Stepper::forcing(double t) const {
    const std::size_t n = op_->size();
    std::vector<std::vector<double>> out(evolved_.size(), std::vector<double>(n, 0.0));
    if (!has_forcing_) return out;
    const double tol = cfg_.mbp_tolerance();
    const std::size_t nc = op_->constraint_count();
    if (map_.arity() == Arity::Scalar) {
        auto vals = constraint_values(*op_, op_->grid().bc().g, t);
        for (double g : vals)
            if (!(std::abs(g) <= map_.beta() + tol))
                throw Error("dirichlet data " + std::to_string(g) + " exceeds the bound at t = " + std::to_string(t));
        out[0] = boundary_forcing(*op_, vals);
        return out;
    }
    const std::size_t m = map_.m();
    std::vector<std::vector<double>> vals(m, std::vector<double>(nc));
    std::vector<double> node(m);
    for (std::size_t k = 0; k < nc; ++k) {
        boundary_.g(t, op_->grid().lattice_coordinates(op_->constraint_points()[k]), node);
        double r2 = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            vals[c][k] = node[c];
            r2 += node[c] * node[c];
        }
        if (!(std::sqrt(r2) <= 1.0 + tol)) throw Error("dirichlet data leaves the unit ball at t = " + std::to_string(t));
    }
    for (std::size_t c = 0; c < m; ++c) out[c] = boundary_forcing(*op_, vals[c]);
    return out;
}

void Stepper::check_field(const Field& v) const {
    const bool ok = (map_.arity() == Arity::Scalar && v.kind() == FieldKind::Scalar) ||
                    (map_.arity() == Arity::Vector && v.kind() == FieldKind::Vector && v.m() == map_.m()) ||
                    (map_.arity() == Arity::Matrix && v.kind() == FieldKind::Matrix && v.m() == map_.m());
    if (!ok) throw Error("field kind does not match the stepper");
    if (v.nodes() != op_->size()) throw Error("field length does not match the operator");
}

std::vector<std::vector<double>> Stepper::split(const Field& v) const {
    const std::size_t n = op_->size(), stride = v.components();
    std::vector<std::vector<double>> out(evolved_.size(), std::vector<double>(n));
    auto data = v.values();
    for (std::size_t k = 0; k < evolved_.size(); ++k)
        for (std::size_t i = 0; i < n; ++i) out[k][i] = data[i * stride + evolved_[k]];
    return out;
}

Field Stepper::join(const Field& like, const std::vector<std::vector<double>>& comps) const {
    const std::size_t n = op_->size(), stride = like.components();
    std::vector<double> data(n * stride);
    const std::size_t m = map_.m();
    for (std::size_t k = 0; k < evolved_.size(); ++k) {
        const std::size_t e = evolved_[k];
        for (std::size_t i = 0; i < n; ++i) {
            data[i * stride + e] = comps[k][i];
            if (map_.arity() == Arity::Matrix) data[i * stride + (e % m) * m + e / m] = comps[k][i];
        }
    }
    return like.with_values(std::move(data));
}

std::vector<std::vector<double>> Stepper::nonlinear(const Field& v) const {
    std::vector<double> out(v.values().size());
    n0_apply(map_, v.values(), out);
    return split(v.with_values(std::move(out)));
}

Field Stepper::step(const Field& v, double t) const {
    return cfg_.scheme == Scheme::Etd1 ? etd1_step(v, t) : etdrk2_step(v, t);
}

Field Stepper::etd1_step(const Field& v, double t) const {
    check_field(v);
    const double tau = cfg_.tau;
    auto comps = split(v);
    auto nl = nonlinear(v);
    const auto g = has_forcing_ ? (cached_forcing_.empty() ? forcing(t) : cached_forcing_)
                                : std::vector<std::vector<double>>{};
    std::vector<std::vector<double>> out(comps.size());
    for (std::size_t k = 0; k < comps.size(); ++k) {
        if (!g.empty())
            for (std::size_t i = 0; i < nl[k].size(); ++i) nl[k][i] += g[k][i];
        const PhiTerm terms[] = {{0, 1.0, comps[k]}, {1, tau, nl[k]}};
        out[k] = eval_.combination(terms);
    }
    return join(v, out);
}

Field Stepper::etdrk2_step(const Field& v, double t) const {
    check_field(v);
    const double tau = cfg_.tau;
    auto comps = split(v);
    auto nl = nonlinear(v);
    std::vector<std::vector<double>> g0, dg;
    if (has_forcing_) {
        if (!cached_forcing_.empty()) {
            g0 = cached_forcing_;
        } else {
            g0 = forcing(t);
            auto g1 = forcing(t + tau);
            dg = g1;
            for (std::size_t k = 0; k < dg.size(); ++k)
                for (std::size_t i = 0; i < dg[k].size(); ++i) dg[k][i] -= g0[k][i];
        }
    }
    std::vector<std::vector<double>> pred(comps.size());
    for (std::size_t k = 0; k < comps.size(); ++k) {
        std::vector<double> rhs = nl[k];
        if (!g0.empty())
            for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += g0[k][i];
        std::vector<PhiTerm> terms{{0, 1.0, comps[k]}, {1, tau, rhs}};
        if (!dg.empty()) terms.push_back({2, tau, dg[k]});
        pred[k] = eval_.combination(terms);
    }
    const Field predicted = join(v, pred);
    auto nl_pred = nonlinear(predicted);
    std::vector<std::vector<double>> out(comps.size());
    for (std::size_t k = 0; k < comps.size(); ++k) {
        std::vector<double> diff(nl_pred[k].size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = nl_pred[k][i] - nl[k][i];
        const PhiTerm term{2, tau, diff};
        auto corr = eval_.combination(std::span<const PhiTerm>(&term, 1));
        out[k] = std::move(pred[k]);
        for (std::size_t i = 0; i < corr.size(); ++i) out[k][i] += corr[i];
    }
    return join(v, out);
}

double RunRecord::max_excess() const {
    double e = -std::numeric_limits<double>::infinity();
    for (double s : sup_norms) e = std::max(e, s - bound);
    return e;
}

std::size_t step_count(double t_final, double tau) {
    if (!(t_final >= 0.0) || !std::isfinite(t_final)) throw ConfigError("stepper.T must be finite and nonnegative");
    if (!(tau > 0.0)) throw ConfigError("stepper.tau must be positive");
    if (t_final == 0.0) return 0;
    const double r = t_final / tau;
    const double n = std::round(r);
    if (std::abs(n - r) > 1e-9 * std::max(1.0, r))
        throw ConfigError("stepper.T must be an integer multiple of stepper.tau");
    return static_cast<std::size_t>(n);
}

RunRecord run(const Stepper& stepper, const Field& initial, const Monitors& monitors) {
    const auto start = std::chrono::steady_clock::now();
    const auto& cfg = stepper.config();
    const std::size_t n = step_count(cfg.t_final, cfg.tau);
    const double tol = stepper.mbp_tolerance();
    RunRecord rec;
    rec.bound = stepper.bound();
    const double s0 = sup_norm(initial);
    if (!(s0 <= rec.bound + tol))
        throw Error("initial data violates the bound: sup norm " + std::to_string(s0) + " > " +
                    std::to_string(rec.bound));
    std::vector<bool> taken(cfg.snapshot_times.size(), false);
    rec.times.reserve(n + 1);
    rec.sup_norms.reserve(n + 1);
    rec.energies.reserve(n + 1);

    auto record = [&](std::size_t s, const Field& f) {
        const double t = static_cast<double>(s) * cfg.tau;
        const double sup = sup_norm(f);
        rec.times.push_back(t);
        rec.sup_norms.push_back(sup);
        double e = std::numeric_limits<double>::quiet_NaN();
        if (monitors.energy && cfg.energy_cadence > 0 && (s % cfg.energy_cadence == 0 || s == n))
            e = monitors.energy(f);
        rec.energies.push_back(e);
        if (sup - rec.bound > tol) rec.violations.push_back({s, t, sup - rec.bound});
        for (std::size_t k = 0; k < cfg.snapshot_times.size(); ++k) {
            if (!taken[k] && std::abs(t - cfg.snapshot_times[k]) <= 0.5 * cfg.tau * (1.0 + 1e-9)) {
                taken[k] = true;
                rec.snapshots.push_back({t, f});
            }
        }
        if (monitors.on_step) monitors.on_step(s, t, f);
    };

    Field cur = initial;
    record(0, cur);
    for (std::size_t s = 1; s <= n; ++s) {
        const double t = static_cast<double>(s - 1) * cfg.tau;
        Field next;
        try {
            next = stepper.step(cur, t);
        } catch (const DomainViolation& e) {
            rec.status = RunStatus::DomainViolation;
            rec.message = "step " + std::to_string(s) + ": " + e.what();
            break;
        } catch (const KrylovError& e) {
            rec.status = RunStatus::ExponentialFailure;
            rec.message = "step " + std::to_string(s) + ": " + e.what();
            break;
        }
        auto vals = next.values();
        if (!std::all_of(vals.begin(), vals.end(), [](double x) { return std::isfinite(x); })) {
            rec.status = RunStatus::NonFinite;
            rec.message = "step " + std::to_string(s) + ": non-finite value; last good state kept";
            break;
        }
        cur = std::move(next);
        record(s, cur);
    }
    rec.final_state = std::move(cur);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

}  // namespace mbp
