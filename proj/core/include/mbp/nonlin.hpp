#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "mbp/grid.hpp"

namespace mbp {

/// u = slope * theta + shift.
struct AffineMap {
    double slope = 1.0;
    double shift = 0.0;

    double operator()(double theta) const { return slope * theta + shift; }
    double inverse(double u) const { return (u - shift) / slope; }
};

struct NonlinearSpec {
    std::string family;
    std::function<double(double)> f;
    std::function<double(double)> df;
    std::function<double(double)> d2f;  // may be empty
    std::function<double(double)> potential;
    double beta = 1.0;
    double kappa_min = 0.0;
    /// Open interval on which f may be evaluated.
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    bool identically_zero = false;
    /// Closed-form max_{|xi| <= beta} |f0'(xi)| when the family has one.
    std::function<double(double)> kappa_formula;
    /// Set by affine_normalize: maps the normalized variable back to the original one.
    std::optional<AffineMap> eta;

    bool in_domain(double x) const { return x > lower && x < upper; }
};

/// f0(s) = s - s^3, F(s) = (s^2 - 1)^2 / 4.
NonlinearSpec double_well();

/// f0(s) = lambda s (1 - s^p). Odd p has no symmetric bound; use logistic_raw with affine_normalize.
NonlinearSpec logistic(double lambda, int p, double beta = 1.0);
NonlinearSpec logistic_raw(double lambda, int p);

/// f0(s) = theta/2 ln((1-s)/(1+s)) + theta_c s on (-1, 1). Default beta is the positive root rho.
NonlinearSpec flory_huggins(double theta, double theta_c, std::optional<double> beta = std::nullopt);

/// Positive root of (1/(2 rho)) ln((1+rho)/(1-rho)) = theta_c / theta.
double flory_huggins_rho(double theta, double theta_c);

struct PengRobinsonParams {
    double R = 1.0;
    double T = 1.0;
    double a = 1.0;
    double b = 1.0;
};

/// Unnormalized Peng-Robinson chemical-potential nonlinearity on (0, 1/b).
NonlinearSpec peng_robinson_raw(const PengRobinsonParams& p);

/// Roots m < M of f0 bracketing a positive lobe: the last -/+ crossing and the next +/- crossing
/// of f0 sampled on 10^4 points of (1e-6/b, 1/b - 1e-6/b), refined by bisection.
std::pair<double, double> peng_robinson_roots(const PengRobinsonParams& p);

/// Affine-normalized Peng-Robinson spec with bound beta.
NonlinearSpec peng_robinson(const PengRobinsonParams& p, double beta = 1.0);

/// f~(theta) = (2 beta / (M - m)) f(eta(theta)) with eta(theta) = (M - m)/(2 beta) theta + (M + m)/2.
NonlinearSpec affine_normalize(const NonlinearSpec& spec, double m, double M, double beta = 1.0);

/// f0 = 0; admits kappa = 0.
NonlinearSpec zero_nonlinearity(double beta = 1.0);

/// max_{|xi| <= beta} |f0'(xi)|.
double kappa_required(const NonlinearSpec& spec, double beta);

enum class Arity { Scalar, Vector, Matrix };

/// N0(xi) = kappa xi + f0(xi). Vector and matrix arities use the double-well
/// f0(xi) = (1 - |xi|^2) xi and f0(Q) = Q (I - Q^T Q).
class StabilizedMap {
public:
    static StabilizedMap scalar(NonlinearSpec spec, double kappa, bool allow_unsafe = false);
    static StabilizedMap vector(std::size_t m, double kappa, bool allow_unsafe = false);
    static StabilizedMap matrix(std::size_t m, double kappa, bool allow_unsafe = false);

    Arity arity() const { return arity_; }
    std::size_t m() const { return m_; }
    double kappa() const { return kappa_; }
    double beta() const { return spec_.beta; }
    const NonlinearSpec& spec() const { return spec_; }
    std::size_t stride() const { return arity_ == Arity::Matrix ? m_ * m_ : m_; }

    double operator()(double xi) const { return kappa_ * xi + spec_.f(xi); }

    /// One node; throws DomainViolation (node 0) outside the validity interval.
    void apply_node(std::span<const double> in, std::span<double> out) const;

private:
    StabilizedMap(NonlinearSpec spec, Arity arity, std::size_t m, double kappa)
        : spec_(std::move(spec)), arity_(arity), m_(m), kappa_(kappa) {}

    NonlinearSpec spec_;
    Arity arity_;
    std::size_t m_;
    double kappa_;
};

/// Nodewise N0 over a node-major array; DomainViolation carries the offending node.
void n0_apply(const StabilizedMap& map, std::span<const double> in, std::span<double> out);
Field n0_apply(const StabilizedMap& map, const Field& f);

}  // namespace mbp
