#include "mbp/nonlin.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace mbp {

namespace {

double xlogx(double x) { return x <= 0.0 ? 0.0 : x * std::log(x); }

void check_sign_condition(const NonlinearSpec& s) {
    if (!(s.beta > 0.0)) throw ConfigError("nonlinearity.beta must be positive");
    if (!s.in_domain(s.beta) || !s.in_domain(-s.beta))
        throw ConfigError("nonlinearity.beta lies outside the validity interval");
    const double fp = s.f(s.beta), fm = s.f(-s.beta);
    const double tol = 1e-12 * (1.0 + std::abs(fp) + std::abs(fm) + std::abs(s.df(0.0)));
    if (fp > tol || fm < -tol)
        throw ConfigError("sign condition f0(beta) <= 0 <= f0(-beta) fails for nonlinearity '" + s.family + "'");
}

NonlinearSpec finalize(NonlinearSpec s) {
    check_sign_condition(s);
    s.kappa_min = kappa_required(s, s.beta);
    return s;
}

double golden_max(const std::function<double(double)>& g, double a, double b) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a), d = a + r * (b - a);
    double gc = g(c), gd = g(d);
    for (int it = 0; it < 200 && (b - a) > 1e-13 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
        if (gc > gd) {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    return std::max(gc, gd);
}

double bisect(const std::function<double(double)>& g, double lo, double hi) {
    double glo = g(lo);
    for (int it = 0; it < 300 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
        double mid = 0.5 * (lo + hi);
        double gm = g(mid);
        if ((gm < 0.0) == (glo < 0.0)) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double kappa_required(const NonlinearSpec& spec, double beta) {
    if (spec.identically_zero) return 0.0;
    if (!spec.in_domain(beta) || !spec.in_domain(-beta))
        throw ConfigError("bound lies outside the validity interval");
    if (spec.kappa_formula) return spec.kappa_formula(beta);
    auto g = [&](double x) { return std::abs(spec.df(x)); };
    constexpr int samples = 10000;
    int best = 0;
    double best_val = -1.0;
    for (int k = 0; k <= samples; ++k) {
        double x = -beta + 2.0 * beta * k / samples;
        double v = g(x);
        if (v > best_val) {
            best_val = v;
            best = k;
        }
    }
    double a = -beta + 2.0 * beta * std::max(best - 1, 0) / samples;
    double b = -beta + 2.0 * beta * std::min(best + 1, samples) / samples;
    return std::max(best_val, golden_max(g, a, b));
}

NonlinearSpec double_well() {
    NonlinearSpec s = logistic(1.0, 2, 1.0);
    s.family = "double_well";
    return s;
}

NonlinearSpec logistic_raw(double lambda, int p) {
    if (!(lambda > 0.0)) throw ConfigError("nonlinearity.lambda must be positive");
    if (p < 1) throw ConfigError("nonlinearity.p must be a positive integer");
    NonlinearSpec s;
    s.family = "logistic";
    const double pd = p;
    s.f = [=](double x) { return lambda * x * (1.0 - std::pow(x, p)); };
    s.df = [=](double x) { return lambda * (1.0 - (pd + 1.0) * std::pow(x, p)); };
    s.d2f = [=](double x) { return -lambda * pd * (pd + 1.0) * std::pow(x, p - 1); };
    s.potential = [=](double x) {
        return lambda * (std::pow(x, p + 2) / (pd + 2.0) - 0.5 * x * x) + lambda * (0.5 - 1.0 / (pd + 2.0));
    };
    s.kappa_formula = [=](double b) { return std::max(lambda, lambda * ((pd + 1.0) * std::pow(b, p) - 1.0)); };
    return s;
}

NonlinearSpec logistic(double lambda, int p, double beta) {
    if (p % 2 != 0) throw ConfigError("logistic nonlinearity with odd p needs affine normalization");
    NonlinearSpec s = logistic_raw(lambda, p);
    s.beta = beta;
    return finalize(std::move(s));
}

double flory_huggins_rho(double theta, double theta_c) {
    if (!(theta > 0.0 && theta < theta_c)) throw ConfigError("flory-huggins requires 0 < theta < theta_c");
    auto g = [=](double r) { return std::atanh(r) / r - theta_c / theta; };
    double lo = std::sqrt(1.0 - theta / (2.0 * theta_c - theta));
    double hi = 1.0 - 1e-16;
    if (!(g(lo) < 0.0)) lo = 1e-8;
    return bisect(g, lo, hi);
}

NonlinearSpec flory_huggins(double theta, double theta_c, std::optional<double> beta) {
    const double rho = flory_huggins_rho(theta, theta_c);
    NonlinearSpec s;
    s.family = "flory_huggins";
    s.f = [=](double x) { return 0.5 * theta * (std::log1p(-x) - std::log1p(x)) + theta_c * x; };
    s.df = [=](double x) { return theta_c - theta / (1.0 - x * x); };
    s.d2f = [=](double x) { return -2.0 * theta * x / ((1.0 - x * x) * (1.0 - x * x)); };
    s.potential = [=](double x) {
        return 0.5 * theta * (xlogx(1.0 + x) + xlogx(1.0 - x)) - 0.5 * theta_c * x * x;
    };
    s.kappa_formula = [=](double b) {
        return std::max(std::abs(theta_c - theta), std::abs(theta_c - theta / (1.0 - b * b)));
    };
    s.lower = -1.0;
    s.upper = 1.0;
    s.beta = beta.value_or(rho);
    return finalize(std::move(s));
}

NonlinearSpec peng_robinson_raw(const PengRobinsonParams& p) {
    if (!(p.R > 0.0 && p.T > 0.0 && p.a > 0.0 && p.b > 0.0))
        throw ConfigError("peng-robinson parameters must be positive");
    const double rt = p.R * p.T, a = p.a, b = p.b;
    const double sq2 = std::numbers::sqrt2;
    NonlinearSpec s;
    s.family = "peng_robinson";
    s.f = [=](double x) {
        const double bx = b * x;
        return -rt * std::log(x / (1.0 - bx)) - rt * bx / (1.0 - bx) -
               a / (2.0 * sq2 * b) * std::log((1.0 + (1.0 - sq2) * bx) / (1.0 + (1.0 + sq2) * bx)) +
               a * x / (1.0 + 2.0 * bx - bx * bx);
    };
    s.df = [=](double x) {
        const double bx = b * x;
        const double d = 1.0 + 2.0 * bx - bx * bx;
        const double dd = 2.0 * b - 2.0 * b * bx;
        return -rt / x - rt * b / (1.0 - bx) - rt * b / ((1.0 - bx) * (1.0 - bx)) + a / d + a * (d - x * dd) / (d * d);
    };
    s.potential = [=](double x) {
        const double bx = b * x;
        return rt * x * (std::log(x / (1.0 - bx)) - 1.0) +
               a * x / (2.0 * sq2 * b) * std::log((1.0 + (1.0 - sq2) * bx) / (1.0 + (1.0 + sq2) * bx));
    };
    s.lower = 0.0;
    s.upper = 1.0 / b;
    s.beta = std::numeric_limits<double>::quiet_NaN();
    s.kappa_min = std::numeric_limits<double>::quiet_NaN();
    return s;
}

std::pair<double, double> peng_robinson_roots(const PengRobinsonParams& p) {
    const NonlinearSpec raw = peng_robinson_raw(p);
    constexpr int samples = 10000;
    const double lo = 1e-6 / p.b, hi = 1.0 / p.b - 1e-6 / p.b;
    std::vector<double> x(samples), v(samples);
    for (int k = 0; k < samples; ++k) {
        x[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (samples - 1);
        v[static_cast<std::size_t>(k)] = raw.f(x[static_cast<std::size_t>(k)]);
    }
    long up = -1;
    for (std::size_t k = 0; k + 1 < x.size(); ++k)
        if (v[k] < 0.0 && v[k + 1] >= 0.0) up = static_cast<long>(k);
    long down = -1;
    if (up >= 0)
        for (auto k = static_cast<std::size_t>(up) + 1; k + 1 < x.size(); ++k)
            if (v[k] > 0.0 && v[k + 1] <= 0.0) {
                down = static_cast<long>(k);
                break;
            }
    if (up < 0 || down < 0)
        throw ConfigError("peng-robinson f0 has no root pair m < M bracketing a positive lobe for these parameters");
    auto ku = static_cast<std::size_t>(up), kd = static_cast<std::size_t>(down);
    double m = bisect(raw.f, x[ku], x[ku + 1]);
    double M = bisect(raw.f, x[kd], x[kd + 1]);
    return {m, M};
}

NonlinearSpec peng_robinson(const PengRobinsonParams& p, double beta) {
    auto [m, M] = peng_robinson_roots(p);
    return affine_normalize(peng_robinson_raw(p), m, M, beta);
}

NonlinearSpec affine_normalize(const NonlinearSpec& spec, double m, double M, double beta) {
    if (!(M > m)) throw ConfigError("affine normalization requires M > m");
    if (!(beta > 0.0)) throw ConfigError("nonlinearity.beta must be positive");
    const double fm = spec.f(m), fM = spec.f(M);
    const double tol = 1e-10 * (1.0 + std::abs(spec.df(0.5 * (m + M))) * (M - m));
    if (fM > tol || fm < -tol) throw ConfigError("affine normalization requires f0(M) <= 0 <= f0(m)");
    const AffineMap eta{(M - m) / (2.0 * beta), 0.5 * (M + m)};
    const double c = 1.0 / eta.slope;
    NonlinearSpec s;
    s.family = spec.family;
    auto f = spec.f, df = spec.df, d2f = spec.d2f, pot = spec.potential;
    s.f = [=](double th) { return c * f(eta(th)); };
    s.df = [=](double th) { return df(eta(th)); };
    if (d2f) s.d2f = [=](double th) { return eta.slope * d2f(eta(th)); };
    if (pot) s.potential = [=](double th) { return c * c * pot(eta(th)); };
    s.lower = std::isfinite(spec.lower) ? eta.inverse(spec.lower) : spec.lower;
    s.upper = std::isfinite(spec.upper) ? eta.inverse(spec.upper) : spec.upper;
    s.beta = beta;
    s.eta = spec.eta ? AffineMap{spec.eta->slope * eta.slope, spec.eta->slope * eta.shift + spec.eta->shift} : eta;
    return finalize(std::move(s));
}

NonlinearSpec zero_nonlinearity(double beta) {
    NonlinearSpec s;
    s.family = "zero";
    s.f = [](double) { return 0.0; };
    s.df = [](double) { return 0.0; };
    s.d2f = [](double) { return 0.0; };
    s.potential = [](double) { return 0.0; };
    s.identically_zero = true;
    s.beta = beta;
    s.kappa_min = 0.0;
    if (!(beta > 0.0)) throw ConfigError("nonlinearity.beta must be positive");
    return s;
}

namespace {

void check_kappa(double kappa, double kappa_min, bool allow_unsafe, bool zero_ok) {
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ConfigError("kappa must be finite and nonnegative");
    if (allow_unsafe || zero_ok) return;
    if (kappa < kappa_min - 1e-12 * std::max(1.0, kappa_min))
        throw ConfigError("kappa " + std::to_string(kappa) + " is below the required " + std::to_string(kappa_min) +
                          " (set allow_unsafe_kappa to override)");
}

}  // namespace

StabilizedMap StabilizedMap::scalar(NonlinearSpec spec, double kappa, bool allow_unsafe) {
    check_kappa(kappa, spec.kappa_min, allow_unsafe, spec.identically_zero);
    return StabilizedMap(std::move(spec), Arity::Scalar, 1, kappa);
}

StabilizedMap StabilizedMap::vector(std::size_t m, double kappa, bool allow_unsafe) {
    if (m == 0) throw ConfigError("vector arity needs m >= 1");
    check_kappa(kappa, 2.0, allow_unsafe, false);
    return StabilizedMap(double_well(), Arity::Vector, m, kappa);
}

StabilizedMap StabilizedMap::matrix(std::size_t m, double kappa, bool allow_unsafe) {
    if (m == 0) throw ConfigError("matrix arity needs m >= 1");
    check_kappa(kappa, 2.0, allow_unsafe, false);
    return StabilizedMap(double_well(), Arity::Matrix, m, kappa);
}

void StabilizedMap::apply_node(std::span<const double> in, std::span<double> out) const {
    switch (arity_) {
    case Arity::Scalar: {
        const double x = in[0];
        if (!spec_.in_domain(x)) throw DomainViolation(0, x, "value outside the nonlinearity's validity interval");
        out[0] = kappa_ * x + spec_.f(x);
        break;
    }
    case Arity::Vector: {
        double r2 = 0.0;
        for (double x : in) r2 += x * x;
        const double g = kappa_ + 1.0 - r2;
        for (std::size_t c = 0; c < m_; ++c) out[c] = g * in[c];
        break;
    }
    case Arity::Matrix: {
        const auto n = static_cast<Eigen::Index>(m_);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> q(in.data(), n, n);
        Eigen::MatrixXd r = kappa_ * q + q * (Eigen::MatrixXd::Identity(n, n) - q.transpose() * q);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                out[static_cast<std::size_t>(i * n + j)] = 0.5 * (r(i, j) + r(j, i));
        break;
    }
    }
}

void n0_apply(const StabilizedMap& map, std::span<const double> in, std::span<double> out) {
    const std::size_t stride = map.stride();
    if (in.size() % stride != 0 || out.size() != in.size()) throw Error("field does not match map arity");
    const std::size_t nodes = in.size() / stride;
    if (map.arity() == Arity::Scalar) {
        const auto& s = map.spec();
        const double k = map.kappa();
        for (std::size_t i = 0; i < nodes; ++i) {
            const double x = in[i];
            if (!s.in_domain(x))
                throw DomainViolation(i, x, "value " + std::to_string(x) + " at node " + std::to_string(i) +
                                                " outside the nonlinearity's validity interval");
            out[i] = k * x + s.f(x);
        }
        return;
    }
    for (std::size_t i = 0; i < nodes; ++i)
        map.apply_node(in.subspan(i * stride, stride), out.subspan(i * stride, stride));
}

Field n0_apply(const StabilizedMap& map, const Field& f) {
    const bool ok = (map.arity() == Arity::Scalar && f.kind() == FieldKind::Scalar) ||
                    (map.arity() == Arity::Vector && f.kind() == FieldKind::Vector && f.m() == map.m()) ||
                    (map.arity() == Arity::Matrix && f.kind() == FieldKind::Matrix && f.m() == map.m());
    if (!ok) throw Error("field kind does not match map arity");
    std::vector<double> out(f.values().size());
    n0_apply(map, f.values(), out);
    return f.with_values(std::move(out));
}

}  // namespace mbp
