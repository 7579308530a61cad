#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "mbp/grid.hpp"
#include "mbp/operators.hpp"

namespace oracle {

/// phi_j in long double: series below 0.5, closed forms above.
inline long double phi(int j, long double a) {
    if (std::fabs(a) < 0.5L) {
        long double sum = 0.0L, term = 1.0L;
        for (int k = 0; k < j; ++k) term /= static_cast<long double>(k + 1);
        for (int k = 0; k < 40; ++k) {
            sum += term;
            term *= -a / static_cast<long double>(k + j + 1);
        }
        return sum;
    }
    long double p = std::exp(-a);
    long double fact = 1.0L;
    for (int k = 1; k <= j; ++k) {
        p = (1.0L / fact - p) / a;
        fact *= static_cast<long double>(k);
    }
    return p;
}

/// Dense matrix of L_h0 assembled column by column from the matvec.
inline Eigen::MatrixXd dense_from_apply(const mbp::OperatorSpec& op) {
    const auto n = static_cast<Eigen::Index>(op.size());
    Eigen::MatrixXd a(n, n);
    std::vector<double> e(op.size(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
        e[static_cast<std::size_t>(j)] = 1.0;
        auto col = mbp::apply(op, e);
        for (Eigen::Index i = 0; i < n; ++i) a(i, j) = col[static_cast<std::size_t>(i)];
        e[static_cast<std::size_t>(j)] = 0.0;
    }
    return a;
}

/// phi_j(tau (kappa I - A)) by W-symmetrized dense eigendecomposition, phi in long double.
inline Eigen::MatrixXd dense_phi(const Eigen::MatrixXd& a, const std::vector<double>& w, double kappa, double tau,
                                 int j) {
    const auto n = a.rows();
    Eigen::VectorXd sw(n);
    for (Eigen::Index i = 0; i < n; ++i) sw(i) = std::sqrt(w[static_cast<std::size_t>(i)]);
    Eigen::MatrixXd s = sw.asDiagonal() * a * sw.cwiseInverse().asDiagonal();
    s = 0.5 * (s + s.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    Eigen::VectorXd f(n);
    for (Eigen::Index k = 0; k < n; ++k)
        f(k) = static_cast<double>(phi(j, static_cast<long double>(tau) * (kappa - es.eigenvalues()(k))));
    return sw.cwiseInverse().asDiagonal() * es.eigenvectors() * f.asDiagonal() * es.eigenvectors().transpose() *
           sw.asDiagonal();
}

inline std::vector<double> random_vector(std::size_t n, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

inline double max_abs(std::span<const double> a) {
    double d = 0.0;
    for (double x : a) d = std::max(d, std::abs(x));
    return d;
}

/// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
    return s * h / 3.0;
}

inline std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace oracle
