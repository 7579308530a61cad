#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "mbp/errors.hpp"
#include "mbp/expkernel.hpp"
#include "oracles.hpp"

using namespace mbp;
using Catch::Approx;

namespace {

std::shared_ptr<const OperatorSpec> share(OperatorSpec op) { return std::make_shared<const OperatorSpec>(std::move(op)); }

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    return oracle::max_abs_diff(a, b) / std::max(oracle::max_abs(b), 1e-300);
}

/// The Krylov stopping rule is relative to the input vector.
double input_rel_diff(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& v) {
    return oracle::max_abs_diff(a, b) / oracle::max_abs(v);
}

std::vector<std::shared_ptr<const OperatorSpec>> spectral_ops() {
    std::vector<std::shared_ptr<const OperatorSpec>> ops;
    for (auto bc : {BoundaryCondition::periodic(), BoundaryCondition::neumann(), BoundaryCondition::dirichlet()}) {
        ops.push_back(share(laplacian_fd(build_grid(1, {0, 1}, 64, bc), 0.01)));
        ops.push_back(share(laplacian_fd(build_grid(2, {0, 1}, 12, bc), 0.01)));
        ops.push_back(share(laplacian_fd(build_grid(3, {0, 1}, 6, bc), 0.01)));
    }
    ops.push_back(share(nonlocal_fd(build_grid(2, {0, 1}, 16, BoundaryCondition::periodic()), 4.0 / 16, {}, 0.01)));
    ops.push_back(share(fem_p1_uniform(build_grid(2, {0, 1}, 17, BoundaryCondition::dirichlet()), 0.01)));
    return ops;
}

std::vector<std::shared_ptr<const OperatorSpec>> structured_ops() {
    auto ops = spectral_ops();
    ops.push_back(share(nonlocal_fd(build_grid(2, {0, 1}, 12, BoundaryCondition::dirichlet()), 3.0 / 12, {}, 0.01)));
    ops.push_back(share(fractional_fd_1d(build_grid(1, {-1, 1}, 64, BoundaryCondition::dirichlet()), 0.5,
                                         FractionalGamma::Two, 0.01)));
    ops.push_back(share(nonlocal_fd(build_grid(1, {0, 1}, 40, BoundaryCondition::dirichlet()), 4.5 / 40,
                                    {NonlocalKernel::FractionalTruncated, 0.5}, 0.01)));
    return ops;
}

/// Random W-self-adjoint dissipative matrix on a grid of n unknowns.
OperatorSpec random_symmetric(std::size_t n, std::uint64_t seed) {
    auto g = build_grid(1, {0, 1}, static_cast<int>(n), BoundaryCondition::periodic());
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd b(N, N);
    for (Eigen::Index i = 0; i < N * N; ++i) b.data()[i] = nd(gen);
    Eigen::MatrixXd a = -(b.transpose() * b) / static_cast<double>(n);
    return OperatorSpec::custom(g, a.sparseView());
}

}  // namespace

TEST_CASE("phi at zero and at one") {
    CHECK(phi(0, 0.0) == 1.0);
    CHECK(phi(1, 0.0) == 1.0);
    CHECK(phi(2, 0.0) == 0.5);
    CHECK(phi(3, 0.0) == Approx(1.0 / 6.0).epsilon(1e-16));
    // 1 - e^{-1} to 50 digits: 0.63212055882855767840447622983853913255418886896823
    CHECK(phi(1, 1.0) == Approx(0.63212055882855767840).epsilon(1e-15));
    CHECK_THROWS(phi(4, 1.0));
}

TEST_CASE("phi relative error against the long double oracle") {
    double worst[4] = {0, 0, 0, 0};
    for (int e = -160; e <= 30; ++e) {
        for (double m : {1.0, 1.37, 2.9, 5.5, 8.1}) {
            const double a = m * std::pow(10.0, e / 10.0);
            for (int j = 0; j <= 3; ++j) {
                const auto ref = oracle::phi(j, static_cast<long double>(a));
                // below the smallest normal double the comparison is meaningless
                if (ref < 1e-300L) continue;
                const double r = static_cast<double>(std::fabs((phi(j, a) - ref) / ref));
                worst[j] = std::max(worst[j], r);
            }
        }
    }
    // dense sweep across the Taylor threshold
    for (int k = 0; k <= 20000; ++k) {
        const double a = 1e-3 + 1e-1 * k / 20000.0;
        for (int j = 0; j <= 2; ++j) {
            const auto ref = oracle::phi(j, static_cast<long double>(a));
            worst[j] = std::max(worst[j], static_cast<double>(std::fabs((phi(j, a) - ref) / ref)));
        }
    }
    INFO("phi0 " << worst[0] << " phi1 " << worst[1] << " phi2 " << worst[2] << " phi3 " << worst[3]);
    CHECK(worst[0] <= 1e-14);
    CHECK(worst[1] <= 1e-14);
    CHECK(worst[2] <= 1e-14);
    CHECK(worst[3] <= 1e-12);
}

TEST_CASE("phi recurrence identities on [1e-12, 1e3]") {
    for (int e = -120; e <= 30; ++e) {
        const double a = std::pow(10.0, e / 10.0);
        CHECK(std::abs(phi(0, a) + a * phi(1, a) - 1.0) <= 1e-12);
        CHECK(std::abs(phi(1, a) + a * phi(2, a) - 1.0) <= 1e-12);
    }
}

TEST_CASE("phi matches its integral representation") {
    for (double a : {1e-6, 0.003, 0.02, 0.5, 1.0, 7.0, 40.0}) {
        for (int j = 1; j <= 2; ++j) {
            auto g = [=](double th) { return std::exp(-a * (1 - th)) * std::pow(th, j - 1); };
            const double q = oracle::simpson(g, 0.0, 1.0, 4000);
            CHECK(phi(j, a) == Approx(q).epsilon(1e-10));
        }
    }
}

TEST_CASE("phi is positive and decreasing on [0, inf)") {
    for (int j = 0; j <= 2; ++j) {
        double prev = phi(j, 0.0);
        // up to a = 700, where phi_0 is still a normal double
        for (int k = 1; k <= 1580; ++k) {
            const double a = 1e-4 * std::pow(1.01, k);
            const double v = phi(j, a);
            CHECK(v > 0.0);
            CHECK(v <= prev);
            prev = v;
        }
    }
}

TEST_CASE("dense_expm reference cases") {
    CHECK(dense_expm(Eigen::MatrixXd::Zero(5, 5)).isApprox(Eigen::MatrixXd::Identity(5, 5), 1e-15));
    Eigen::VectorXd d(4);
    d << -30.0, -1.0, 0.5, 3.0;
    Eigen::MatrixXd e = dense_expm(d.asDiagonal());
    // scaling and squaring is accurate normwise, not entrywise
    for (int i = 0; i < 4; ++i) CHECK(std::abs(e(i, i) - std::exp(d(i))) <= 1e-14 * std::exp(3.0));
    CHECK(std::abs(e(0, 1)) + std::abs(e(2, 3)) == 0.0);
    Eigen::Matrix2d n;
    n << 0, 1, 0, 0;
    Eigen::MatrixXd en = dense_expm(n);
    CHECK(en(0, 0) == Approx(1.0).epsilon(1e-15));
    CHECK(en(0, 1) == Approx(1.0).epsilon(1e-15));
    CHECK(en(1, 0) == 0.0);
    CHECK(en(1, 1) == Approx(1.0).epsilon(1e-15));
    // rotation generator
    Eigen::Matrix2d r;
    r << 0, -2.0, 2.0, 0;
    Eigen::MatrixXd er = dense_expm(r);
    CHECK(er(0, 0) == Approx(std::cos(2.0)).epsilon(1e-14));
    CHECK(er(1, 0) == Approx(std::sin(2.0)).epsilon(1e-14));
    CHECK_THROWS(dense_expm(Eigen::MatrixXd::Zero(1025, 1025)));
    CHECK_THROWS(dense_expm(Eigen::MatrixXd::Zero(2, 3)));
}

TEST_CASE("spectral and dense paths agree with the oracle, N <= 256") {
    for (const auto& op : structured_ops()) {
        const auto a = oracle::dense_from_apply(*op);
        const auto w = op->grid().weights();
        for (double tau : {0.01, 1.0, 100.0}) {
            const double kappa = 2.0;
            std::vector<ExpStrategy> strategies{ExpStrategy::Dense, ExpStrategy::Krylov};
            if (op->spectrum()) strategies.push_back(ExpStrategy::Spectral);
            for (auto st : strategies) {
                PhiEvaluator ev(op, kappa, tau, st, {1e-12, 64});
                for (int j = 0; j <= 2; ++j) {
                    const auto v = oracle::random_vector(op->size(), -1, 1, 100 + j);
                    const auto ref = oracle::to_vec(oracle::dense_phi(a, w, kappa, tau, j) * oracle::to_eigen(v));
                    INFO(to_string(op->family()) << " N=" << op->size() << " tau=" << tau << " strategy "
                                                 << to_string(st) << " j=" << j);
                    if (st == ExpStrategy::Krylov)
                        CHECK(input_rel_diff(ev.action(j, v), ref, v) <= 1e-10);
                    else
                        CHECK(rel_diff(ev.action(j, v), ref) <= 1e-11);
                }
            }
        }
    }
}

TEST_CASE("Krylov vs dense on a random symmetric operator, N = 64") {
    auto op = share(random_symmetric(64, 5));
    REQUIRE(op->self_adjoint());
    const auto a = oracle::dense_from_apply(*op);
    const auto w = op->grid().weights();
    for (double tau : {0.1, 1.0, 10.0}) {
        PhiEvaluator kr(op, 0.5, tau, ExpStrategy::Krylov, {1e-10, 64});
        PhiEvaluator de(op, 0.5, tau, ExpStrategy::Dense);
        for (int j = 0; j <= 2; ++j) {
            const auto v = oracle::random_vector(64, -1, 1, 7 + j);
            const auto ref = oracle::to_vec(oracle::dense_phi(a, w, 0.5, tau, j) * oracle::to_eigen(v));
            CHECK(input_rel_diff(kr.action(j, v), ref, v) <= 1e-10);
            CHECK(rel_diff(de.action(j, v), ref) <= 1e-12);
        }
    }
}

TEST_CASE("non-self-adjoint operator uses the augmented dense path") {
    auto g = build_grid(1, {0, 1}, 30, BoundaryCondition::periodic());
    SparseMatrix m = laplacian_fd(g, 0.01).interior();
    // upwind drift keeps the row structure but breaks symmetry
    const auto n = static_cast<Eigen::Index>(g.size());
    std::vector<Eigen::Triplet<double>> t;
    for (Eigen::Index i = 0; i < n; ++i) {
        t.emplace_back(i, i, -3.0);
        t.emplace_back(i, (i + 1) % n, 3.0);
    }
    SparseMatrix drift(n, n);
    drift.setFromTriplets(t.begin(), t.end());
    auto op = share(OperatorSpec::custom(g, m + drift));
    REQUIRE_FALSE(op->self_adjoint());
    const auto a = oracle::dense_from_apply(*op);
    const double kappa = 1.0, tau = 0.3;
    PhiEvaluator de(op, kappa, tau, ExpStrategy::Dense);
    PhiEvaluator kr(op, kappa, tau, ExpStrategy::Krylov, {1e-12, 64});
    const Eigen::MatrixXd lk = tau * (kappa * Eigen::MatrixXd::Identity(n, n) - a);
    const Eigen::MatrixXd p0 = dense_expm(-lk);
    const auto v = oracle::random_vector(g.size(), -1, 1, 3);
    const Eigen::VectorXd ve = oracle::to_eigen(v);
    // phi1 = L^{-1}(I - phi0), phi2 = L^{-1}(I - phi1)
    const Eigen::VectorXd r1 = lk.partialPivLu().solve(ve - p0 * ve);
    const Eigen::VectorXd r2 = lk.partialPivLu().solve(ve - r1);
    CHECK(rel_diff(de.action(0, v), oracle::to_vec(p0 * ve)) <= 1e-12);
    CHECK(rel_diff(de.action(1, v), oracle::to_vec(r1)) <= 1e-11);
    CHECK(rel_diff(de.action(2, v), oracle::to_vec(r2)) <= 1e-10);
    CHECK(input_rel_diff(kr.action(1, v), oracle::to_vec(r1), v) <= 1e-10);
    CHECK_THROWS_AS(PhiEvaluator(op, kappa, tau, ExpStrategy::Spectral), ConfigError);
}

TEST_CASE("eigenvector input returns the scaled eigenvector") {
    auto g = build_grid(2, {0, 1}, 16, BoundaryCondition::dirichlet());
    auto op = share(laplacian_fd(g, 0.02));
    // k = (1, 1)
    const double lam = -2 * 0.02 * 4.0 * 256 * std::pow(std::sin(std::numbers::pi / 32), 2);
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto x = g.coordinates(i);
        v[i] = std::sin(std::numbers::pi * x[0]) * std::sin(std::numbers::pi * x[1]);
    }
    const double kappa = 2.0, tau = 0.25;
    for (auto st : {ExpStrategy::Spectral, ExpStrategy::Dense, ExpStrategy::Krylov}) {
        PhiEvaluator ev(op, kappa, tau, st);
        for (int j = 0; j <= 2; ++j) {
            const double f = phi(j, tau * (kappa - lam));
            auto out = ev.action(j, v);
            for (std::size_t i = 0; i < v.size(); ++i) CHECK(out[i] == Approx(f * v[i]).margin(1e-12));
        }
    }
}

TEST_CASE("phi0 tends to the identity as tau tends to zero") {
    auto op = share(laplacian_fd(build_grid(2, {0, 1}, 16, BoundaryCondition::periodic()), 0.01));
    const auto v = oracle::random_vector(op->size(), -1, 1, 9);
    const double kappa = 2.0;
    auto lv = mbp::apply(*op, v);
    for (double tau : {1e-12, 1e-11, 1e-10})
        for (auto st : {ExpStrategy::Spectral, ExpStrategy::Dense, ExpStrategy::Krylov}) {
            PhiEvaluator ev(op, kappa, tau, st);
            auto out = ev.action(0, v);
            // phi_0 v = v - tau (kappa v - L v) + O(tau^2)
            double err = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i)
                err = std::max(err, std::abs(out[i] - (v[i] - tau * (kappa * v[i] - lv[i]))));
            CHECK(err <= 1e-14);
        }
}

TEST_CASE("sup-norm contraction of the semigroup") {
    for (const auto& op : structured_ops()) {
        for (double tau : {0.01, 1.0, 100.0}) {
            const double kappa = 2.0;
            auto st = op->spectrum() ? ExpStrategy::Spectral : ExpStrategy::Dense;
            PhiEvaluator ev(op, kappa, tau, st);
            for (int k = 0; k < 100; ++k) {
                const auto v = oracle::random_vector(op->size(), -1, 1, 1000 + static_cast<std::uint64_t>(k));
                const double lhs = oracle::max_abs(ev.action(0, v));
                CHECK(lhs <= std::exp(-kappa * tau) * oracle::max_abs(v) * (1 + 1e-12) + 1e-14);
            }
        }
    }
}

TEST_CASE("semigroup entries are nonnegative, N <= 64") {
    for (const auto& op : structured_ops()) {
        if (op->size() > 64) continue;
        const auto a = oracle::dense_from_apply(*op);
        for (double t : {0.01, 1.0, 100.0}) {
            Eigen::MatrixXd e = dense_expm(t * a);
            CHECK(e.minCoeff() >= -1e-14 * e.cwiseAbs().maxCoeff());
        }
    }
}

TEST_CASE("operator-form recurrence phi_j(A) v + A phi_{j+1}(A) v = phi_j(0) v") {
    for (const auto& op : structured_ops()) {
        const double kappa = 2.0, tau = 0.7;
        auto st = op->spectrum() ? ExpStrategy::Spectral : ExpStrategy::Dense;
        PhiEvaluator ev(op, kappa, tau, st);
        const auto v = oracle::random_vector(op->size(), -1, 1, 77);
        auto lk = [&](const std::vector<double>& x) {
            auto y = mbp::apply(*op, x);
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = tau * (kappa * x[i] - y[i]);
            return y;
        };
        auto p0 = ev.action(0, v), p1 = ev.action(1, v), p2 = ev.action(2, v);
        auto a1 = lk(p1), a2 = lk(p2);
        std::vector<double> r0(v.size()), r1(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            r0[i] = p0[i] + a1[i];
            r1[i] = p1[i] + a2[i];
        }
        INFO(to_string(op->family()) << " N=" << op->size());
        CHECK(rel_diff(r0, v) <= 1e-11);
        CHECK(rel_diff(r1, v) <= 1e-11);
    }
}

TEST_CASE("combination equals the sum of actions") {
    auto op = share(laplacian_fd(build_grid(2, {0, 1}, 12, BoundaryCondition::neumann()), 0.05));
    const auto a = oracle::random_vector(op->size(), -1, 1, 1);
    const auto b = oracle::random_vector(op->size(), -1, 1, 2);
    for (auto st : {ExpStrategy::Spectral, ExpStrategy::Dense, ExpStrategy::Krylov}) {
        PhiEvaluator ev(op, 2.0, 0.3, st);
        std::vector<PhiTerm> terms{{0, 1.0, a}, {1, 0.3, b}, {2, -0.2, a}};
        auto c = ev.combination(terms);
        auto x = ev.action(0, a), y = ev.action(1, b), z = ev.action(2, a);
        for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == Approx(x[i] + 0.3 * y[i] - 0.2 * z[i]).margin(1e-12));
    }
}

TEST_CASE("Krylov failure is a structured error") {
    auto op = share(laplacian_fd(build_grid(1, {0, 1}, 256, BoundaryCondition::dirichlet()), 1.0));
    PhiEvaluator ev(op, 2.0, 1.0, ExpStrategy::Krylov, {1e-14, 2});
    const auto v = oracle::random_vector(op->size(), -1, 1, 4);
    try {
        (void)ev.action(1, v);
        FAIL("expected a Krylov error");
    } catch (const KrylovError& e) {
        CHECK(e.residual_estimate() > 1e-14);
    }
}

TEST_CASE("evaluator argument validation") {
    auto op = share(laplacian_fd(build_grid(1, {0, 1}, 16, BoundaryCondition::dirichlet()), 1.0));
    CHECK_THROWS_AS(PhiEvaluator(op, 2.0, 0.0, ExpStrategy::Dense), ConfigError);
    CHECK_THROWS_AS(PhiEvaluator(op, -1.0, 0.1, ExpStrategy::Dense), ConfigError);
    CHECK_THROWS_AS(parse_exp_strategy("chebyshev"), ConfigError);
    CHECK(parse_exp_strategy("krylov") == ExpStrategy::Krylov);
    PhiEvaluator ev(op, 2.0, 0.1, ExpStrategy::Dense);
    CHECK_THROWS(ev.action(1, std::vector<double>(3, 0.0)));
}
