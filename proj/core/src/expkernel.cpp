#include "mbp/expkernel.hpp"

#include <fftw3.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

namespace mbp {

namespace {

constexpr double kTaylorThreshold = 1e-2;

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

Eigen::MatrixXd expm_unguarded(const Eigen::MatrixXd& a) {
    static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                   1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                   670442572800.0,      33522128640.0,       1323241920.0,
                                   40840800.0,          960960.0,            16380.0,
                                   182.0,               1.0};
    constexpr double theta13 = 5.371920351148152;
    const Eigen::Index n = a.rows();
    const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    if (norm1 > theta13) s = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta13))));
    const Eigen::MatrixXd x = a / std::ldexp(1.0, s);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd x2 = x * x;
    const Eigen::MatrixXd x4 = x2 * x2;
    const Eigen::MatrixXd x6 = x4 * x2;
    const Eigen::MatrixXd u =
        x * (x6 * (b[13] * x6 + b[11] * x4 + b[9] * x2) + b[7] * x6 + b[5] * x4 + b[3] * x2 + b[1] * id);
    const Eigen::MatrixXd v = x6 * (b[12] * x6 + b[10] * x4 + b[8] * x2) + b[6] * x6 + b[4] * x4 + b[2] * x2 + b[0] * id;
    Eigen::MatrixXd r = (v - u).partialPivLu().solve(v + u);
    for (int k = 0; k < s; ++k) r = r * r;
    return r;
}

/// Columns k = 0..p of [exp(-tau H) e1, phi_1(tau H) e1, ..., phi_p(tau H) e1] via the augmented matrix.
Eigen::MatrixXd small_phi_columns(const Eigen::MatrixXd& h, double tau, int p) {
    const Eigen::Index m = h.rows();
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(m + p, m + p);
    aug.topLeftCorner(m, m) = -tau * h;
    if (p > 0) aug(0, m) = 1.0;
    for (int k = 1; k < p; ++k) aug(m + k - 1, m + k) = 1.0;
    const Eigen::MatrixXd e = expm_unguarded(aug);
    Eigen::MatrixXd out(m, p + 1);
    out.col(0) = e.topLeftCorner(m, m).col(0);
    for (int k = 1; k <= p; ++k) out.col(k) = e.block(0, m + k - 1, m, 1);
    return out;
}

}  // namespace

double phi(int j, double a) {
    // closed forms run in extended precision: 1 - phi_1 loses log10(2/a) digits near the threshold
    const long double x = a;
    switch (j) {
    case 0: return std::exp(-a);
    case 1:
        if (std::abs(a) < kTaylorThreshold)
            return 1.0 - a / 2.0 + a * a / 6.0 - a * a * a / 24.0 + a * a * a * a / 120.0 - a * a * a * a * a / 720.0;
        return static_cast<double>(-std::expm1(-x) / x);
    case 2:
        if (std::abs(a) < kTaylorThreshold)
            return 0.5 - a / 6.0 + a * a / 24.0 - a * a * a / 120.0 + a * a * a * a / 720.0 - a * a * a * a * a / 5040.0;
        return static_cast<double>((1.0L + std::expm1(-x) / x) / x);
    case 3:
        if (std::abs(a) < kTaylorThreshold)
            return 1.0 / 6.0 - a / 24.0 + a * a / 120.0 - a * a * a / 720.0 + a * a * a * a / 5040.0 -
                   a * a * a * a * a / 40320.0;
        return static_cast<double>((0.5L - (1.0L + std::expm1(-x) / x) / x) / x);
    default: throw Error("phi index must be 0..3");
    }
}

std::string to_string(ExpStrategy s) {
    switch (s) {
    case ExpStrategy::Spectral: return "spectral";
    case ExpStrategy::Krylov: return "krylov";
    case ExpStrategy::Dense: return "dense";
    }
    return "unknown";
}

ExpStrategy parse_exp_strategy(const std::string& name) {
    if (name == "spectral") return ExpStrategy::Spectral;
    if (name == "krylov") return ExpStrategy::Krylov;
    if (name == "dense") return ExpStrategy::Dense;
    throw ConfigError("unknown exp.strategy '" + name + "'");
}

Eigen::MatrixXd dense_expm(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw Error("dense_expm needs a square matrix");
    if (a.rows() > 1024) throw Error("dense_expm is limited to N <= 1024");
    return expm_unguarded(a);
}

Eigen::MatrixXd dense_matrix(const OperatorSpec& op) { return Eigen::MatrixXd(op.interior()); }

class PhiEvaluator::Impl {
public:
    virtual ~Impl() = default;
    virtual std::vector<double> combination(std::span<const PhiTerm> terms) const = 0;
};

namespace {

class SpectralImpl final : public PhiEvaluator::Impl {
public:
    SpectralImpl(const OperatorSpec& op, double kappa, double tau) : n_(op.size()) {
        const auto& spec = *op.spectrum();
        const int rank = static_cast<int>(spec.axes.size());
        std::vector<int> dims(static_cast<std::size_t>(rank), static_cast<int>(spec.axis_size));
        std::vector<fftw_r2r_kind> fwd, bwd;
        double scale = 1.0;
        const double na = static_cast<double>(spec.axis_size);
        for (auto k : spec.axes) {
            switch (k) {
            case TransformKind::Sine:
                fwd.push_back(FFTW_RODFT00);
                bwd.push_back(FFTW_RODFT00);
                scale *= 2.0 * (na + 1.0);
                break;
            case TransformKind::Cosine:
                fwd.push_back(FFTW_REDFT00);
                bwd.push_back(FFTW_REDFT00);
                scale *= 2.0 * (na - 1.0);
                break;
            case TransformKind::Fourier:
                fwd.push_back(FFTW_R2HC);
                bwd.push_back(FFTW_HC2R);
                scale *= na;
                break;
            }
        }
        std::vector<double> scratch(n_);
        {
            std::lock_guard lock(fftw_planner_mutex());
            const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
            forward_ = fftw_plan_r2r(rank, dims.data(), scratch.data(), scratch.data(), fwd.data(), flags);
            backward_ = fftw_plan_r2r(rank, dims.data(), scratch.data(), scratch.data(), bwd.data(), flags);
        }
        if (!forward_ || !backward_) throw Error("FFTW planning failed");
        for (int j = 0; j < 3; ++j) {
            auto& f = factor_[static_cast<std::size_t>(j)];
            f.resize(n_);
            for (std::size_t k = 0; k < n_; ++k) f[k] = phi(j, tau * (kappa - spec.eigenvalues[k])) / scale;
        }
    }

    ~SpectralImpl() override {
        std::lock_guard lock(fftw_planner_mutex());
        if (forward_) fftw_destroy_plan(forward_);
        if (backward_) fftw_destroy_plan(backward_);
    }

    std::vector<double> combination(std::span<const PhiTerm> terms) const override {
        std::vector<double> acc(n_, 0.0), tmp(n_);
        for (const auto& t : terms) {
            if (t.v.size() != n_) throw Error("vector length does not match operator");
            if (t.j < 0 || t.j > 2) throw Error("phi index must be 0..2");
            std::copy(t.v.begin(), t.v.end(), tmp.begin());
            fftw_execute_r2r(forward_, tmp.data(), tmp.data());
            const auto& f = factor_[static_cast<std::size_t>(t.j)];
            for (std::size_t k = 0; k < n_; ++k) acc[k] += t.coeff * f[k] * tmp[k];
        }
        fftw_execute_r2r(backward_, acc.data(), acc.data());
        return acc;
    }

private:
    std::size_t n_;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
    std::array<std::vector<double>, 3> factor_;
};

class DenseSymmetricImpl final : public PhiEvaluator::Impl {
public:
    DenseSymmetricImpl(const OperatorSpec& op, double kappa, double tau) {
        auto w = op.grid().weights();
        const auto n = static_cast<Eigen::Index>(op.size());
        sqrt_w_.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) sqrt_w_(i) = std::sqrt(w[static_cast<std::size_t>(i)]);
        Eigen::MatrixXd s = sqrt_w_.asDiagonal() * dense_matrix(op) * sqrt_w_.cwiseInverse().asDiagonal();
        s = 0.5 * (s + s.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
        if (es.info() != Eigen::Success) throw Error("dense eigendecomposition failed");
        vecs_ = es.eigenvectors();
        for (int j = 0; j < 3; ++j) {
            auto& f = factor_[static_cast<std::size_t>(j)];
            f.resize(n);
            for (Eigen::Index k = 0; k < n; ++k) f(k) = phi(j, tau * (kappa - es.eigenvalues()(k)));
        }
    }

    std::vector<double> combination(std::span<const PhiTerm> terms) const override {
        const Eigen::Index n = vecs_.rows();
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
        for (const auto& t : terms) {
            if (static_cast<Eigen::Index>(t.v.size()) != n) throw Error("vector length does not match operator");
            if (t.j < 0 || t.j > 2) throw Error("phi index must be 0..2");
            Eigen::Map<const Eigen::VectorXd> v(t.v.data(), n);
            Eigen::VectorXd c = vecs_.transpose() * (sqrt_w_.cwiseProduct(v));
            acc += t.coeff * factor_[static_cast<std::size_t>(t.j)].cwiseProduct(c);
        }
        Eigen::VectorXd y = (vecs_ * acc).cwiseQuotient(sqrt_w_);
        return {y.data(), y.data() + n};
    }

private:
    Eigen::VectorXd sqrt_w_;
    Eigen::MatrixXd vecs_;
    std::array<Eigen::VectorXd, 3> factor_;
};

class DenseGeneralImpl final : public PhiEvaluator::Impl {
public:
    DenseGeneralImpl(const OperatorSpec& op, double kappa, double tau) {
        const auto n = static_cast<Eigen::Index>(op.size());
        Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(3 * n, 3 * n);
        aug.topLeftCorner(n, n) = -tau * (kappa * Eigen::MatrixXd::Identity(n, n) - dense_matrix(op));
        aug.block(0, n, n, n) = Eigen::MatrixXd::Identity(n, n);
        aug.block(n, 2 * n, n, n) = Eigen::MatrixXd::Identity(n, n);
        const Eigen::MatrixXd e = expm_unguarded(aug);
        for (Eigen::Index j = 0; j < 3; ++j) phi_[static_cast<std::size_t>(j)] = e.block(0, j * n, n, n);
    }

    std::vector<double> combination(std::span<const PhiTerm> terms) const override {
        const Eigen::Index n = phi_[0].rows();
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
        for (const auto& t : terms) {
            if (static_cast<Eigen::Index>(t.v.size()) != n) throw Error("vector length does not match operator");
            if (t.j < 0 || t.j > 2) throw Error("phi index must be 0..2");
            Eigen::Map<const Eigen::VectorXd> v(t.v.data(), n);
            acc += t.coeff * (phi_[static_cast<std::size_t>(t.j)] * v);
        }
        return {acc.data(), acc.data() + n};
    }

private:
    std::array<Eigen::MatrixXd, 3> phi_;
};

class KrylovImpl final : public PhiEvaluator::Impl {
public:
    KrylovImpl(const OperatorSpec& op, double kappa, double tau, KrylovOptions opt)
        : op_(op), kappa_(kappa), tau_(tau), opt_(opt) {
        auto w = op.grid().weights();
        w_ = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        min_w_ = w_.minCoeff();
        if (!(opt_.tol > 0.0) || opt_.max_dim < 1) throw ConfigError("krylov.tol and max_dim must be positive");
    }

    std::vector<double> combination(std::span<const PhiTerm> terms) const override {
        const auto n = static_cast<Eigen::Index>(op_.size());
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
        for (const auto& t : terms) {
            if (static_cast<Eigen::Index>(t.v.size()) != n) throw Error("vector length does not match operator");
            if (t.j < 0 || t.j > 2) throw Error("phi index must be 0..2");
            acc += t.coeff * action(t.j, Eigen::Map<const Eigen::VectorXd>(t.v.data(), n));
        }
        return {acc.data(), acc.data() + n};
    }

private:
    double wdot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const { return (w_.cwiseProduct(a)).dot(b); }

    Eigen::VectorXd apply_a(const Eigen::VectorXd& x) const {
        Eigen::VectorXd y = op_.interior() * x;
        return kappa_ * x - y;
    }

    /// phi_j(tau H) e1 and the error-estimate column phi_{j+1}(tau H) e1.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> small_phi(const Eigen::MatrixXd& h, int j) const {
        const Eigen::Index m = h.rows();
        if (op_.self_adjoint()) {
            Eigen::MatrixXd t = 0.5 * (h + h.transpose());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
            const Eigen::MatrixXd& q = es.eigenvectors();
            Eigen::VectorXd f0(m), f1(m);
            for (Eigen::Index k = 0; k < m; ++k) {
                f0(k) = phi(j, tau_ * es.eigenvalues()(k)) * q(0, k);
                f1(k) = phi(j + 1, tau_ * es.eigenvalues()(k)) * q(0, k);
            }
            return {q * f0, q * f1};
        }
        Eigen::MatrixXd cols = small_phi_columns(h, tau_, j + 1);
        return {cols.col(j), cols.col(j + 1)};
    }

    Eigen::VectorXd action(int j, const Eigen::Ref<const Eigen::VectorXd>& v) const {
        const Eigen::Index n = v.size();
        const double beta = std::sqrt(wdot(v, v));
        if (beta == 0.0) return Eigen::VectorXd::Zero(n);
        const double target = opt_.tol * std::max(v.cwiseAbs().maxCoeff(), 1e-300) * std::sqrt(min_w_);
        const Eigen::Index limit = std::min<Eigen::Index>(2 * opt_.max_dim, n);
        Eigen::MatrixXd basis(n, limit + 1);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(limit + 1, limit);
        basis.col(0) = v / beta;
        double estimate = std::numeric_limits<double>::infinity();
        double hnorm = 0.0;
        for (Eigen::Index m = 0; m < limit; ++m) {
            Eigen::VectorXd w = apply_a(basis.col(m));
            for (int pass = 0; pass < 2; ++pass) {
                for (Eigen::Index i = 0; i <= m; ++i) {
                    const double c = wdot(basis.col(i), w);
                    h(i, m) += c;
                    w -= c * basis.col(i);
                }
            }
            const double next = std::sqrt(wdot(w, w));
            h(m + 1, m) = next;
            hnorm = std::max(hnorm, h.col(m).cwiseAbs().sum());
            const Eigen::Index dim = m + 1;
            const bool breakdown = next <= 1e-14 * std::max(hnorm, 1e-300) || dim == n;
            auto [y, z] = small_phi(h.topLeftCorner(dim, dim), j);
            estimate = breakdown ? 0.0 : beta * tau_ * next * std::abs(z(dim - 1));
            if (estimate <= target) return beta * (basis.leftCols(dim) * y);
            basis.col(m + 1) = w / next;
        }
        std::ostringstream os;
        os << "Krylov phi_" << j << " action did not converge within dimension " << limit << " (estimate "
           << estimate << ", target " << target << ")";
        throw KrylovError(estimate, os.str());
    }

    const OperatorSpec& op_;
    double kappa_;
    double tau_;
    KrylovOptions opt_;
    Eigen::VectorXd w_;
    double min_w_ = 1.0;
};

}  // namespace

PhiEvaluator::PhiEvaluator(std::shared_ptr<const OperatorSpec> op, double kappa, double tau, ExpStrategy strategy,
                           KrylovOptions krylov)
    : op_(std::move(op)), kappa_(kappa), tau_(tau), strategy_(strategy) {
    if (!op_) throw Error("null operator");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("stepper.tau must be positive and finite");
    if (!(kappa >= 0.0)) throw ConfigError("kappa must be nonnegative");
    switch (strategy) {
    case ExpStrategy::Spectral:
        if (!op_->spectrum())
            throw ConfigError("exp.strategy spectral needs an operator with a known spectrum (" +
                              to_string(op_->family()) + " with " + to_string(op_->grid().bc_kind()) + " bc has none)");
        impl_ = std::make_unique<SpectralImpl>(*op_, kappa, tau);
        break;
    case ExpStrategy::Dense:
        if (op_->self_adjoint()) {
            if (op_->size() > 4096) throw ConfigError("exp.strategy dense is limited to N <= 4096");
            impl_ = std::make_unique<DenseSymmetricImpl>(*op_, kappa, tau);
        } else {
            if (op_->size() > 341) throw ConfigError("dense path for non-self-adjoint operators is limited to N <= 341");
            impl_ = std::make_unique<DenseGeneralImpl>(*op_, kappa, tau);
        }
        break;
    case ExpStrategy::Krylov: impl_ = std::make_unique<KrylovImpl>(*op_, kappa, tau, krylov); break;
    }
}

PhiEvaluator::~PhiEvaluator() = default;
PhiEvaluator::PhiEvaluator(PhiEvaluator&&) noexcept = default;
PhiEvaluator& PhiEvaluator::operator=(PhiEvaluator&&) noexcept = default;

std::vector<double> PhiEvaluator::action(int j, std::span<const double> v) const {
    PhiTerm t{j, 1.0, v};
    return impl_->combination(std::span<const PhiTerm>(&t, 1));
}

std::vector<double> PhiEvaluator::combination(std::span<const PhiTerm> terms) const {
    return impl_->combination(terms);
}

}  // namespace mbp
