#pragma once

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mbp/operators.hpp"

namespace mbp {

/// phi_0(a) = e^{-a}, phi_{j+1}(a) = (1/j! - phi_j(a)) / a, with Taylor tails below a = 1e-2.
/// Defined for j in 0..3; j = 3 only feeds the Krylov error estimate.
double phi(int j, double a);

enum class ExpStrategy { Spectral, Krylov, Dense };

std::string to_string(ExpStrategy s);
ExpStrategy parse_exp_strategy(const std::string& name);

struct KrylovOptions {
    double tol = 1e-12;
    int max_dim = 64;
};

struct PhiTerm {
    int j;
    double coeff;
    std::span<const double> v;
};

/// Actions of phi_j(tau (kappa I - L_h0)) bound to one operator, kappa and tau.
class PhiEvaluator {
public:
    PhiEvaluator(std::shared_ptr<const OperatorSpec> op, double kappa, double tau, ExpStrategy strategy,
                 KrylovOptions krylov = {});
    ~PhiEvaluator();
    PhiEvaluator(PhiEvaluator&&) noexcept;
    PhiEvaluator& operator=(PhiEvaluator&&) noexcept;

    ExpStrategy strategy() const { return strategy_; }
    double kappa() const { return kappa_; }
    double tau() const { return tau_; }
    std::size_t size() const { return op_->size(); }
    const OperatorSpec& op() const { return *op_; }

    std::vector<double> action(int j, std::span<const double> v) const;

    /// sum_k coeff_k phi_{j_k}(tau L_kappa) v_k.
    std::vector<double> combination(std::span<const PhiTerm> terms) const;

    class Impl;

private:
    std::shared_ptr<const OperatorSpec> op_;
    double kappa_;
    double tau_;
    ExpStrategy strategy_;
    std::unique_ptr<Impl> impl_;
};

/// e^A by scaling and squaring with the degree-13 Pade approximant.
Eigen::MatrixXd dense_expm(const Eigen::MatrixXd& a);

/// Dense L_h0 assembled from the sparse interior block.
Eigen::MatrixXd dense_matrix(const OperatorSpec& op);

}  // namespace mbp
