#pragma once

#include <Eigen/SparseCore>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mbp/grid.hpp"

namespace mbp {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class OperatorFamily { Laplacian, Nonlocal, Fractional, Fem, Custom };

std::string to_string(OperatorFamily family);
OperatorFamily parse_operator_family(const std::string& name);

/// Per-axis real orthogonal transform: sine (DST-I), cosine (DCT-I), real Fourier (halfcomplex).
enum class TransformKind { Sine, Cosine, Fourier };

/// Eigenvalues of L_h0 in the coefficient order produced by the row-major
/// multi-dimensional transform with the given per-axis kinds.
struct Spectrum {
    std::vector<TransformKind> axes;
    std::size_t axis_size = 0;
    std::vector<double> eigenvalues;
};

/// How a row must sum for constants to be annihilated.
enum class ConstantCheck {
    ZeroRowSum,         // periodic and Neumann
    FullRowZeroSum,     // Dirichlet: interior plus coupling entries
    NonPositiveRowSum,  // fractional: exterior mass lives beyond the constraint set
};

enum class NonlocalKernel { Constant, FractionalTruncated };

NonlocalKernel parse_nonlocal_kernel(const std::string& name);
std::string to_string(NonlocalKernel kernel);

class OperatorSpec {
public:
    struct Parts {
        OperatorFamily family = OperatorFamily::Custom;
        Grid grid;
        double diffusion = 1.0;
        SparseMatrix interior{};
        SparseMatrix coupling{};
        std::vector<LatticePoint> constraint_points{};
        std::optional<Spectrum> spectrum{};
        bool self_adjoint = true;
        ConstantCheck constant_check = ConstantCheck::ZeroRowSum;
    };

    explicit OperatorSpec(Parts parts);

    /// Wraps a hand-built matrix; self-adjointness is detected numerically.
    static OperatorSpec custom(Grid grid, SparseMatrix interior);

    OperatorFamily family() const { return p_.family; }
    const Grid& grid() const { return p_.grid; }
    double diffusion() const { return p_.diffusion; }
    std::size_t size() const { return static_cast<std::size_t>(p_.interior.rows()); }
    const SparseMatrix& interior() const { return p_.interior; }
    const SparseMatrix& coupling() const { return p_.coupling; }
    std::size_t constraint_count() const { return p_.constraint_points.size(); }
    const std::vector<LatticePoint>& constraint_points() const { return p_.constraint_points; }
    const std::optional<Spectrum>& spectrum() const { return p_.spectrum; }
    /// Self-adjoint in the trapezoid-weighted inner product of the grid.
    bool self_adjoint() const { return p_.self_adjoint; }
    ConstantCheck constant_check() const { return p_.constant_check; }

private:
    Parts p_;
};

OperatorSpec laplacian_fd(const Grid& grid, double eps2 = 1.0);

struct NonlocalOptions {
    NonlocalKernel kernel = NonlocalKernel::Constant;
    double s = 0.5;  // fractional-truncated kernel exponent
    int quadrature_points = 64;
};

OperatorSpec nonlocal_fd(const Grid& grid, double delta, NonlocalOptions options = {}, double eps2 = 1.0);

/// Offset weights c_o (units of 1/h^2 removed) for h = 1, half-space listing
/// over the full symmetric stencil. Exposed for oracle checks.
struct StencilWeight {
    LatticePoint offset;
    double weight;
};
std::vector<StencilWeight> nonlocal_stencil(int dim, double delta_over_h, const NonlocalOptions& options);

enum class FractionalGamma { Two, OnePlusS };

FractionalGamma parse_fractional_gamma(const std::string& name);
std::string to_string(FractionalGamma g);

/// |c_{1,s}| = 2^{2s} s Gamma(1/2 + s) / (sqrt(pi) Gamma(1 - s)).
double fractional_constant(double s);

OperatorSpec fractional_fd_1d(const Grid& grid, double s, FractionalGamma gamma, double eps2 = 1.0);

OperatorSpec fem_p1_uniform(const Grid& grid, double eps2 = 1.0);

/// Values of g(t, .) at the constraint points of the operator.
std::vector<double> constraint_values(const OperatorSpec& op, const BoundaryFunction& g, double t);

/// L_hc applied to constraint values.
std::vector<double> boundary_forcing(const OperatorSpec& op, std::span<const double> values);

/// L_hc g(t) with g taken from the grid's boundary condition; zero unless Dirichlet.
std::vector<double> boundary_forcing(const OperatorSpec& op, double t);

std::vector<double> apply(const OperatorSpec& op, std::span<const double> x);
void apply(const OperatorSpec& op, std::span<const double> x, std::span<double> y);

/// Componentwise application to vector and matrix fields.
Field apply(const OperatorSpec& op, const Field& f);

enum class RowDefect { Sign, Dominance, ConstantAnnihilation };

std::string to_string(RowDefect d);

struct RowFailure {
    std::size_t row;
    RowDefect defect;
    double magnitude;
};

struct StructureReport {
    std::vector<RowFailure> failures;
    /// max over rows of | |a_ii| - sum_{j != i} |a_ij| | / |a_ii|, coupling columns included.
    double max_row_identity_deviation = 0.0;

    bool passed() const { return failures.empty(); }
    bool has(RowDefect d) const;
};

StructureReport verify_structure(const OperatorSpec& op, double rel_tol = 1e-12);
StructureReport verify_structure(const SparseMatrix& interior, const SparseMatrix* coupling, ConstantCheck check,
                                 double rel_tol = 1e-12);

/// `row,col,value` triplets.
std::string encode_triplets(const SparseMatrix& m);

}  // namespace mbp
