#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mbp/errors.hpp"

namespace mbp {

enum class BcKind { Periodic, Dirichlet, Neumann };

std::string to_string(BcKind kind);
BcKind parse_bc_kind(const std::string& name);

/// Boundary data g(t, x). An empty function means homogeneous data.
using BoundaryFunction = std::function<double(double, std::span<const double>)>;

struct BoundaryCondition {
    BcKind kind = BcKind::Periodic;
    BoundaryFunction g;
    bool time_dependent = false;

    static BoundaryCondition periodic();
    static BoundaryCondition neumann();
    static BoundaryCondition dirichlet(BoundaryFunction g = {}, bool time_dependent = false);

    double operator()(double t, std::span<const double> x) const;
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    bool operator==(const Interval&) const = default;
};

using LatticePoint = std::array<long, 3>;

/// Uniform tensor grid on a box with M0 subdivisions per axis. Active nodes are
/// ordered lexicographically with the last axis varying fastest.
class Grid {
public:
    Grid(int dim, std::vector<Interval> box, int subdivisions, BoundaryCondition bc);

    int dim() const { return dim_; }
    int subdivisions() const { return m0_; }
    double h() const { return h_; }
    BcKind bc_kind() const { return bc_.kind; }
    const BoundaryCondition& bc() const { return bc_; }
    const Interval& axis(int a) const { return box_[static_cast<std::size_t>(a)]; }

    /// Active nodes per axis: M0 (periodic), M0 - 1 (Dirichlet), M0 + 1 (Neumann).
    std::size_t nodes_per_axis() const { return m_; }
    std::size_t size() const { return n_; }

    /// Lattice offset of the first active node from the lower corner.
    long first_offset() const { return bc_.kind == BcKind::Dirichlet ? 1 : 0; }

    std::array<std::size_t, 3> multi_index(std::size_t i) const;
    std::size_t flat_index(std::span<const std::size_t> idx) const;

    /// Lattice coordinates (units of h from the lower corner) of active node i.
    LatticePoint lattice(std::size_t i) const;
    double coordinate(std::size_t i, int a) const;
    std::vector<double> coordinates(std::size_t i) const;
    std::vector<double> lattice_coordinates(const LatticePoint& p) const;

    /// Trapezoid weight: 1/2 per axis on which the node sits on a Neumann face.
    double weight(std::size_t i) const;
    std::vector<double> weights() const;

    /// Lattice points outside the active set within `layers` rings of it (Dirichlet only).
    std::vector<LatticePoint> boundary_points(long layers) const;

private:
    int dim_;
    std::vector<Interval> box_;
    int m0_;
    double h_;
    BoundaryCondition bc_;
    std::size_t m_;
    std::size_t n_;
};

Grid build_grid(int dim, Interval interval, int subdivisions, BoundaryCondition bc);

enum class FieldKind { Scalar, Vector, Matrix };

/// Nodal field, stored node-major. Vector fields hold m components per node,
/// matrix fields hold a symmetric m x m block per node in row-major order.
class Field {
public:
    Field() = default;

    static Field scalar(std::vector<double> values);
    static Field vector(std::size_t m, std::vector<double> values);
    static Field matrix(std::size_t m, std::vector<double> values, double symmetry_tol = 1e-12);

    FieldKind kind() const { return kind_; }
    std::size_t m() const { return m_; }
    std::size_t components() const { return stride_; }
    std::size_t nodes() const { return stride_ == 0 ? 0 : data_.size() / stride_; }

    std::span<const double> values() const { return data_; }
    std::span<double> values() { return data_; }
    std::span<const double> node(std::size_t i) const {
        return std::span<const double>(data_).subspan(i * stride_, stride_);
    }

    std::vector<double> component(std::size_t c) const;

    Field with_values(std::vector<double> values) const;

private:
    Field(FieldKind kind, std::size_t m, std::size_t stride, std::vector<double> data)
        : kind_(kind), m_(m), stride_(stride), data_(std::move(data)) {}

    FieldKind kind_ = FieldKind::Scalar;
    std::size_t m_ = 1;
    std::size_t stride_ = 1;
    std::vector<double> data_;
};

/// Spectral 2-norm of a symmetric m x m block.
double symmetric_norm2(std::span<const double> block, std::size_t m);

double node_norm(const Field& f, std::size_t i);

/// max_i |v_i| (scalar), Euclidean norm (vector), spectral 2-norm (matrix).
double sup_norm(const Field& f);
double sup_norm(std::span<const double> v);

}  // namespace mbp
