#include "mbp/grid.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace mbp {

std::string to_string(BcKind kind) {
    switch (kind) {
    case BcKind::Periodic: return "periodic";
    case BcKind::Dirichlet: return "dirichlet";
    case BcKind::Neumann: return "neumann";
    }
    return "unknown";
}

BcKind parse_bc_kind(const std::string& name) {
    if (name == "periodic") return BcKind::Periodic;
    if (name == "dirichlet") return BcKind::Dirichlet;
    if (name == "neumann") return BcKind::Neumann;
    throw ConfigError("unknown boundary condition '" + name + "'");
}

BoundaryCondition BoundaryCondition::periodic() { return {BcKind::Periodic, {}, false}; }

BoundaryCondition BoundaryCondition::neumann() { return {BcKind::Neumann, {}, false}; }

BoundaryCondition BoundaryCondition::dirichlet(BoundaryFunction g, bool time_dependent) {
    return {BcKind::Dirichlet, std::move(g), time_dependent};
}

double BoundaryCondition::operator()(double t, std::span<const double> x) const {
    return g ? g(t, x) : 0.0;
}

Grid::Grid(int dim, std::vector<Interval> box, int subdivisions, BoundaryCondition bc)
    : dim_(dim), box_(std::move(box)), m0_(subdivisions), bc_(std::move(bc)) {
    if (dim_ < 1 || dim_ > 3) throw ConfigError("grid dimension must be 1, 2 or 3");
    if (box_.size() != static_cast<std::size_t>(dim_))
        throw ConfigError("box must have one interval per axis");
    if (m0_ < 2) throw ConfigError("subdivisions must be at least 2");
    if (bc_.kind == BcKind::Dirichlet && m0_ < 2)
        throw ConfigError("Dirichlet grid needs at least one interior node");
    const double width = box_[0].hi - box_[0].lo;
    for (const auto& iv : box_) {
        if (!(iv.hi > iv.lo)) throw ConfigError("degenerate box interval");
        if (std::abs((iv.hi - iv.lo) - width) > 1e-12 * std::max(1.0, std::abs(width)))
            throw ConfigError("box must have equal widths on every axis");
    }
    h_ = width / m0_;
    switch (bc_.kind) {
    case BcKind::Periodic: m_ = static_cast<std::size_t>(m0_); break;
    case BcKind::Dirichlet: m_ = static_cast<std::size_t>(m0_ - 1); break;
    case BcKind::Neumann: m_ = static_cast<std::size_t>(m0_ + 1); break;
    }
    n_ = 1;
    for (int a = 0; a < dim_; ++a) n_ *= m_;
}

std::array<std::size_t, 3> Grid::multi_index(std::size_t i) const {
    std::array<std::size_t, 3> idx{0, 0, 0};
    for (int a = dim_ - 1; a >= 0; --a) {
        idx[static_cast<std::size_t>(a)] = i % m_;
        i /= m_;
    }
    return idx;
}

std::size_t Grid::flat_index(std::span<const std::size_t> idx) const {
    std::size_t i = 0;
    for (int a = 0; a < dim_; ++a) i = i * m_ + idx[static_cast<std::size_t>(a)];
    return i;
}

LatticePoint Grid::lattice(std::size_t i) const {
    auto idx = multi_index(i);
    LatticePoint p{0, 0, 0};
    for (int a = 0; a < dim_; ++a)
        p[static_cast<std::size_t>(a)] = static_cast<long>(idx[static_cast<std::size_t>(a)]) + first_offset();
    return p;
}

double Grid::coordinate(std::size_t i, int a) const {
    return box_[static_cast<std::size_t>(a)].lo + static_cast<double>(lattice(i)[static_cast<std::size_t>(a)]) * h_;
}

std::vector<double> Grid::coordinates(std::size_t i) const { return lattice_coordinates(lattice(i)); }

std::vector<double> Grid::lattice_coordinates(const LatticePoint& p) const {
    std::vector<double> x(static_cast<std::size_t>(dim_));
    for (int a = 0; a < dim_; ++a) {
        auto ua = static_cast<std::size_t>(a);
        x[ua] = box_[ua].lo + static_cast<double>(p[ua]) * h_;
    }
    return x;
}

double Grid::weight(std::size_t i) const {
    if (bc_.kind != BcKind::Neumann) return 1.0;
    auto idx = multi_index(i);
    double w = 1.0;
    for (int a = 0; a < dim_; ++a) {
        auto k = idx[static_cast<std::size_t>(a)];
        if (k == 0 || k == m_ - 1) w *= 0.5;
    }
    return w;
}

std::vector<double> Grid::weights() const {
    std::vector<double> w(n_);
    for (std::size_t i = 0; i < n_; ++i) w[i] = weight(i);
    return w;
}

std::vector<LatticePoint> Grid::boundary_points(long layers) const {
    std::vector<LatticePoint> out;
    if (bc_.kind != BcKind::Dirichlet || layers <= 0) return out;
    const long lo = 1 - layers;
    const long hi = m0_ - 1 + layers;
    const long span = hi - lo + 1;
    long total = 1;
    for (int a = 0; a < dim_; ++a) total *= span;
    for (long flat = 0; flat < total; ++flat) {
        LatticePoint p{0, 0, 0};
        long rem = flat;
        bool inside = true;
        for (int a = dim_ - 1; a >= 0; --a) {
            long c = lo + rem % span;
            rem /= span;
            p[static_cast<std::size_t>(a)] = c;
            if (c < 1 || c > m0_ - 1) inside = false;
        }
        if (!inside) out.push_back(p);
    }
    return out;
}

Grid build_grid(int dim, Interval interval, int subdivisions, BoundaryCondition bc) {
    if (dim < 1 || dim > 3) throw ConfigError("grid dimension must be 1, 2 or 3");
    return Grid(dim, std::vector<Interval>(static_cast<std::size_t>(dim), interval), subdivisions,
                std::move(bc));
}

Field Field::scalar(std::vector<double> values) { return Field(FieldKind::Scalar, 1, 1, std::move(values)); }

Field Field::vector(std::size_t m, std::vector<double> values) {
    if (m == 0 || values.size() % m != 0) throw Error("vector field size is not a multiple of m");
    return Field(FieldKind::Vector, m, m, std::move(values));
}

Field Field::matrix(std::size_t m, std::vector<double> values, double symmetry_tol) {
    const std::size_t stride = m * m;
    if (m == 0 || values.size() % stride != 0) throw Error("matrix field size is not a multiple of m*m");
    for (std::size_t base = 0; base < values.size(); base += stride)
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = r + 1; c < m; ++c)
                if (std::abs(values[base + r * m + c] - values[base + c * m + r]) > symmetry_tol)
                    throw Error("matrix field is not symmetric at node " + std::to_string(base / stride));
    return Field(FieldKind::Matrix, m, stride, std::move(values));
}

std::vector<double> Field::component(std::size_t c) const {
    std::vector<double> out(nodes());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = data_[i * stride_ + c];
    return out;
}

Field Field::with_values(std::vector<double> values) const {
    if (values.size() != data_.size()) throw Error("field size mismatch");
    return Field(kind_, m_, stride_, std::move(values));
}

double symmetric_norm2(std::span<const double> block, std::size_t m) {
    if (m == 1) return std::abs(block[0]);
    if (m == 2) {
        double a = block[0], b = block[1], d = block[3];
        double mean = 0.5 * (a + d);
        double rad = std::hypot(0.5 * (a - d), b);
        return std::abs(mean) + rad;
    }
    Eigen::MatrixXd q(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c)
            q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = block[r * m + c];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double node_norm(const Field& f, std::size_t i) {
    auto v = f.node(i);
    switch (f.kind()) {
    case FieldKind::Scalar: return std::abs(v[0]);
    case FieldKind::Vector: {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    }
    case FieldKind::Matrix: return symmetric_norm2(v, f.m());
    }
    return 0.0;
}

double sup_norm(const Field& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.nodes(); ++i) {
        double n = node_norm(f, i);
        if (std::isnan(n)) return n;
        s = std::max(s, n);
    }
    return s;
}

double sup_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) {
        if (std::isnan(x)) return x;
        s = std::max(s, std::abs(x));
    }
    return s;
}

}  // namespace mbp
