#include "mbp/operators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>

namespace mbp {

namespace {

using Triplet = Eigen::Triplet<double>;

SparseMatrix from_triplets(std::size_t rows, std::size_t cols, const std::vector<Triplet>& t) {
    SparseMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

/// Maps lattice points outside the active set to coupling columns, in first-seen order.
class ConstraintIndex {
public:
    std::size_t column(const LatticePoint& p) {
        auto [it, inserted] = index_.emplace(p, points_.size());
        if (inserted) points_.push_back(p);
        return it->second;
    }
    std::vector<LatticePoint> take() { return std::move(points_); }

private:
    std::map<LatticePoint, std::size_t> index_;
    std::vector<LatticePoint> points_;
};

/// Active-node index of lattice point p, or -1 when it lies outside the active set.
long active_index(const Grid& g, const LatticePoint& p) {
    const long m = static_cast<long>(g.nodes_per_axis());
    long flat = 0;
    for (int a = 0; a < g.dim(); ++a) {
        long k = p[static_cast<std::size_t>(a)] - g.first_offset();
        if (k < 0 || k >= m) return -1;
        flat = flat * m + k;
    }
    return flat;
}

long wrap(long k, long m) {
    k %= m;
    return k < 0 ? k + m : k;
}

double laplacian_eigenvalue_1d(TransformKind kind, std::size_t r, std::size_t n, int m0, double h) {
    const double pi = std::numbers::pi;
    double arg = 0.0;
    switch (kind) {
    case TransformKind::Sine: arg = static_cast<double>(r + 1) * pi / (2.0 * m0); break;
    case TransformKind::Cosine: arg = static_cast<double>(r) * pi / (2.0 * m0); break;
    case TransformKind::Fourier: {
        std::size_t f = r <= n / 2 ? r : n - r;
        arg = pi * static_cast<double>(f) / m0;
        break;
    }
    }
    double s = std::sin(arg);
    return -4.0 / (h * h) * s * s;
}

TransformKind transform_for(BcKind bc) {
    switch (bc) {
    case BcKind::Periodic: return TransformKind::Fourier;
    case BcKind::Dirichlet: return TransformKind::Sine;
    case BcKind::Neumann: return TransformKind::Cosine;
    }
    return TransformKind::Fourier;
}

/// Frequency index (0..n/2) of halfcomplex coefficient r.
std::size_t fourier_frequency(std::size_t r, std::size_t n) { return r <= n / 2 ? r : n - r; }

}  // namespace

std::string to_string(OperatorFamily family) {
    switch (family) {
    case OperatorFamily::Laplacian: return "laplacian";
    case OperatorFamily::Nonlocal: return "nonlocal";
    case OperatorFamily::Fractional: return "fractional";
    case OperatorFamily::Fem: return "fem";
    case OperatorFamily::Custom: return "custom";
    }
    return "unknown";
}

OperatorFamily parse_operator_family(const std::string& name) {
    if (name == "laplacian") return OperatorFamily::Laplacian;
    if (name == "nonlocal") return OperatorFamily::Nonlocal;
    if (name == "fractional") return OperatorFamily::Fractional;
    if (name == "fem") return OperatorFamily::Fem;
    throw ConfigError("unknown operator family '" + name + "'");
}

NonlocalKernel parse_nonlocal_kernel(const std::string& name) {
    if (name == "constant") return NonlocalKernel::Constant;
    if (name == "fractional") return NonlocalKernel::FractionalTruncated;
    throw ConfigError("unknown nonlocal kernel '" + name + "'");
}

std::string to_string(NonlocalKernel kernel) {
    return kernel == NonlocalKernel::Constant ? "constant" : "fractional";
}

FractionalGamma parse_fractional_gamma(const std::string& name) {
    if (name == "2") return FractionalGamma::Two;
    if (name == "1+s") return FractionalGamma::OnePlusS;
    throw ConfigError("unknown gamma choice '" + name + "' (expected \"2\" or \"1+s\")");
}

std::string to_string(FractionalGamma g) { return g == FractionalGamma::Two ? "2" : "1+s"; }

std::string to_string(RowDefect d) {
    switch (d) {
    case RowDefect::Sign: return "sign";
    case RowDefect::Dominance: return "dominance";
    case RowDefect::ConstantAnnihilation: return "constant-annihilation";
    }
    return "unknown";
}

OperatorSpec::OperatorSpec(Parts parts) : p_(std::move(parts)) {
    const auto n = static_cast<Eigen::Index>(p_.grid.size());
    if (p_.interior.rows() != n || p_.interior.cols() != n)
        throw Error("operator size does not match the grid");
    if (p_.coupling.size() == 0 && p_.coupling.rows() == 0)
        p_.coupling.resize(n, static_cast<Eigen::Index>(p_.constraint_points.size()));
    if (p_.coupling.rows() != n || p_.coupling.cols() != static_cast<Eigen::Index>(p_.constraint_points.size()))
        throw Error("coupling block does not match the constraint set");
    if (p_.spectrum && p_.spectrum->eigenvalues.size() != p_.grid.size())
        throw Error("spectrum size does not match the grid");
}

OperatorSpec OperatorSpec::custom(Grid grid, SparseMatrix interior) {
    auto w = grid.weights();
    SparseMatrix wa = interior;
    for (Eigen::Index r = 0; r < wa.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(wa, r); it; ++it) it.valueRef() *= w[static_cast<std::size_t>(r)];
    SparseMatrix wat = SparseMatrix(wa.transpose());
    double scale = std::max(wa.norm(), 1e-300);
    bool sa = (wa - wat).norm() <= 1e-12 * scale;
    Parts parts{OperatorFamily::Custom, std::move(grid), 1.0, std::move(interior), {}, {}, std::nullopt, sa,
                ConstantCheck::ZeroRowSum};
    if (parts.grid.bc_kind() == BcKind::Dirichlet) parts.constant_check = ConstantCheck::NonPositiveRowSum;
    return OperatorSpec(std::move(parts));
}

OperatorSpec laplacian_fd(const Grid& grid, double eps2) {
    if (!(eps2 > 0.0)) throw ConfigError("operator.eps2 must be positive");
    const std::size_t n = grid.size();
    const long m = static_cast<long>(grid.nodes_per_axis());
    const double c = eps2 / (grid.h() * grid.h());
    std::vector<Triplet> in, cp;
    ConstraintIndex constraints;
    for (std::size_t i = 0; i < n; ++i) {
        auto row = static_cast<int>(i);
        in.emplace_back(row, row, -2.0 * c * grid.dim());
        const LatticePoint p = grid.lattice(i);
        for (int a = 0; a < grid.dim(); ++a) {
            for (int sgn : {-1, 1}) {
                LatticePoint q = p;
                auto ua = static_cast<std::size_t>(a);
                long k = p[ua] - grid.first_offset() + sgn;
                switch (grid.bc_kind()) {
                case BcKind::Periodic: q[ua] = wrap(k, m); break;
                case BcKind::Neumann:
                    if (k < 0) k = 1;
                    if (k >= m) k = m - 2;
                    q[ua] = k;
                    break;
                case BcKind::Dirichlet: q[ua] = k + 1; break;
                }
                long j = active_index(grid, q);
                if (j >= 0) {
                    in.emplace_back(row, static_cast<int>(j), c);
                } else {
                    cp.emplace_back(row, static_cast<int>(constraints.column(q)), c);
                }
            }
        }
    }
    auto pts = constraints.take();
    Spectrum spec;
    const TransformKind kind = transform_for(grid.bc_kind());
    spec.axes.assign(static_cast<std::size_t>(grid.dim()), kind);
    spec.axis_size = grid.nodes_per_axis();
    std::vector<double> lam1(spec.axis_size);
    for (std::size_t r = 0; r < spec.axis_size; ++r)
        lam1[r] = eps2 * laplacian_eigenvalue_1d(kind, r, spec.axis_size, grid.subdivisions(), grid.h());
    spec.eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto idx = grid.multi_index(i);
        double s = 0.0;
        for (int a = 0; a < grid.dim(); ++a) s += lam1[idx[static_cast<std::size_t>(a)]];
        spec.eigenvalues[i] = s;
    }
    OperatorSpec::Parts parts{.family = OperatorFamily::Laplacian, .grid = grid};
    parts.diffusion = eps2;
    parts.interior = from_triplets(n, n, in);
    parts.coupling = from_triplets(n, pts.size(), cp);
    parts.constraint_points = std::move(pts);
    parts.spectrum = std::move(spec);
    parts.self_adjoint = true;
    parts.constant_check =
        grid.bc_kind() == BcKind::Dirichlet ? ConstantCheck::FullRowZeroSum : ConstantCheck::ZeroRowSum;
    return OperatorSpec(std::move(parts));
}

namespace {

std::vector<StencilWeight> compute_nonlocal_stencil(int dim, double ratio, const NonlocalOptions& opt) {
    const long radius = static_cast<long>(std::ceil(ratio - 1e-9));
    const int q = opt.quadrature_points;
    const auto du = static_cast<std::size_t>(dim);
    const std::size_t side = static_cast<std::size_t>(radius) + 1;
    std::size_t vcount = 1, ccount = 1;
    for (int a = 0; a < dim; ++a) {
        vcount *= side;
        ccount *= static_cast<std::size_t>(radius);
    }
    const double pi = std::numbers::pi;
    double frac_const = 1.0;
    if (opt.kernel == NonlocalKernel::FractionalTruncated) {
        const double s = opt.s;
        if (!(s > 0.0 && s < 1.0)) throw ConfigError("operator.s must lie in (0, 1)");
        frac_const = std::pow(2.0, 2.0 * s) * s * std::tgamma(0.5 * dim + s) /
                     (std::pow(pi, 0.5 * dim) * std::tgamma(1.0 - s));
    }
    auto kernel = [&](double r) {
        if (opt.kernel == NonlocalKernel::Constant) return 1.0;
        return frac_const * std::pow(r, -dim - 2.0 * opt.s);
    };

    std::vector<double> integral(vcount, 0.0);
    std::vector<double> mid(static_cast<std::size_t>(q));
    for (int k = 0; k < q; ++k) mid[static_cast<std::size_t>(k)] = (k + 0.5) / q;
    const double cell_w = std::pow(1.0 / q, dim);

    std::array<std::size_t, 3> cell{0, 0, 0};
    for (std::size_t cflat = 0; cflat < ccount; ++cflat) {
        std::size_t rem = cflat;
        double near = 0.0;
        for (int a = dim - 1; a >= 0; --a) {
            cell[static_cast<std::size_t>(a)] = rem % static_cast<std::size_t>(radius);
            rem /= static_cast<std::size_t>(radius);
        }
        for (std::size_t a = 0; a < du; ++a) near += static_cast<double>(cell[a] * cell[a]);
        if (std::sqrt(near) >= ratio) continue;
        std::array<double, 8> acc{};
        std::array<int, 3> k{0, 0, 0};
        const std::size_t pts = static_cast<std::size_t>(std::pow(q, dim));
        for (std::size_t pflat = 0; pflat < pts; ++pflat) {
            std::size_t prem = pflat;
            for (int a = dim - 1; a >= 0; --a) {
                k[static_cast<std::size_t>(a)] = static_cast<int>(prem % static_cast<std::size_t>(q));
                prem /= static_cast<std::size_t>(q);
            }
            double r2 = 0.0, l1 = 0.0;
            std::array<double, 3> f{};
            for (std::size_t a = 0; a < du; ++a) {
                f[a] = mid[static_cast<std::size_t>(k[a])];
                double x = static_cast<double>(cell[a]) + f[a];
                r2 += x * x;
                l1 += x;
            }
            double r = std::sqrt(r2);
            if (r >= ratio) continue;
            double val = r2 / l1 * kernel(r) * cell_w;
            for (std::size_t corner = 0; corner < (1u << du); ++corner) {
                double psi = 1.0;
                for (std::size_t a = 0; a < du; ++a) psi *= ((corner >> a) & 1u) ? f[a] : 1.0 - f[a];
                acc[corner] += val * psi;
            }
        }
        for (std::size_t corner = 0; corner < (1u << du); ++corner) {
            std::size_t v = 0;
            for (std::size_t a = 0; a < du; ++a) v = v * side + cell[a] + ((corner >> a) & 1u);
            integral[v] += acc[corner];
        }
    }

    std::vector<StencilWeight> out;
    for (std::size_t v = 1; v < vcount; ++v) {
        std::size_t rem = v;
        LatticePoint o{0, 0, 0};
        for (int a = dim - 1; a >= 0; --a) {
            o[static_cast<std::size_t>(a)] = static_cast<long>(rem % side);
            rem /= side;
        }
        int zeros = 0;
        double l1 = 0.0, r2 = 0.0;
        for (std::size_t a = 0; a < du; ++a) {
            if (o[a] == 0) ++zeros;
            l1 += static_cast<double>(o[a]);
            r2 += static_cast<double>(o[a] * o[a]);
        }
        double beta = 0.5 * integral[v] * std::pow(2.0, zeros);
        if (beta <= 0.0) continue;
        double c = 2.0 * l1 * beta / r2;
        for (std::size_t signs = 0; signs < (1u << du); ++signs) {
            LatticePoint so = o;
            bool dup = false;
            for (std::size_t a = 0; a < du; ++a) {
                if ((signs >> a) & 1u) {
                    if (o[a] == 0) dup = true;
                    so[a] = -o[a];
                }
            }
            if (!dup) out.push_back({so, c});
        }
    }
    if (opt.kernel == NonlocalKernel::Constant) {
        double moment = 0.0;
        for (const auto& sw : out) {
            double r2 = 0.0;
            for (std::size_t a = 0; a < du; ++a) r2 += static_cast<double>(sw.offset[a] * sw.offset[a]);
            moment += sw.weight * r2;
        }
        const double scale = 2.0 * dim / moment;
        for (auto& sw : out) sw.weight *= scale;
    }
    return out;
}

}  // namespace

std::vector<StencilWeight> nonlocal_stencil(int dim, double delta_over_h, const NonlocalOptions& options) {
    if (dim < 1 || dim > 3) throw ConfigError("grid dimension must be 1, 2 or 3");
    if (options.quadrature_points < 64) throw ConfigError("nonlocal quadrature needs at least 64 points per axis");
    static std::mutex mutex;
    static std::map<std::tuple<int, double, int, double, int>, std::vector<StencilWeight>> cache;
    auto key = std::make_tuple(dim, delta_over_h, static_cast<int>(options.kernel),
                               options.kernel == NonlocalKernel::Constant ? 0.0 : options.s,
                               options.quadrature_points);
    {
        std::lock_guard lock(mutex);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    auto w = compute_nonlocal_stencil(dim, delta_over_h, options);
    std::lock_guard lock(mutex);
    cache.emplace(key, w);
    return w;
}

OperatorSpec nonlocal_fd(const Grid& grid, double delta, NonlocalOptions options, double eps2) {
    if (!(eps2 > 0.0)) throw ConfigError("operator.eps2 must be positive");
    if (grid.bc_kind() == BcKind::Neumann) throw ConfigError("nonlocal operator supports periodic or dirichlet bc");
    const double width = grid.h() * grid.subdivisions();
    if (!(delta < width)) throw ConfigError("operator.delta must be smaller than the domain width");
    if (delta < 2.0 * grid.h() * (1.0 - 1e-12)) throw ConfigError("operator.delta must be at least 2h");
    const double ratio = delta / grid.h();
    auto stencil = nonlocal_stencil(grid.dim(), ratio, options);
    const double scale = options.kernel == NonlocalKernel::Constant ? eps2 / (grid.h() * grid.h())
                                                                    : eps2 * std::pow(grid.h(), -2.0 * options.s);
    const std::size_t n = grid.size();
    const long m = static_cast<long>(grid.nodes_per_axis());
    std::vector<Triplet> in, cp;
    ConstraintIndex constraints;
    for (std::size_t i = 0; i < n; ++i) {
        auto row = static_cast<int>(i);
        const LatticePoint p = grid.lattice(i);
        double diag = 0.0;
        for (const auto& sw : stencil) {
            const double c = sw.weight * scale;
            diag -= c;
            LatticePoint q{0, 0, 0};
            for (int a = 0; a < grid.dim(); ++a) {
                auto ua = static_cast<std::size_t>(a);
                q[ua] = p[ua] + sw.offset[ua];
                if (grid.bc_kind() == BcKind::Periodic) q[ua] = wrap(q[ua], m);
            }
            long j = active_index(grid, q);
            if (j >= 0)
                in.emplace_back(row, static_cast<int>(j), c);
            else
                cp.emplace_back(row, static_cast<int>(constraints.column(q)), c);
        }
        in.emplace_back(row, row, diag);
    }
    auto pts = constraints.take();
    OperatorSpec::Parts parts{.family = OperatorFamily::Nonlocal, .grid = grid};
    parts.diffusion = eps2;
    parts.interior = from_triplets(n, n, in);
    parts.coupling = from_triplets(n, pts.size(), cp);
    parts.constraint_points = std::move(pts);
    parts.self_adjoint = true;
    if (grid.bc_kind() == BcKind::Periodic) {
        Spectrum spec;
        spec.axes.assign(static_cast<std::size_t>(grid.dim()), TransformKind::Fourier);
        spec.axis_size = grid.nodes_per_axis();
        const std::size_t na = spec.axis_size;
        const double pi = std::numbers::pi;
        // cos(2 pi f o / M) tabulated per axis over frequencies and offsets
        const long rad = static_cast<long>(std::ceil(ratio - 1e-9));
        std::vector<double> cosine(na * static_cast<std::size_t>(2 * rad + 1));
        for (std::size_t r = 0; r < na; ++r)
            for (long o = -rad; o <= rad; ++o)
                cosine[r * static_cast<std::size_t>(2 * rad + 1) + static_cast<std::size_t>(o + rad)] =
                    std::cos(2.0 * pi * static_cast<double>(fourier_frequency(r, na)) * static_cast<double>(o) / static_cast<double>(m));
        spec.eigenvalues.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto idx = grid.multi_index(i);
            double lam = 0.0;
            for (const auto& sw : stencil) {
                double prod = 1.0;
                for (int a = 0; a < grid.dim(); ++a) {
                    auto ua = static_cast<std::size_t>(a);
                    prod *= cosine[idx[ua] * static_cast<std::size_t>(2 * rad + 1) +
                                   static_cast<std::size_t>(sw.offset[ua] + rad)];
                }
                lam += sw.weight * scale * (prod - 1.0);
            }
            spec.eigenvalues[i] = lam;
        }
        parts.spectrum = std::move(spec);
        parts.constant_check = ConstantCheck::ZeroRowSum;
    } else {
        parts.constant_check = ConstantCheck::FullRowZeroSum;
    }
    return OperatorSpec(std::move(parts));
}

double fractional_constant(double s) {
    return std::pow(2.0, 2.0 * s) * s * std::tgamma(0.5 + s) / (std::sqrt(std::numbers::pi) * std::tgamma(1.0 - s));
}

OperatorSpec fractional_fd_1d(const Grid& grid, double s, FractionalGamma gamma, double eps2) {
    if (!(s > 0.0 && s < 1.0)) throw ConfigError("operator.s must lie in (0, 1)");
    if (grid.dim() != 1) throw ConfigError("fractional operator is one-dimensional");
    if (grid.bc_kind() != BcKind::Dirichlet) throw ConfigError("fractional operator requires dirichlet bc");
    if (grid.bc().g) throw ConfigError("fractional operator supports homogeneous dirichlet data only");
    if (!(eps2 > 0.0)) throw ConfigError("operator.eps2 must be positive");
    const int m0 = grid.subdivisions();
    if (m0 < 4) throw ConfigError("fractional operator requires at least 4 subdivisions");
    const double fg = gamma == FractionalGamma::Two ? 2.0 : 1.0;
    const double g = gamma == FractionalGamma::Two ? 2.0 : 1.0 + s;
    const double nu = (1.0 - s) * fg;
    const double pref = eps2 * fractional_constant(s) / (nu * std::pow(grid.h(), 2.0 * s));
    auto term = [&](int k) {
        const double kd = k;
        if (k == 1) return std::pow(2.0, nu) + fg - 1.0;
        if (k < m0) return (std::pow(kd + 1.0, nu) - std::pow(kd - 1.0, nu)) / std::pow(kd, g);
        return (std::pow(kd, nu) - std::pow(kd - 1.0, nu)) / std::pow(kd, g);
    };
    double diag = nu / (s * std::pow(static_cast<double>(m0), 2.0 * s));
    for (int k = 1; k <= m0; ++k) diag += term(k);
    const std::size_t n = grid.size();
    std::vector<Triplet> in;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            int k = static_cast<int>(i > j ? i - j : j - i);
            double v = k == 0 ? -pref * diag : 0.5 * pref * term(k);
            in.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
        }
    OperatorSpec::Parts parts{.family = OperatorFamily::Fractional, .grid = grid};
    parts.diffusion = eps2;
    parts.interior = from_triplets(n, n, in);
    parts.self_adjoint = true;
    parts.constant_check = ConstantCheck::NonPositiveRowSum;
    return OperatorSpec(std::move(parts));
}

OperatorSpec fem_p1_uniform(const Grid& grid, double eps2) {
    if (grid.dim() != 2) throw ConfigError("fem operator requires d = 2");
    if (grid.bc_kind() != BcKind::Dirichlet) throw ConfigError("fem operator requires dirichlet bc");
    if (!(eps2 > 0.0)) throw ConfigError("operator.eps2 must be positive");
    const long m0 = grid.subdivisions();
    const long side = m0 + 1;
    const double h = grid.h();
    auto vid = [&](long i, long j) { return static_cast<std::size_t>(i * side + j); };
    std::map<std::pair<std::size_t, std::size_t>, double> stiff;
    std::vector<double> mass(static_cast<std::size_t>(side * side), 0.0);
    auto add_triangle = [&](std::array<std::pair<long, long>, 3> v) {
        std::array<double, 3> x{}, y{};
        for (int a = 0; a < 3; ++a) {
            x[static_cast<std::size_t>(a)] = static_cast<double>(v[static_cast<std::size_t>(a)].first) * h;
            y[static_cast<std::size_t>(a)] = static_cast<double>(v[static_cast<std::size_t>(a)].second) * h;
        }
        const double det = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]);
        const double area = 0.5 * std::abs(det);
        std::array<double, 3> gx{}, gy{};
        for (std::size_t a = 0; a < 3; ++a) {
            std::size_t b = (a + 1) % 3, c = (a + 2) % 3;
            gx[a] = (y[b] - y[c]) / det;
            gy[a] = (x[c] - x[b]) / det;
        }
        for (std::size_t a = 0; a < 3; ++a) {
            auto ia = vid(v[a].first, v[a].second);
            mass[ia] += area / 3.0;
            for (std::size_t b = 0; b < 3; ++b) {
                auto ib = vid(v[b].first, v[b].second);
                stiff[{ia, ib}] += area * (gx[a] * gx[b] + gy[a] * gy[b]);
            }
        }
    };
    for (long i = 0; i < m0; ++i)
        for (long j = 0; j < m0; ++j) {
            add_triangle({{{i, j}, {i + 1, j}, {i + 1, j + 1}}});
            add_triangle({{{i, j}, {i + 1, j + 1}, {i, j + 1}}});
        }
    const std::size_t n = grid.size();
    std::vector<Triplet> in, cp;
    ConstraintIndex constraints;
    for (const auto& [key, kval] : stiff) {
        const long ri = static_cast<long>(key.first) / side, rj = static_cast<long>(key.first) % side;
        const long ci = static_cast<long>(key.second) / side, cj = static_cast<long>(key.second) % side;
        long row = active_index(grid, {ri, rj, 0});
        if (row < 0) continue;
        if (key.first != key.second && std::abs(kval) < 1e-14) continue;
        const double l = -eps2 * kval / mass[key.first];
        long col = active_index(grid, {ci, cj, 0});
        if (col >= 0)
            in.emplace_back(static_cast<int>(row), static_cast<int>(col), l);
        else
            cp.emplace_back(static_cast<int>(row), static_cast<int>(constraints.column({ci, cj, 0})), l);
    }
    auto pts = constraints.take();
    OperatorSpec::Parts parts{.family = OperatorFamily::Fem, .grid = grid};
    parts.diffusion = eps2;
    parts.interior = from_triplets(n, n, in);
    parts.coupling = from_triplets(n, pts.size(), cp);
    parts.constraint_points = std::move(pts);
    parts.self_adjoint = true;
    parts.constant_check = ConstantCheck::FullRowZeroSum;
    // On this mesh the assembled rows coincide with the 5-point stencil, so the sine basis diagonalizes it.
    Spectrum spec;
    spec.axes.assign(2, TransformKind::Sine);
    spec.axis_size = grid.nodes_per_axis();
    spec.eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto idx = grid.multi_index(i);
        spec.eigenvalues[i] =
            eps2 * (laplacian_eigenvalue_1d(TransformKind::Sine, idx[0], spec.axis_size, grid.subdivisions(), h) +
                    laplacian_eigenvalue_1d(TransformKind::Sine, idx[1], spec.axis_size, grid.subdivisions(), h));
    }
    parts.spectrum = std::move(spec);
    return OperatorSpec(std::move(parts));
}

std::vector<double> constraint_values(const OperatorSpec& op, const BoundaryFunction& g, double t) {
    std::vector<double> vals(op.constraint_count(), 0.0);
    if (!g) return vals;
    for (std::size_t k = 0; k < vals.size(); ++k)
        vals[k] = g(t, op.grid().lattice_coordinates(op.constraint_points()[k]));
    return vals;
}

std::vector<double> boundary_forcing(const OperatorSpec& op, std::span<const double> values) {
    if (values.size() != op.constraint_count()) throw Error("constraint value count mismatch");
    std::vector<double> out(op.size(), 0.0);
    if (values.empty()) return out;
    Eigen::Map<const Eigen::VectorXd> g(values.data(), static_cast<Eigen::Index>(values.size()));
    Eigen::Map<Eigen::VectorXd> y(out.data(), static_cast<Eigen::Index>(out.size()));
    y.noalias() = op.coupling() * g;
    return out;
}

std::vector<double> boundary_forcing(const OperatorSpec& op, double t) {
    if (op.grid().bc_kind() != BcKind::Dirichlet) return std::vector<double>(op.size(), 0.0);
    auto vals = constraint_values(op, op.grid().bc().g, t);
    return boundary_forcing(op, vals);
}

void apply(const OperatorSpec& op, std::span<const double> x, std::span<double> y) {
    if (x.size() != op.size() || y.size() != op.size()) throw Error("field length does not match operator");
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::Map<Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
    yv.noalias() = op.interior() * xv;
}

std::vector<double> apply(const OperatorSpec& op, std::span<const double> x) {
    std::vector<double> y(op.size());
    apply(op, x, y);
    return y;
}

Field apply(const OperatorSpec& op, const Field& f) {
    if (f.nodes() != op.size()) throw Error("field length does not match operator");
    const std::size_t c = f.components();
    std::vector<double> out(f.values().size());
    std::vector<double> in(op.size()), res(op.size());
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t i = 0; i < op.size(); ++i) in[i] = f.values()[i * c + k];
        apply(op, in, res);
        for (std::size_t i = 0; i < op.size(); ++i) out[i * c + k] = res[i];
    }
    return f.with_values(std::move(out));
}

bool StructureReport::has(RowDefect d) const {
    return std::any_of(failures.begin(), failures.end(), [d](const RowFailure& f) { return f.defect == d; });
}

StructureReport verify_structure(const SparseMatrix& interior, const SparseMatrix* coupling, ConstantCheck check,
                                 double rel_tol) {
    StructureReport rep;
    for (Eigen::Index r = 0; r < interior.outerSize(); ++r) {
        const auto row = static_cast<std::size_t>(r);
        double diag = 0.0, off_abs = 0.0, sum = 0.0, most_negative = 0.0;
        for (SparseMatrix::InnerIterator it(interior, r); it; ++it) {
            sum += it.value();
            if (it.col() == r) {
                diag += it.value();
            } else {
                off_abs += std::abs(it.value());
                most_negative = std::min(most_negative, it.value());
            }
        }
        double cp_abs = 0.0, cp_sum = 0.0;
        if (coupling && coupling->rows() > r) {
            for (SparseMatrix::InnerIterator it(*coupling, r); it; ++it) {
                cp_abs += std::abs(it.value());
                cp_sum += it.value();
                most_negative = std::min(most_negative, it.value());
            }
        }
        const double tol = rel_tol * std::max(std::abs(diag), 1e-300);
        if (!(diag < 0.0) || most_negative < 0.0)
            rep.failures.push_back({row, RowDefect::Sign, diag >= 0.0 ? diag : -most_negative});
        if (std::abs(diag) + tol < off_abs)
            rep.failures.push_back({row, RowDefect::Dominance, off_abs - std::abs(diag)});
        double defect = 0.0;
        switch (check) {
        case ConstantCheck::ZeroRowSum: defect = std::abs(sum); break;
        case ConstantCheck::FullRowZeroSum: defect = std::abs(sum + cp_sum); break;
        case ConstantCheck::NonPositiveRowSum: defect = std::max(0.0, sum + cp_sum); break;
        }
        if (defect > tol) rep.failures.push_back({row, RowDefect::ConstantAnnihilation, defect});
        if (diag != 0.0)
            rep.max_row_identity_deviation =
                std::max(rep.max_row_identity_deviation, std::abs(std::abs(diag) - off_abs - cp_abs) / std::abs(diag));
    }
    return rep;
}

StructureReport verify_structure(const OperatorSpec& op, double rel_tol) {
    return verify_structure(op.interior(), &op.coupling(), op.constant_check(), rel_tol);
}

std::string encode_triplets(const SparseMatrix& m) {
    std::ostringstream os;
    os.precision(17);
    os << "row,col,value\n";
    for (Eigen::Index r = 0; r < m.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(m, r); it; ++it) os << r << ',' << it.col() << ',' << it.value() << '\n';
    return os.str();
}

}  // namespace mbp
