#include "mbp_cli/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "mbp/random.hpp"
#include "mbp_cli/toml_lite.hpp"

namespace mbp::cli {

using nlohmann::json;

namespace {

/// Typed access to one table; remembers which keys were read so leftovers can be rejected.
class Table {
public:
    Table(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) fail("", "must be a table");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigError(where(key) + ": " + msg);
    }

    std::string where(const std::string& key) const {
        if (key.empty()) return path_.empty() ? "config" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(const std::string& key) const { return doc_.contains(key); }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = doc_.find(key);
        return it == doc_.end() ? nullptr : &*it;
    }

    double number(const std::string& key, double& out) {
        if (auto v = find(key)) {
            if (!v->is_number()) fail(key, "expected a number");
            out = v->get<double>();
        }
        return out;
    }

    std::optional<double> optional_number(const std::string& key) {
        if (auto v = find(key)) {
            if (!v->is_number()) fail(key, "expected a number");
            return v->get<double>();
        }
        return std::nullopt;
    }

    template <class Int>
    void integer(const std::string& key, Int& out) {
        if (auto v = find(key)) {
            if (!v->is_number_integer()) fail(key, "expected an integer");
            out = v->get<Int>();
        }
    }

    void string(const std::string& key, std::string& out) {
        if (auto v = find(key)) {
            if (!v->is_string()) fail(key, "expected a string");
            out = v->get<std::string>();
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (auto v = find(key)) {
            if (!v->is_boolean()) fail(key, "expected true or false");
            out = v->get<bool>();
        }
    }

    void numbers(const std::string& key, std::vector<double>& out) {
        if (auto v = find(key)) {
            if (!v->is_array()) fail(key, "expected an array of numbers");
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number()) fail(key, "expected an array of numbers");
                out.push_back(e.get<double>());
            }
        }
    }

    void integers(const std::string& key, std::vector<int>& out) {
        if (auto v = find(key)) {
            if (!v->is_array()) fail(key, "expected an array of integers");
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number_integer()) fail(key, "expected an array of integers");
                out.push_back(e.get<int>());
            }
        }
    }

    Table sub(const std::string& key) {
        static const json empty = json::object();
        auto v = find(key);
        return Table(v ? *v : empty, where(key));
    }

    void finish() const {
        for (auto it = doc_.begin(); it != doc_.end(); ++it)
            if (!seen_.count(it.key())) fail(it.key(), "unknown key");
    }

private:
    const json& doc_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class T>
void one_of(const Table& t, const std::string& key, const std::string& value, std::initializer_list<T> allowed) {
    for (const auto& a : allowed)
        if (value == a) return;
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
    t.fail(key, "'" + value + "' is not one of " + list);
}

void positive(const Table& t, const std::string& key, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) t.fail(key, "must be positive and finite");
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
    ExperimentConfig c;
    Table root(doc, "");
    root.integer("seed", c.seed);

    {
        Table t = root.sub("grid");
        t.integer("d", c.grid.d);
        if (c.grid.d < 1 || c.grid.d > 3) t.fail("d", "must be 1, 2 or 3");
        if (auto v = t.find("box")) {
            auto interval = [&](const json& e) {
                if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
                    t.fail("box", "expected [lo, hi] or a list of [lo, hi] per axis");
                Interval iv{e[0].get<double>(), e[1].get<double>()};
                if (!(iv.hi > iv.lo)) t.fail("box", "needs lo < hi");
                return iv;
            };
            c.grid.box.clear();
            if (v->is_array() && !v->empty() && (*v)[0].is_array())
                for (const auto& e : *v) c.grid.box.push_back(interval(e));
            else
                c.grid.box.push_back(interval(*v));
        }
        if (c.grid.box.size() != 1 && static_cast<int>(c.grid.box.size()) != c.grid.d)
            t.fail("box", "needs one interval or one per axis");
        t.integer("M0", c.grid.M0);
        if (c.grid.M0 < 2) t.fail("M0", "must be at least 2");
        t.string("bc", c.grid.bc);
        one_of<const char*>(t, "bc", c.grid.bc, {"periodic", "neumann", "dirichlet"});
        t.string("g", c.grid.g);
        one_of<const char*>(t, "g", c.grid.g, {"zero", "constant", "sin_t"});
        t.number("g_value", c.grid.g_value);
        t.finish();
    }
    {
        Table t = root.sub("operator");
        t.string("family", c.op.family);
        one_of<const char*>(t, "family", c.op.family, {"laplacian", "nonlocal", "fractional", "fem"});
        t.number("eps2", c.op.eps2);
        positive(t, "eps2", c.op.eps2);
        t.number("delta", c.op.delta);
        t.string("kernel", c.op.kernel);
        one_of<const char*>(t, "kernel", c.op.kernel, {"constant", "fractional"});
        t.number("s", c.op.s);
        t.string("gamma", c.op.gamma);
        one_of<const char*>(t, "gamma", c.op.gamma, {"2", "1+s"});
        t.integer("quadrature_points", c.op.quadrature_points);
        t.finish();
    }
    {
        Table t = root.sub("nonlinearity");
        auto& n = c.nonlinearity;
        t.string("family", n.family);
        one_of<const char*>(t, "family", n.family,
                            {"double_well", "logistic", "flory_huggins", "peng_robinson", "zero"});
        t.number("lambda", n.lambda);
        t.integer("p", n.p);
        t.number("theta", n.theta);
        t.number("theta_c", n.theta_c);
        t.number("R", n.R);
        t.number("T", n.T);
        t.number("a", n.a);
        t.number("b", n.b);
        n.beta = t.optional_number("beta");
        if (n.beta) positive(t, "beta", *n.beta);
        n.kappa = t.optional_number("kappa");
        if (n.kappa && !(*n.kappa >= 0.0 && std::isfinite(*n.kappa))) t.fail("kappa", "must be finite and nonnegative");
        t.boolean("allow_unsafe_kappa", n.allow_unsafe_kappa);
        t.finish();
    }
    {
        Table t = root.sub("field");
        t.string("kind", c.field.kind);
        one_of<const char*>(t, "kind", c.field.kind, {"scalar", "vector", "matrix"});
        t.integer("m", c.field.m);
        if (c.field.m < 1) t.fail("m", "must be at least 1");
        t.finish();
    }
    {
        Table t = root.sub("initial");
        t.string("kind", c.initial.kind);
        one_of<const char*>(t, "kind", c.initial.kind, {"uniform", "constant", "mode"});
        t.number("amplitude", c.initial.amplitude);
        if (!(c.initial.amplitude >= 0.0)) t.fail("amplitude", "must be nonnegative");
        t.number("value", c.initial.value);
        t.integers("mode", c.initial.mode);
        t.finish();
    }
    {
        Table t = root.sub("stepper");
        auto& s = c.stepper;
        t.string("scheme", s.scheme);
        one_of<const char*>(t, "scheme", s.scheme, {"etd1", "etdrk2"});
        t.number("tau", s.tau);
        positive(t, "tau", s.tau);
        t.number("T", s.T);
        if (!(s.T >= 0.0) || !std::isfinite(s.T)) t.fail("T", "must be finite and nonnegative");
        {
            Table e = t.sub("exp");
            e.string("strategy", s.exp_strategy);
            one_of<const char*>(e, "strategy", s.exp_strategy, {"spectral", "krylov", "dense"});
            e.finish();
        }
        {
            Table k = t.sub("krylov");
            k.number("tol", s.krylov_tol);
            positive(k, "tol", s.krylov_tol);
            k.integer("max_dim", s.krylov_max_dim);
            if (s.krylov_max_dim < 1) k.fail("max_dim", "must be positive");
            k.finish();
        }
        t.finish();
    }
    {
        Table t = root.sub("output");
        t.string("dir", c.output.dir);
        t.numbers("snapshot_times", c.output.snapshot_times);
        t.integer("energy_cadence", c.output.energy_cadence);
        if (c.output.energy_cadence < 0) t.fail("energy_cadence", "must be nonnegative");
        t.finish();
    }
    root.finish();
    return c;
}

json to_json(const ExperimentConfig& c) {
    json doc;
    doc["seed"] = c.seed;
    json box = json::array();
    for (const auto& iv : c.grid.box) box.push_back({iv.lo, iv.hi});
    doc["grid"] = {{"d", c.grid.d},   {"box", c.grid.box.size() == 1 ? box[0] : box},
                   {"M0", c.grid.M0}, {"bc", c.grid.bc},
                   {"g", c.grid.g},   {"g_value", c.grid.g_value}};
    doc["operator"] = {{"family", c.op.family}, {"eps2", c.op.eps2},   {"delta", c.op.delta},
                       {"kernel", c.op.kernel}, {"s", c.op.s},         {"gamma", c.op.gamma},
                       {"quadrature_points", c.op.quadrature_points}};
    const auto& n = c.nonlinearity;
    doc["nonlinearity"] = {{"family", n.family}, {"lambda", n.lambda}, {"p", n.p}, {"theta", n.theta},
                           {"theta_c", n.theta_c}, {"R", n.R}, {"T", n.T}, {"a", n.a}, {"b", n.b},
                           {"allow_unsafe_kappa", n.allow_unsafe_kappa}};
    if (n.beta) doc["nonlinearity"]["beta"] = *n.beta;
    if (n.kappa) doc["nonlinearity"]["kappa"] = *n.kappa;
    doc["field"] = {{"kind", c.field.kind}, {"m", c.field.m}};
    doc["initial"] = {{"kind", c.initial.kind},
                      {"amplitude", c.initial.amplitude},
                      {"value", c.initial.value},
                      {"mode", c.initial.mode}};
    doc["stepper"] = {{"scheme", c.stepper.scheme},
                      {"tau", c.stepper.tau},
                      {"T", c.stepper.T},
                      {"exp", {{"strategy", c.stepper.exp_strategy}}},
                      {"krylov", {{"tol", c.stepper.krylov_tol}, {"max_dim", c.stepper.krylov_max_dim}}}};
    doc["output"] = {{"dir", c.output.dir},
                     {"snapshot_times", c.output.snapshot_times},
                     {"energy_cadence", c.output.energy_cadence}};
    return doc;
}

ExperimentConfig parse_config(const std::string& text, bool json_format) {
    json doc;
    if (json_format) {
        try {
            doc = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("json: ") + e.what());
        }
    } else {
        doc = parse_toml(text);
    }
    ExperimentConfig c = config_from_json(doc);
    validate(c);
    return c;
}

std::string serialize_config(const ExperimentConfig& cfg, bool json_format) {
    const json doc = to_json(cfg);
    return json_format ? doc.dump(2) + "\n" : to_toml(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.extension() == ".json");
}

void validate(const ExperimentConfig& c) {
    const auto& fam = c.op.family;
    if (fam == "fractional" && (c.grid.d != 1 || c.grid.bc != "dirichlet"))
        throw ConfigError("operator.family: fractional needs grid.d = 1 and grid.bc = dirichlet");
    if (fam == "fem" && (c.grid.d != 2 || c.grid.bc != "dirichlet"))
        throw ConfigError("operator.family: fem needs grid.d = 2 and grid.bc = dirichlet");
    if (fam == "nonlocal" && c.grid.bc == "neumann")
        throw ConfigError("operator.family: nonlocal supports periodic or dirichlet bc");
    if (fam == "nonlocal" && !(c.op.delta > 0.0)) throw ConfigError("operator.delta: must be positive for nonlocal");
    if (fam == "fractional" && !(c.op.s > 0.0 && c.op.s < 1.0)) throw ConfigError("operator.s: must lie in (0, 1)");
    if (c.grid.bc != "dirichlet" && c.grid.g != "zero")
        throw ConfigError("grid.g: boundary data needs grid.bc = dirichlet");
    if (c.field.kind != "scalar" && c.nonlinearity.family != "double_well")
        throw ConfigError("nonlinearity.family: vector and matrix fields use the double well");
    if (c.field.kind == "scalar" && c.field.m != 1) throw ConfigError("field.m: scalar fields have m = 1");
    if (c.field.kind == "matrix" && c.grid.bc == "neumann")
        throw ConfigError("grid.bc: matrix fields support periodic or dirichlet bc");
    if (c.field.kind == "matrix" && c.grid.g != "zero")
        throw ConfigError("grid.g: matrix fields support homogeneous dirichlet data only");
    if (c.initial.kind == "mode" && c.initial.mode.size() != static_cast<std::size_t>(c.grid.d))
        throw ConfigError("initial.mode: needs one wave number per axis");
    (void)step_count(c.stepper.T, c.stepper.tau);
    for (double t : c.output.snapshot_times)
        if (!(t >= 0.0 && t <= c.stepper.T)) throw ConfigError("output.snapshot_times: times must lie in [0, T]");
}

Grid make_grid(const GridConfig& g, FieldKind kind) {
    std::vector<Interval> box = g.box;
    if (box.size() == 1) box.assign(static_cast<std::size_t>(g.d), g.box[0]);
    BoundaryCondition bc;
    if (g.bc == "periodic") {
        bc = BoundaryCondition::periodic();
    } else if (g.bc == "neumann") {
        bc = BoundaryCondition::neumann();
    } else if (kind != FieldKind::Scalar || g.g == "zero") {
        bc = BoundaryCondition::dirichlet();
    } else if (g.g == "constant") {
        const double v = g.g_value;
        bc = BoundaryCondition::dirichlet([v](double, std::span<const double>) { return v; });
    } else {
        const double v = g.g_value;
        bc = BoundaryCondition::dirichlet(
            [v, box](double t, std::span<const double> x) {
                double psi = 1.0;
                for (std::size_t a = 0; a < x.size(); ++a)
                    psi *= std::cos(std::numbers::pi * (x[a] - box[a].lo) / (box[a].hi - box[a].lo));
                return v * std::sin(t) * psi;
            },
            true);
    }
    return Grid(g.d, box, g.M0, std::move(bc));
}

std::shared_ptr<const OperatorSpec> make_operator(const OperatorConfig& o, const Grid& grid) {
    if (o.family == "laplacian") return std::make_shared<const OperatorSpec>(laplacian_fd(grid, o.eps2));
    if (o.family == "nonlocal") {
        NonlocalOptions opts{o.kernel == "constant" ? NonlocalKernel::Constant : NonlocalKernel::FractionalTruncated,
                             o.s, o.quadrature_points};
        return std::make_shared<const OperatorSpec>(nonlocal_fd(grid, o.delta, opts, o.eps2));
    }
    if (o.family == "fractional")
        return std::make_shared<const OperatorSpec>(fractional_fd_1d(grid, o.s, parse_fractional_gamma(o.gamma), o.eps2));
    return std::make_shared<const OperatorSpec>(fem_p1_uniform(grid, o.eps2));
}

NonlinearSpec make_nonlinearity(const NonlinearityConfig& n) {
    if (n.family == "double_well") {
        if (!n.beta) return double_well();
        NonlinearSpec s = logistic(1.0, 2, *n.beta);
        s.family = "double_well";
        return s;
    }
    if (n.family == "logistic") return logistic(n.lambda, n.p, n.beta.value_or(1.0));
    if (n.family == "flory_huggins") return flory_huggins(n.theta, n.theta_c, n.beta);
    if (n.family == "peng_robinson") return peng_robinson({n.R, n.T, n.a, n.b}, n.beta.value_or(1.0));
    return zero_nonlinearity(n.beta.value_or(1.0));
}

Problem build_problem(const ExperimentConfig& cfg) {
    Problem p;
    p.kind = cfg.field.kind == "scalar" ? FieldKind::Scalar
                                        : (cfg.field.kind == "vector" ? FieldKind::Vector : FieldKind::Matrix);
    p.m = static_cast<std::size_t>(cfg.field.m);
    p.op = make_operator(cfg.op, make_grid(cfg.grid, p.kind));
    p.spec = make_nonlinearity(cfg.nonlinearity);
    auto& sc = p.stepper_config;
    sc.scheme = parse_scheme(cfg.stepper.scheme);
    sc.tau = cfg.stepper.tau;
    sc.t_final = cfg.stepper.T;
    sc.strategy = parse_exp_strategy(cfg.stepper.exp_strategy);
    sc.krylov = {cfg.stepper.krylov_tol, cfg.stepper.krylov_max_dim};
    sc.allow_unsafe_kappa = cfg.nonlinearity.allow_unsafe_kappa;
    sc.energy_cadence = static_cast<std::size_t>(cfg.output.energy_cadence);
    sc.snapshot_times = cfg.output.snapshot_times;
    sc.kappa = cfg.nonlinearity.kappa.value_or(p.kind == FieldKind::Scalar ? p.spec.kappa_min : 2.0);
    if (p.kind == FieldKind::Vector && cfg.grid.bc == "dirichlet" && cfg.grid.g != "zero") {
        const double v = cfg.grid.g_value;
        const bool td = cfg.grid.g == "sin_t";
        std::vector<Interval> box;
        for (int a = 0; a < cfg.grid.d; ++a) box.push_back(p.op->grid().axis(a));
        p.component_boundary = {[v, td, box](double t, std::span<const double> x, std::span<double> out) {
                                    double val = v;
                                    if (td) {
                                        val *= std::sin(t);
                                        for (std::size_t a = 0; a < x.size(); ++a)
                                            val *= std::cos(std::numbers::pi * (x[a] - box[a].lo) / (box[a].hi - box[a].lo));
                                    }
                                    std::fill(out.begin(), out.end(), 0.0);
                                    out[0] = val;
                                },
                                td};
    }
    return p;
}

Stepper make_stepper(const Problem& p) {
    switch (p.kind) {
    case FieldKind::Scalar: return Stepper::scalar(p.op, p.spec, p.stepper_config);
    case FieldKind::Vector: return Stepper::vector(p.op, p.m, p.stepper_config, p.component_boundary);
    case FieldKind::Matrix: return Stepper::matrix(p.op, p.m, p.stepper_config);
    }
    throw Error("unknown field kind");
}

Field initial_field(const ExperimentConfig& cfg, const Problem& p) {
    const Grid& g = p.op->grid();
    const std::size_t n = g.size(), m = p.m;
    const auto& ic = cfg.initial;
    std::vector<double> base(n);
    if (ic.kind == "constant") {
        std::fill(base.begin(), base.end(), ic.value);
    } else if (ic.kind == "mode") {
        for (std::size_t i = 0; i < n; ++i) {
            double v = ic.amplitude;
            for (int a = 0; a < g.dim(); ++a) v *= std::sin(ic.mode[static_cast<std::size_t>(a)] * g.coordinate(i, a));
            base[i] = v;
        }
    }
    switch (p.kind) {
    case FieldKind::Scalar:
        if (ic.kind == "uniform") return Field::scalar(uniform_field(n, ic.amplitude, cfg.seed));
        return Field::scalar(std::move(base));
    case FieldKind::Vector: {
        std::vector<double> v(n * m, 0.0);
        if (ic.kind == "uniform") {
            // componentwise in [-r/sqrt(m), r/sqrt(m)] keeps every node inside the ball of radius r
            v = uniform_field(n * m, ic.amplitude / std::sqrt(static_cast<double>(m)), cfg.seed);
        } else {
            for (std::size_t i = 0; i < n; ++i) v[i * m] = base[i];
        }
        return Field::vector(m, std::move(v));
    }
    case FieldKind::Matrix: {
        std::vector<double> v(n * m * m, 0.0);
        if (ic.kind == "uniform") {
            // entries in [-r/m, r/m]: Gershgorin bounds the 2-norm by r
            const auto u = uniform_field(n * m * m, ic.amplitude / static_cast<double>(m), cfg.seed);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = r; c < m; ++c)
                        v[i * m * m + r * m + c] = v[i * m * m + c * m + r] = u[i * m * m + r * m + c];
        } else {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t r = 0; r < m; ++r) v[i * m * m + r * m + r] = base[i];
        }
        return Field::matrix(m, std::move(v));
    }
    }
    throw Error("unknown field kind");
}

}  // namespace mbp::cli
