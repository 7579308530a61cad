#include "mbp_cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "mbp/energy.hpp"
#include "mbp/expkernel.hpp"
#include "mbp/io.hpp"
#include "mbp/random.hpp"
#include "mbp_cli/toml_lite.hpp"

namespace mbp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

bool energy_defined(const Problem& p) {
    if (p.kind == FieldKind::Matrix) return false;
    if (p.kind == FieldKind::Vector) return !p.component_boundary.time_dependent;
    return !p.op->grid().bc().time_dependent;
}

ExperimentConfig quiet(ExperimentConfig cfg) {
    cfg.output.energy_cadence = 0;
    cfg.output.snapshot_times.clear();
    return cfg;
}

ExperimentConfig apply_globals(ExperimentConfig cfg, const GlobalOptions& g) {
    if (g.seed) cfg.seed = *g.seed;
    if (g.out_dir) cfg.output.dir = g.out_dir->string();
    return cfg;
}

unsigned worker_count(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(threads), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex mu;
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        std::lock_guard lock(mu);
                        if (!first) first = std::current_exception();
                    }
                }
            });
    }
    if (first) std::rethrow_exception(first);
}

// ---- run ----

RunOutcome run_experiment(const ExperimentConfig& cfg) {
    const Problem p = build_problem(cfg);
    const Stepper stepper = make_stepper(p);
    const Field u0 = initial_field(cfg, p);

    Monitors mon;
    if (energy_defined(p)) {
        if (p.kind == FieldKind::Scalar)
            mon.energy = [&p](const Field& f) { return discrete_energy(*p.op, p.spec, f); };
        else
            mon.energy = [&p](const Field& f) { return vector_energy(*p.op, f, p.component_boundary); };
    }

    RunOutcome out;
    out.record = run(stepper, u0, mon);
    const RunRecord& rec = out.record;

    // f = 0 and kappa = 0 make both schemes exact on eigenvectors of L_h0
    const auto& sc = p.stepper_config;
    const bool linear = p.kind == FieldKind::Scalar && p.spec.family == "zero" && sc.kappa == 0.0 &&
                        (p.op->grid().bc_kind() != BcKind::Dirichlet || !p.op->grid().bc().g);
    if (linear && rec.status == RunStatus::Completed) {
        const auto u = u0.values();
        const auto lu = apply(*p.op, u);
        double uu = 0.0, ulu = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            uu += u[i] * u[i];
            ulu += u[i] * lu[i];
            scale = std::max(scale, std::abs(lu[i]));
        }
        if (uu > 0.0) {
            const double lambda = ulu / uu;
            double resid = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i) resid = std::max(resid, std::abs(lu[i] - lambda * u[i]));
            if (resid <= 1e-10 * std::max(scale, 1e-300)) {
                const double t = rec.times.back();
                const double g = std::exp(lambda * t);
                const auto v = rec.final_state.values();
                double err = 0.0, ref = 0.0;
                for (std::size_t i = 0; i < u.size(); ++i) {
                    err = std::max(err, std::abs(v[i] - g * u[i]));
                    ref = std::max(ref, std::abs(g * u[i]));
                }
                out.analytic_error = ref > 0.0 ? err / ref : err;
            }
        }
    }

    json s;
    s["scheme"] = to_string(sc.scheme);
    s["exp_strategy"] = to_string(sc.strategy);
    s["tau"] = sc.tau;
    s["T"] = sc.t_final;
    s["steps"] = rec.steps();
    s["kappa"] = sc.kappa;
    s["bound"] = rec.bound;
    s["mbp_tolerance"] = stepper.mbp_tolerance();
    s["seed"] = cfg.seed;
    s["status"] = to_string(rec.status);
    if (!rec.message.empty()) s["message"] = rec.message;
    s["final_sup_norm"] = finite_or_null(rec.sup_norms.empty() ? 0.0 : rec.sup_norms.back());
    s["max_sup_norm"] = finite_or_null(*std::max_element(rec.sup_norms.begin(), rec.sup_norms.end()));
    s["max_excess"] = finite_or_null(rec.max_excess());
    s["violation_count"] = rec.violations.size();
    s["wall_seconds"] = rec.wall_seconds;
    if (std::any_of(rec.energies.begin(), rec.energies.end(), [](double e) { return !std::isnan(e); })) {
        const EnergyReport er = monitor(rec);
        s["energy"] = {{"initial", finite_or_null(er.energies.front())},
                       {"final", finite_or_null(er.energies.back())},
                       {"monotone", er.monotone},
                       {"finite", er.finite},
                       {"increase_events", er.violation_count},
                       {"max_increase", finite_or_null(er.max_increase)}};
    }
    if (out.analytic_error) s["analytic_error"] = *out.analytic_error;
    out.summary = std::move(s);
    return out;
}

std::string series_csv(const RunRecord& record) {
    std::string csv = "t,sup_norm,energy\n";
    for (std::size_t i = 0; i < record.times.size(); ++i) {
        csv += num(record.times[i]) + ',' + num(record.sup_norms[i]) + ',';
        if (i < record.energies.size() && !std::isnan(record.energies[i])) csv += num(record.energies[i]);
        csv += '\n';
    }
    return csv;
}

void write_run_outputs(const ExperimentConfig& cfg, const RunOutcome& out, const fs::path& dir) {
    fs::create_directories(dir);
    const RunRecord& rec = out.record;
    const Grid grid = make_grid(cfg.grid);
    write_file_atomic(dir / "series.csv", series_csv(rec));
    for (const auto& snap : rec.snapshots) {
        const std::string stem = "field_t" + format_time(snap.time);
        write_file_atomic(dir / (stem + ".pgm"), encode_pgm(grid, snap.field, rec.bound));
        write_file_atomic(dir / (stem + ".csv"), encode_field_csv(grid, snap.field));
    }
    write_file_atomic(dir / "summary.json", out.summary.dump(2) + "\n");
}

// ---- converge ----

ConvergenceTable converge(const ExperimentConfig& cfg, std::vector<double> taus, double tau_ref, unsigned threads) {
    if (taus.empty()) throw ConfigError("--taus: at least one step size is required");
    std::sort(taus.begin(), taus.end(), std::greater<>());
    for (double t : taus)
        if (!(t > 0.0)) throw ConfigError("--taus: step sizes must be positive");
    if (!(tau_ref > 0.0) || tau_ref > taus.back() / 8.0 * (1.0 + 1e-12))
        throw ConfigError("--tau-ref: must be positive and at most min(taus)/8");

    // index 0 is the reference, always ETDRK2
    std::vector<Field> finals(taus.size() + 1);
    parallel_for(taus.size() + 1, threads, [&](std::size_t i) {
        ExperimentConfig c = quiet(cfg);
        if (i == 0) {
            c.stepper.scheme = "etdrk2";
            c.stepper.tau = tau_ref;
        } else {
            c.stepper.tau = taus[i - 1];
        }
        const Problem p = build_problem(c);
        const RunRecord rec = run(make_stepper(p), initial_field(c, p));
        if (rec.status != RunStatus::Completed)
            throw Error("run at tau = " + num(c.stepper.tau) + " failed: " + to_string(rec.status) + " " + rec.message);
        finals[i] = rec.final_state;
    });

    ConvergenceTable table;
    table.tau_ref = tau_ref;
    const auto ref = finals[0].values();
    for (std::size_t k = 0; k < taus.size(); ++k) {
        const auto v = finals[k + 1].values();
        double err = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) err = std::max(err, std::abs(v[i] - ref[i]));
        ConvergenceRow row{taus[k], err, std::nullopt, std::nullopt};
        if (k > 0) {
            const auto& prev = table.rows.back();
            row.ratio = prev.error / err;
            row.order = std::log(*row.ratio) / std::log(prev.tau / taus[k]);
        }
        table.rows.push_back(row);
    }
    if (taus.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(taus.size());
        for (const auto& r : table.rows) {
            const double x = std::log(r.tau), y = std::log(r.error);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        table.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    } else {
        table.slope = std::numeric_limits<double>::quiet_NaN();
    }
    return table;
}

std::string convergence_csv(const ConvergenceTable& table) {
    std::string csv = "tau,error,ratio,order\n";
    for (const auto& r : table.rows) {
        csv += num(r.tau) + ',' + num(r.error) + ',';
        if (r.ratio) csv += num(*r.ratio);
        csv += ',';
        if (r.order) csv += num(*r.order);
        csv += '\n';
    }
    return csv;
}

// ---- mbp-stress ----

StressReport mbp_stress(const ExperimentConfig& cfg, const std::vector<double>& taus, std::size_t steps,
                        bool with_control, unsigned threads) {
    if (taus.empty()) throw ConfigError("--taus: at least one step size is required");
    if (steps == 0) throw ConfigError("--steps: must be positive");
    const Problem base = build_problem(cfg);
    // a control with kappa = 0 only says something when f0' is nonzero
    with_control = with_control && !(base.kind == FieldKind::Scalar && base.spec.family == "zero");

    struct Job {
        double tau;
        bool control;
    };
    std::vector<Job> jobs;
    for (double tau : taus) {
        if (!(tau > 0.0)) throw ConfigError("--taus: step sizes must be positive");
        jobs.push_back({tau, false});
        if (with_control) jobs.push_back({tau, true});
    }

    StressReport report;
    report.tolerance = base.stepper_config.mbp_tolerance();
    report.rows.resize(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
        ExperimentConfig c = quiet(cfg);
        c.stepper.tau = jobs[i].tau;
        c.stepper.T = static_cast<double>(steps) * jobs[i].tau;
        if (jobs[i].control) {
            c.nonlinearity.kappa = 0.0;
            c.nonlinearity.allow_unsafe_kappa = true;
        }
        StressRow row{jobs[i].tau, steps, 0.0, jobs[i].control, 0.0, 0, ""};
        try {
            const Problem p = build_problem(c);
            row.kappa = p.stepper_config.kappa;
            const RunRecord rec = run(make_stepper(p), initial_field(c, p));
            row.max_excess = rec.max_excess();
            row.violations = rec.violations.size();
            row.status = to_string(rec.status);
        } catch (const DomainViolation& e) {
            if (!jobs[i].control) throw;
            row.max_excess = std::numeric_limits<double>::infinity();
            row.status = "domain_violation";
        }
        report.rows[i] = row;
    });

    for (const auto& r : report.rows) {
        const bool bad = !(r.max_excess <= report.tolerance) || r.status != to_string(RunStatus::Completed);
        if (r.control)
            report.control_violated = report.control_violated.value_or(false) || bad;
        else if (bad)
            report.passed = false;
    }
    return report;
}

std::string stress_csv(const StressReport& report) {
    std::string csv = "tau,steps,kappa,control,max_excess,violations,status\n";
    for (const auto& r : report.rows)
        csv += num(r.tau) + ',' + std::to_string(r.steps) + ',' + num(r.kappa) + ',' + (r.control ? "1" : "0") + ',' +
               num(r.max_excess) + ',' + std::to_string(r.violations) + ',' + r.status + '\n';
    return csv;
}

// ---- verify-ops ----

std::vector<SweepCase> default_sweep() {
    std::vector<SweepCase> cases;
    auto add = [&](std::string name, int d, int m0, std::string bc, OperatorConfig op) {
        SweepCase c;
        c.name = std::move(name);
        c.grid.d = d;
        c.grid.M0 = m0;
        c.grid.bc = std::move(bc);
        c.op = std::move(op);
        cases.push_back(std::move(c));
    };
    for (int d = 1; d <= 3; ++d)
        for (const char* bc : {"periodic", "neumann", "dirichlet"})
            for (int m0 : {8, 16}) {
                if (d == 3 && m0 == 16) continue;
                for (double eps2 : {1.0, 0.01}) {
                    OperatorConfig op;
                    op.eps2 = eps2;
                    add("laplacian_d" + std::to_string(d) + "_" + bc + "_M" + std::to_string(m0) + "_eps" + num(eps2),
                        d, m0, bc, op);
                }
            }
    for (int d = 1; d <= 2; ++d)
        for (const char* bc : {"periodic", "dirichlet"})
            for (int r : {2, 4})
                for (const char* kernel : {"constant", "fractional"}) {
                    OperatorConfig op;
                    op.family = "nonlocal";
                    op.delta = r / 16.0;
                    op.kernel = kernel;
                    add("nonlocal_d" + std::to_string(d) + "_" + bc + "_delta" + std::to_string(r) + "h_" + kernel, d,
                        16, bc, op);
                }
    for (double s : {0.25, 0.5, 0.75})
        for (const char* gamma : {"2", "1+s"})
            for (int m0 : {8, 32}) {
                OperatorConfig op;
                op.family = "fractional";
                op.s = s;
                op.gamma = gamma;
                add("fractional_s" + num(s) + "_" + gamma + "_M" + std::to_string(m0), 1, m0, "dirichlet", op);
            }
    for (int m0 : {4, 8, 16})
        for (double eps2 : {1.0, 0.01}) {
            OperatorConfig op;
            op.family = "fem";
            op.eps2 = eps2;
            add("fem_M" + std::to_string(m0) + "_eps" + num(eps2), 2, m0, "dirichlet", op);
        }
    return cases;
}

std::vector<SweepCase> parse_sweep(const std::string& text, const fs::path& base_dir) {
    const json doc = parse_toml(text);
    std::vector<SweepCase> cases;
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (it.key() != "case" && it.key() != "fixture") throw ConfigError("sweep." + it.key() + ": unknown key");

    if (doc.contains("case")) {
        std::size_t k = 0;
        for (const auto& entry : doc["case"]) {
            const std::string where = "sweep.case[" + std::to_string(k++) + "]";
            json cfg = {{"grid", json::object()}, {"operator", json::object()}};
            SweepCase c;
            std::optional<double> delta_h;
            for (auto it = entry.begin(); it != entry.end(); ++it) {
                const std::string& key = it.key();
                if (key == "name") {
                    if (!it->is_string()) throw ConfigError(where + ".name: expected a string");
                    c.name = it->get<std::string>();
                } else if (key == "delta_h") {
                    if (!it->is_number()) throw ConfigError(where + ".delta_h: expected a number");
                    delta_h = it->get<double>();
                } else if (key == "d" || key == "box" || key == "M0" || key == "bc") {
                    cfg["grid"][key] = *it;
                } else if (key == "family" || key == "eps2" || key == "delta" || key == "kernel" || key == "s" ||
                           key == "gamma" || key == "quadrature_points") {
                    cfg["operator"][key] = *it;
                } else {
                    throw ConfigError(where + "." + key + ": unknown key");
                }
            }
            ExperimentConfig ec;
            try {
                ec = config_from_json(cfg);
                if (delta_h) {
                    const Grid g = make_grid(ec.grid);
                    ec.op.delta = *delta_h * g.h();
                }
                validate(ec);
            } catch (const ConfigError& e) {
                throw ConfigError(where + ": " + e.what());
            }
            c.grid = ec.grid;
            c.op = ec.op;
            if (c.name.empty()) c.name = "case" + std::to_string(k - 1);
            cases.push_back(std::move(c));
        }
    }
    if (doc.contains("fixture")) {
        std::size_t k = 0;
        for (const auto& entry : doc["fixture"]) {
            const std::string where = "sweep.fixture[" + std::to_string(k++) + "]";
            SweepCase c;
            c.name = "fixture" + std::to_string(k - 1);
            for (auto it = entry.begin(); it != entry.end(); ++it) {
                const std::string& key = it.key();
                if (!it->is_string()) throw ConfigError(where + "." + key + ": expected a string");
                if (key == "name")
                    c.name = it->get<std::string>();
                else if (key == "file")
                    c.fixture = base_dir / it->get<std::string>();
                else if (key == "check")
                    c.check = it->get<std::string>();
                else
                    throw ConfigError(where + "." + key + ": unknown key");
            }
            if (!c.fixture) throw ConfigError(where + ".file: required");
            if (c.check != "zero_row_sum" && c.check != "full_row_zero_sum" && c.check != "non_positive_row_sum")
                throw ConfigError(where + ".check: '" + c.check +
                                  "' is not one of zero_row_sum, full_row_zero_sum, non_positive_row_sum");
            cases.push_back(std::move(c));
        }
    }
    return cases;
}

namespace {

SparseMatrix read_triplets(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::vector<Eigen::Triplet<double>> t;
    long n = 0;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line.rfind("row", 0) == 0) continue;
        long r = 0, c = 0;
        double v = 0;
        char c1 = 0, c2 = 0;
        std::istringstream ls(line);
        if (!(ls >> r >> c1 >> c >> c2 >> v) || c1 != ',' || c2 != ',' || r < 0 || c < 0)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected row,col,value");
        t.emplace_back(r, c, v);
        n = std::max({n, r + 1, c + 1});
    }
    SparseMatrix m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

ConstantCheck parse_check(const std::string& s) {
    if (s == "full_row_zero_sum") return ConstantCheck::FullRowZeroSum;
    if (s == "non_positive_row_sum") return ConstantCheck::NonPositiveRowSum;
    return ConstantCheck::ZeroRowSum;
}

void fill_structure(OpsRow& row, const StructureReport& rep) {
    row.sign = !rep.has(RowDefect::Sign);
    row.dominance = !rep.has(RowDefect::Dominance);
    row.constants = !rep.has(RowDefect::ConstantAnnihilation);
    row.row_identity = rep.max_row_identity_deviation;
    for (const auto& f : rep.failures) row.failing_rows.push_back(std::to_string(f.row) + ":" + to_string(f.defect));
    row.passed = rep.passed();
}

OpsRow check_case(const SweepCase& c) {
    OpsRow row;
    row.name = c.name;
    try {
        if (c.fixture) {
            row.family = "fixture";
            const SparseMatrix m = read_triplets(*c.fixture);
            row.n = static_cast<std::size_t>(m.rows());
            fill_structure(row, verify_structure(m, nullptr, parse_check(c.check)));
            return row;
        }
        row.family = c.op.family;
        const auto op = make_operator(c.op, make_grid(c.grid));
        row.n = op->size();
        fill_structure(row, verify_structure(*op));
        if (c.op.family == "fem" && !(row.row_identity <= 1e-13)) row.passed = false;
        if (op->spectrum() && op->size() <= 512) {
            const double kappa = 1.0, tau = 0.5;
            const auto v = uniform_field(op->size(), 1.0, 7);
            const auto a = PhiEvaluator(op, kappa, tau, ExpStrategy::Spectral).action(1, v);
            const auto b = PhiEvaluator(op, kappa, tau, ExpStrategy::Dense).action(1, v);
            double diff = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                diff = std::max(diff, std::abs(a[i] - b[i]));
                scale = std::max(scale, std::abs(b[i]));
            }
            row.spectral_dense = diff / scale;
            if (!(*row.spectral_dense <= 1e-10)) row.passed = false;
        }
    } catch (const std::exception& e) {
        row.error = e.what();
        row.passed = false;
    }
    return row;
}

}  // namespace

std::vector<OpsRow> verify_ops(const std::vector<SweepCase>& cases, unsigned threads) {
    std::vector<OpsRow> rows(cases.size());
    parallel_for(cases.size(), threads, [&](std::size_t i) { rows[i] = check_case(cases[i]); });
    return rows;
}

std::string ops_csv(const std::vector<OpsRow>& rows) {
    auto flag = [](bool ok) { return ok ? "pass" : "fail"; };
    std::string csv = "case,family,n,sign,dominance,constants,row_identity,spectral_dense,status,failing_rows\n";
    for (const auto& r : rows) {
        std::string failing;
        for (const auto& f : r.failing_rows) failing += (failing.empty() ? "" : ";") + f;
        csv += r.name + ',' + r.family + ',' + std::to_string(r.n) + ',' + flag(r.sign) + ',' + flag(r.dominance) +
               ',' + flag(r.constants) + ',' + num(r.row_identity) + ',' +
               (r.spectral_dense ? num(*r.spectral_dense) : "") + ',' +
               (r.error.empty() ? flag(r.passed) : "error") + ',' + failing + '\n';
    }
    return csv;
}

// ---- entry points ----

int cmd_run(const fs::path& config, const GlobalOptions& g, std::ostream& log) {
    const ExperimentConfig cfg = apply_globals(load_config(config), g);
    const RunOutcome out = run_experiment(cfg);
    write_run_outputs(cfg, out, cfg.output.dir);
    const RunRecord& rec = out.record;
    log << "steps " << rec.steps() << ", final sup norm " << num(rec.sup_norms.back()) << ", violations "
        << rec.violations.size() << ", status " << to_string(rec.status) << "\n";
    if (out.analytic_error) log << "analytic error " << num(*out.analytic_error) << "\n";
    if (rec.status == RunStatus::ExponentialFailure) return kExitError;
    if (rec.status != RunStatus::Completed || !rec.violations.empty()) return kExitViolation;
    return kExitOk;
}

int cmd_converge(const fs::path& config, const std::vector<double>& taus, double tau_ref, const GlobalOptions& g,
                 std::ostream& log) {
    const ExperimentConfig cfg = apply_globals(load_config(config), g);
    const ConvergenceTable table = converge(cfg, taus, tau_ref, g.threads);
    const fs::path dir = cfg.output.dir;
    fs::create_directories(dir);
    write_file_atomic(dir / "convergence.csv", convergence_csv(table));
    const json summary = {{"scheme", cfg.stepper.scheme},
                          {"reference_scheme", "etdrk2"},
                          {"tau_ref", tau_ref},
                          {"T", cfg.stepper.T},
                          {"slope", finite_or_null(table.slope)}};
    write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
    log << convergence_csv(table) << "slope " << num(table.slope) << "\n";
    return kExitOk;
}

int cmd_mbp_stress(const fs::path& config, const std::vector<double>& taus, std::size_t steps, const GlobalOptions& g,
                   std::ostream& log) {
    const ExperimentConfig cfg = apply_globals(load_config(config), g);
    const StressReport rep = mbp_stress(cfg, taus, steps, true, g.threads);
    const fs::path dir = cfg.output.dir;
    fs::create_directories(dir);
    write_file_atomic(dir / "mbp_stress.csv", stress_csv(rep));
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& r : rep.rows)
        if (!r.control) worst = std::max(worst, r.max_excess);
    json summary = {{"steps", steps},
                    {"tolerance", rep.tolerance},
                    {"max_excess", finite_or_null(worst)},
                    {"passed", rep.passed}};
    summary["control_violated"] = rep.control_violated ? json(*rep.control_violated) : json(nullptr);
    write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
    log << stress_csv(rep) << (rep.passed ? "PASS" : "FAIL") << " max excess " << num(worst) << " tolerance "
        << num(rep.tolerance) << "\n";
    return rep.passed ? kExitOk : kExitViolation;
}

int cmd_verify_ops(const std::optional<fs::path>& sweep, const GlobalOptions& g, std::ostream& log) {
    const std::vector<SweepCase> cases =
        sweep ? parse_sweep(read_file(*sweep), sweep->parent_path()) : default_sweep();
    const std::vector<OpsRow> rows = verify_ops(cases, g.threads);
    const fs::path dir = g.out_dir.value_or("out");
    fs::create_directories(dir);
    write_file_atomic(dir / "verify_ops.csv", ops_csv(rows));
    std::size_t failed = 0;
    for (const auto& r : rows) {
        log << (r.passed ? "PASS " : "FAIL ") << r.name;
        if (!r.error.empty()) log << " (" << r.error << ")";
        for (const auto& f : r.failing_rows) log << " " << f;
        log << "\n";
        failed += r.passed ? 0 : 1;
    }
    log << rows.size() - failed << "/" << rows.size() << " passed\n";
    return failed == 0 ? kExitOk : kExitViolation;
}

}  // namespace mbp::cli
