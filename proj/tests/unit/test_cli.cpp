#include <catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mbp/io.hpp"
#include "mbp/random.hpp"
#include "mbp_cli/commands.hpp"
#include "mbp_cli/toml_lite.hpp"
#include "oracles.hpp"

using namespace mbp;
using namespace mbp::cli;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    static std::atomic<int> counter{0};
    fs::path p = fs::temp_directory_path() /
                 ("mbp_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.seed = 11;
    c.grid.d = 2;
    c.grid.M0 = 16;
    c.op.eps2 = 0.01;
    c.stepper.tau = 0.1;
    c.stepper.T = 1.0;
    return c;
}

ExperimentConfig linear_config(const std::string& scheme, double tau) {
    ExperimentConfig c;
    c.grid.d = 1;
    c.grid.box = {{0.0, 2.0 * std::numbers::pi}};
    c.grid.M0 = 64;
    c.nonlinearity.family = "zero";
    c.nonlinearity.kappa = 0.0;
    c.initial.kind = "mode";
    c.initial.amplitude = 1.0;
    c.initial.mode = {3};
    c.stepper.scheme = scheme;
    c.stepper.tau = tau;
    c.stepper.T = 1.0;
    return c;
}

int run_exe(const std::string& args) {
    const char* exe = std::getenv("MBP_ETD_EXE");
    REQUIRE(exe != nullptr);
    const std::string cmd = "\"" + std::string(exe) + "\" " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

std::string error_of(const std::string& toml) {
    try {
        parse_config(toml, false);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("toml subset reader") {
    const auto doc = parse_toml(R"(# comment
seed = 42
name = "a \"quoted\" \\ string"  # trailing comment
lit = 'C:\path'

[grid]
d = 2
box = [[0.0, 1.0],
       [-2.5, 3e2]]  # per axis
flag = true

[stepper]
exp.strategy = "krylov"
krylov.tol = 1e-11
neg = -7
inf = inf

[[case]]
name = "first"
[[case]]
name = "second"
)");
    CHECK(doc["seed"] == 42);
    CHECK(doc["name"] == "a \"quoted\" \\ string");
    CHECK(doc["lit"] == "C:\\path");
    CHECK(doc["grid"]["d"] == 2);
    CHECK(doc["grid"]["box"][1][0].get<double>() == -2.5);
    CHECK(doc["grid"]["box"][1][1].get<double>() == 300.0);
    CHECK(doc["grid"]["flag"] == true);
    CHECK(doc["stepper"]["exp"]["strategy"] == "krylov");
    CHECK(doc["stepper"]["krylov"]["tol"].get<double>() == 1e-11);
    CHECK(doc["stepper"]["neg"] == -7);
    CHECK(std::isinf(doc["stepper"]["inf"].get<double>()));
    REQUIRE(doc["case"].size() == 2);
    CHECK(doc["case"][1]["name"] == "second");

    CHECK_THROWS_WITH(parse_toml("a = 1\nb = {x = 1}\n"), Catch::Matchers::ContainsSubstring("line 2"));
    CHECK_THROWS_AS(parse_toml("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml("a = \"open\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml("[grid\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml("a = [1, 2\n"), ConfigError);
}

TEST_CASE("config round-trips through both encodings") {
    ExperimentConfig c;
    c.seed = 0xfeedfacecafebeefULL;
    c.grid = {3, {{0.0, 1.0}, {-1.0, 0.1}, {0.3, 1.0 / 3.0}}, 12, "dirichlet", "sin_t", 0.7};
    c.op = {"nonlocal", 0.01, 0.25, "fractional", 0.3, "1+s", 32};
    c.nonlinearity.family = "logistic";
    c.nonlinearity.lambda = 1.5;
    c.nonlinearity.p = 4;
    c.nonlinearity.beta = 0.999;
    c.nonlinearity.kappa = 2.5;
    c.nonlinearity.allow_unsafe_kappa = true;
    c.initial = {"mode", 0.5, -0.25, {1, 2, 3}};
    c.stepper = {"etd1", 0.125, 2.0, "krylov", 1e-11, 40};
    c.output = {"out/x y", {0.0, 0.5, 2.0}, 3};
    for (bool json_format : {false, true}) {
        INFO("json " << json_format);
        CHECK(parse_config(serialize_config(c, json_format), json_format) == c);
        CHECK(parse_config(serialize_config(ExperimentConfig{}, json_format), json_format) == ExperimentConfig{});
    }
}

TEST_CASE("round trip holds for arbitrary doubles") {
    // property: every finite double survives serialize -> parse bit for bit
    for (std::uint64_t k = 0; k < 500; ++k) {
        ExperimentConfig c;
        std::uint64_t bits = splitmix64(99, k);
        double x;
        std::memcpy(&x, &bits, sizeof x);
        x = std::abs(x);
        if (!std::isfinite(x) || x == 0.0) continue;
        c.op.eps2 = x;
        c.nonlinearity.theta = uniform01(5, k) * std::pow(10.0, static_cast<int>(k % 40) - 20);
        c.stepper.tau = 1.0 / static_cast<double>(k + 3);
        c.output.snapshot_times = {x, -x};
        for (bool json_format : {false, true}) {
            const auto back = config_from_json(json_format ? nlohmann::json::parse(serialize_config(c, true))
                                                           : parse_toml(serialize_config(c, false)));
            REQUIRE(back == c);
        }
    }
}

TEST_CASE("config errors name the field path") {
    CHECK_THAT(error_of("[grid]\nfoo = 1\n"), Catch::Matchers::ContainsSubstring("grid.foo"));
    CHECK_THAT(error_of("bogus = 1\n"), Catch::Matchers::ContainsSubstring("bogus"));
    CHECK_THAT(error_of("[stepper]\ntau = \"fast\"\n"), Catch::Matchers::ContainsSubstring("stepper.tau"));
    CHECK_THAT(error_of("[stepper]\ntau = -1.0\n"), Catch::Matchers::ContainsSubstring("stepper.tau"));
    CHECK_THAT(error_of("[stepper]\nkrylov.bogus = 1\n"), Catch::Matchers::ContainsSubstring("stepper.krylov.bogus"));
    CHECK_THAT(error_of("[stepper]\nexp.strategy = \"magic\"\n"),
               Catch::Matchers::ContainsSubstring("stepper.exp.strategy"));
    CHECK_THAT(error_of("[operator]\nfamily = \"spectral\"\n"), Catch::Matchers::ContainsSubstring("operator.family"));
    CHECK_THAT(error_of("[grid]\nM0 = 2.5\n"), Catch::Matchers::ContainsSubstring("grid.M0"));
    CHECK_THAT(error_of("[grid]\nbox = [1.0, 0.0]\n"), Catch::Matchers::ContainsSubstring("grid.box"));
    CHECK_THAT(error_of("[nonlinearity]\nkappa = -1.0\n"), Catch::Matchers::ContainsSubstring("nonlinearity.kappa"));
    // cross-field checks
    CHECK_THAT(error_of("[operator]\nfamily = \"fem\"\n"), Catch::Matchers::ContainsSubstring("operator.family"));
    CHECK_THAT(error_of("[grid]\nd = 2\nbc = \"dirichlet\"\n[operator]\nfamily = \"fractional\"\n"),
               Catch::Matchers::ContainsSubstring("operator.family"));
    CHECK_THAT(error_of("[grid]\nbc = \"neumann\"\n[operator]\nfamily = \"nonlocal\"\ndelta = 0.1\n"),
               Catch::Matchers::ContainsSubstring("operator.family"));
    CHECK_THAT(error_of("[field]\nkind = \"vector\"\nm = 3\n[nonlinearity]\nfamily = \"logistic\"\n"),
               Catch::Matchers::ContainsSubstring("nonlinearity.family"));
    CHECK_THAT(error_of("[grid]\ng = \"constant\"\n"), Catch::Matchers::ContainsSubstring("grid.g"));
    CHECK_THAT(error_of("[initial]\nkind = \"mode\"\nmode = [1]\n"), Catch::Matchers::ContainsSubstring("initial.mode"));
    CHECK_THAT(error_of("[output]\nsnapshot_times = [5.0]\n"),
               Catch::Matchers::ContainsSubstring("output.snapshot_times"));
    CHECK_THROWS_AS(parse_config("[stepper]\ntau = 0.3\nT = 1.0\n", false), ConfigError);
    CHECK_THAT(error_of("{\"grid\": {\"d\": 1,}}"), Catch::Matchers::ContainsSubstring("toml"));
    CHECK_THROWS_AS(parse_config("{\"grid\": {\"d\": 1,}}", true), ConfigError);
    CHECK(error_of("[grid]\nd = 1\nM0 = 32\n").empty());
}

TEST_CASE("kappa below the stabilization threshold needs the explicit override") {
    ExperimentConfig c = small_config();
    c.nonlinearity.kappa = 1.5;
    CHECK_THROWS_AS(make_stepper(build_problem(c)), ConfigError);
    c.nonlinearity.allow_unsafe_kappa = true;
    CHECK_NOTHROW(make_stepper(build_problem(c)));

    // defaults: kappa_min for scalars, 2 for vector and matrix fields
    ExperimentConfig fh = small_config();
    fh.nonlinearity.family = "flory_huggins";
    CHECK(build_problem(fh).stepper_config.kappa == Approx(flory_huggins(0.8, 1.6).kappa_min));
    ExperimentConfig v = small_config();
    v.field = {"vector", 3};
    CHECK(build_problem(v).stepper_config.kappa == 2.0);
    v.nonlinearity.kappa = 1.0;
    CHECK_THROWS_AS(make_stepper(build_problem(v)), ConfigError);
}

TEST_CASE("initial fields respect the requested bound") {
    for (const char* kind : {"scalar", "vector", "matrix"}) {
        ExperimentConfig c = small_config();
        c.field = {kind, std::string(kind) == "scalar" ? 1 : 3};
        const Problem p = build_problem(c);
        const Field u = initial_field(c, p);
        CHECK(u.nodes() == p.op->size());
        double worst = 0.0;
        for (std::size_t i = 0; i < u.nodes(); ++i) worst = std::max(worst, node_norm(u, i));
        CHECK(worst <= 0.9 + 1e-15);
        CHECK(worst > 0.1);
        c.seed += 1;
        CHECK(oracle::max_abs_diff(initial_field(c, p).values(), u.values()) > 0.0);
    }
}

TEST_CASE("run writes the documented files") {
    ExperimentConfig c = small_config();
    c.output.energy_cadence = 3;
    c.output.snapshot_times = {0.0, 0.5};
    const auto dir = scratch("run");
    const RunOutcome out = run_experiment(c);
    write_run_outputs(c, out, dir);

    const auto rows = csv_rows(slurp(dir / "series.csv"));
    REQUIRE(rows.size() == 12);
    CHECK(rows[0] == std::vector<std::string>{"t", "sup_norm", "energy"});
    for (std::size_t r = 1; r < rows.size(); ++r) {
        REQUIRE(rows[r].size() == 3);
        const std::size_t step = r - 1;
        // energy at every third step and the last one
        CHECK(rows[r][2].empty() == !(step % 3 == 0 || step == 10));
        CHECK(std::stod(rows[r][1]) <= 1.0);
    }
    CHECK(std::stod(rows[1][0]) == 0.0);
    CHECK(std::stod(rows[11][0]) == Approx(1.0));

    for (const char* t : {"0", "0.5"}) {
        const auto pgm = decode_pgm(slurp(dir / ("field_t" + std::string(t) + ".pgm")));
        CHECK(pgm.width == 16);
        CHECK(pgm.height == 16);
        const auto field = csv_rows(slurp(dir / ("field_t" + std::string(t) + ".csv")));
        CHECK(field.size() == 257);
        CHECK(field[0].size() == field[1].size());
    }

    const auto s = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(s["violation_count"] == 0);
    CHECK(s["steps"] == 10);
    CHECK(s["final_sup_norm"].get<double>() == out.record.sup_norms.back());
    CHECK(s["wall_seconds"].get<double>() >= 0.0);
    CHECK(s["energy"]["monotone"] == true);
    CHECK_FALSE(s.contains("analytic_error"));
    // no temporaries left behind
    for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
}

TEST_CASE("zero-step run emits only the initial row") {
    ExperimentConfig c = small_config();
    c.stepper.T = 0.0;
    const auto dir = scratch("zero");
    write_run_outputs(c, run_experiment(c), dir);
    const auto rows = csv_rows(slurp(dir / "series.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(std::stod(rows[1][0]) == 0.0);
    CHECK(std::stod(rows[1][1]) == Approx(sup_norm(initial_field(c, build_problem(c)))));
}

TEST_CASE("linear single mode reproduces the analytic solution") {
    for (const char* scheme : {"etd1", "etdrk2"})
        for (double tau : {1.0, 0.25, 0.01}) {
            const ExperimentConfig c = linear_config(scheme, tau);
            const RunOutcome out = run_experiment(c);
            REQUIRE(out.analytic_error.has_value());
            CHECK(*out.analytic_error <= 1e-10);
            CHECK(out.summary["analytic_error"].get<double>() == *out.analytic_error);
            // independent oracle: lambda_3 of the 3-point stencil
            const Grid& g = build_problem(c).op->grid();
            const double h = g.h();
            const double lambda = -4.0 / (h * h) * std::pow(std::sin(1.5 * h), 2);
            const auto v = out.record.final_state.values();
            double err = 0.0, ref = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double exact = std::exp(lambda) * std::sin(3.0 * g.coordinate(i, 0));
                err = std::max(err, std::abs(v[i] - exact));
                ref = std::max(ref, std::abs(exact));
            }
            CHECK(err / ref <= 1e-10);
        }
    // a nonlinear config never reports an analytic error
    ExperimentConfig c = linear_config("etd1", 0.5);
    c.nonlinearity.family = "double_well";
    c.nonlinearity.kappa.reset();
    c.initial.amplitude = 0.9;
    CHECK_FALSE(run_experiment(c).analytic_error.has_value());
}

TEST_CASE("outputs are deterministic for a fixed seed") {
    ExperimentConfig c = small_config();
    c.output.snapshot_times = {1.0};
    const auto a = scratch("det_a"), b = scratch("det_b"), d = scratch("det_c");
    write_run_outputs(c, run_experiment(c), a);
    write_run_outputs(c, run_experiment(c), b);
    CHECK(slurp(a / "series.csv") == slurp(b / "series.csv"));
    CHECK(slurp(a / "field_t1.csv") == slurp(b / "field_t1.csv"));
    CHECK(slurp(a / "field_t1.pgm") == slurp(b / "field_t1.pgm"));
    c.seed += 1;
    write_run_outputs(c, run_experiment(c), d);
    CHECK(slurp(a / "series.csv") != slurp(d / "series.csv"));
}

TEST_CASE("vector, matrix and Dirichlet runs through the config path") {
    SECTION("vector") {
        ExperimentConfig c = small_config();
        c.field = {"vector", 3};
        c.stepper.tau = 10.0;
        c.stepper.T = 100.0;
        const RunOutcome out = run_experiment(c);
        CHECK(out.record.status == RunStatus::Completed);
        CHECK(out.record.max_excess() <= 1e-12);
        CHECK(out.summary.contains("energy"));
    }
    SECTION("matrix") {
        ExperimentConfig c = small_config();
        c.field = {"matrix", 2};
        c.stepper.tau = 10.0;
        c.stepper.T = 100.0;
        const RunOutcome out = run_experiment(c);
        CHECK(out.record.status == RunStatus::Completed);
        CHECK(out.record.max_excess() <= 1e-12);
        CHECK_FALSE(out.summary.contains("energy"));
    }
    SECTION("time-dependent Dirichlet data leaves energy blank") {
        ExperimentConfig c = small_config();
        c.grid.bc = "dirichlet";
        c.grid.g = "sin_t";
        c.grid.g_value = 1.0;
        const auto dir = scratch("dir");
        const RunOutcome out = run_experiment(c);
        write_run_outputs(c, out, dir);
        CHECK(out.record.max_excess() <= 1e-12);
        for (const auto& row : csv_rows(slurp(dir / "series.csv"))) CHECK(row.back().empty() == (row[0] != "t"));
    }
}

TEST_CASE("parallel_for visits every index and propagates failures") {
    for (unsigned threads : {1u, 3u, 0u}) {
        std::vector<std::atomic<int>> hits(57);
        parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
        for (auto& h : hits) CHECK(h == 1);
        CHECK_THROWS_AS(parallel_for(10, threads,
                                     [](std::size_t i) {
                                         if (i == 7) throw Error("boom");
                                     }),
                        Error);
    }
}

TEST_CASE("converge produces first and second order tables") {
    ExperimentConfig c;
    c.seed = 3;
    c.grid.d = 1;
    c.grid.box = {{0.0, 2.0 * std::numbers::pi}};
    c.grid.M0 = 128;
    c.op.eps2 = 0.01;
    c.nonlinearity.kappa = 2.0;
    const std::vector<double> taus{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
    CHECK_THROWS_AS(converge(c, taus, 1.0 / 512, 2), ConfigError);

    c.stepper.scheme = "etdrk2";
    const ConvergenceTable t2 = converge(c, taus, 1.0 / 2048, 2);
    REQUIRE(t2.rows.size() == 4);
    CHECK(t2.slope == Approx(2.0).margin(0.1));
    for (std::size_t i = 1; i < t2.rows.size(); ++i) CHECK(*t2.rows[i].ratio == Approx(4.0).margin(0.5));
    CHECK_FALSE(t2.rows[0].ratio.has_value());

    c.stepper.scheme = "etd1";
    const ConvergenceTable t1 = converge(c, {1.0 / 128, 1.0 / 16, 1.0 / 64, 1.0 / 32}, 1.0 / 1024, 1);
    CHECK(t1.rows.front().tau == 1.0 / 16);
    CHECK(t1.slope == Approx(1.0).margin(0.1));

    const auto rows = csv_rows(convergence_csv(t1));
    CHECK(rows[0] == std::vector<std::string>{"tau", "error", "ratio", "order"});
    CHECK(rows[1].size() == 4);
    CHECK(rows[1][2].empty());
}

TEST_CASE("mbp-stress keeps compliant runs inside the bound") {
    ExperimentConfig c = small_config();
    const StressReport rep = mbp_stress(c, {0.01, 1.0, 1e4}, 20, true, 2);
    CHECK(rep.passed);
    CHECK(rep.rows.size() == 6);
    CHECK(rep.control_violated.has_value());
    for (const auto& r : rep.rows)
        if (!r.control) CHECK(r.max_excess <= 1e-12);

    // one step at tau = 1e4
    CHECK(mbp_stress(c, {1e4}, 1, false).rows.at(0).max_excess <= 1e-12);

    // data sitting on the bound is a fixed point
    c.initial = {"constant", 0.0, 1.0, {1}};
    const StressReport sat = mbp_stress(c, {0.01, 100.0}, 10, false);
    CHECK(sat.passed);
    for (const auto& r : sat.rows) CHECK(std::abs(r.max_excess) <= 1e-12);

    // f = 0 has nothing to destabilize, so there is no control
    ExperimentConfig z = small_config();
    z.nonlinearity.family = "zero";
    CHECK_FALSE(mbp_stress(z, {1.0}, 2).control_violated.has_value());
}

TEST_CASE("verify-ops default sweep and corrupted fixture") {
    const auto rows = verify_ops(default_sweep(), 0);
    REQUIRE(rows.size() > 40);
    std::size_t fem = 0, spectral = 0;
    for (const auto& r : rows) {
        INFO(r.name << " " << r.error);
        CHECK(r.passed);
        if (r.family == "fem") {
            ++fem;
            CHECK(r.row_identity <= 1e-13);
        }
        if (r.spectral_dense) ++spectral;
    }
    CHECK(fem > 0);
    CHECK(spectral > 10);

    const auto dir = scratch("ops");
    const auto op = laplacian_fd(build_grid(1, {0, 1}, 8, BoundaryCondition::periodic()));
    spit(dir / "good.csv", encode_triplets(op.interior()));
    SparseMatrix bad = op.interior();
    bad.coeffRef(3, 4) = -bad.coeffRef(3, 4);
    spit(dir / "bad.csv", encode_triplets(bad));
    spit(dir / "sweep.toml", R"(
[[case]]
name = "nl"
family = "nonlocal"
d = 1
M0 = 32
bc = "dirichlet"
delta_h = 3.0

[[fixture]]
name = "good"
file = "good.csv"

[[fixture]]
name = "bad"
file = "bad.csv"
check = "zero_row_sum"
)");
    const auto cases = parse_sweep(slurp(dir / "sweep.toml"), dir);
    REQUIRE(cases.size() == 3);
    CHECK(cases[0].op.delta == Approx(3.0 / 32));
    const auto res = verify_ops(cases, 1);
    CHECK(res[0].passed);
    CHECK(res[1].passed);
    CHECK_FALSE(res[2].passed);
    CHECK(res[2].failing_rows == std::vector<std::string>{"3:" + to_string(RowDefect::Sign),
                                                          "3:" + to_string(RowDefect::ConstantAnnihilation)});
    const auto table = csv_rows(ops_csv(res));
    CHECK(table[3][0] == "bad");
    CHECK(table[3][8] == "fail");

    CHECK_THROWS_AS(parse_sweep("[[case]]\ncolour = 1\n", dir), ConfigError);
    CHECK_THROWS_AS(parse_sweep("[[fixture]]\nname = \"x\"\n", dir), ConfigError);
    CHECK_THROWS_AS(parse_sweep("[[case]]\nfamily = \"fem\"\nbc = \"periodic\"\n", dir), ConfigError);
}

TEST_CASE("executable exit codes and global flags") {
    if (!std::getenv("MBP_ETD_EXE")) SKIP("MBP_ETD_EXE is not set");
    const auto dir = scratch("exe");
    spit(dir / "ok.toml", serialize_config(small_config()));
    CHECK(run_exe("run \"" + (dir / "ok.toml").string() + "\" --out-dir \"" + (dir / "a").string() + "\"") == 0);
    CHECK(fs::exists(dir / "a" / "series.csv"));
    CHECK(run_exe("run \"" + (dir / "ok.toml").string() + "\" --seed 12 --out-dir \"" + (dir / "b").string() + "\"") ==
          0);
    CHECK(slurp(dir / "a" / "series.csv") != slurp(dir / "b" / "series.csv"));
    CHECK(nlohmann::json::parse(slurp(dir / "b" / "summary.json"))["seed"] == 12);

    spit(dir / "bad.toml", "[grid]\nfoo = 1\n");
    CHECK(run_exe("run \"" + (dir / "bad.toml").string() + "\"") == 1);
    CHECK(run_exe("run \"" + (dir / "missing.toml").string() + "\"") == 1);
    CHECK(run_exe("frobnicate") == 1);

    // under-stabilized run leaves the bound: assertion-style exit
    ExperimentConfig unsafe = small_config();
    unsafe.nonlinearity.kappa = 0.0;
    unsafe.nonlinearity.allow_unsafe_kappa = true;
    unsafe.stepper.tau = 100.0;
    unsafe.stepper.T = 1000.0;
    spit(dir / "unsafe.toml", serialize_config(unsafe));
    CHECK(run_exe("run \"" + (dir / "unsafe.toml").string() + "\" --out-dir \"" + (dir / "u").string() + "\"") == 2);

    CHECK(run_exe("mbp-stress \"" + (dir / "ok.toml").string() + "\" --taus 0.1,1e4 --steps 5 --threads 2 --out-dir \"" +
                  (dir / "s").string() + "\"") == 0);
    CHECK(csv_rows(slurp(dir / "s" / "mbp_stress.csv")).size() == 5);
    CHECK(run_exe("converge \"" + (dir / "ok.toml").string() + "\" --taus 0.5,0.25 --tau-ref 0.125 --out-dir \"" +
                  (dir / "c").string() + "\"") == 1);
    CHECK(run_exe("converge \"" + (dir / "ok.toml").string() + "\" --taus 0.5,0.25 --tau-ref 0.03125 --out-dir \"" +
                  (dir / "c").string() + "\"") == 0);
    CHECK(nlohmann::json::parse(slurp(dir / "c" / "summary.json")).contains("slope"));

    CHECK(run_exe("verify-ops --out-dir \"" + (dir / "o").string() + "\"") == 0);
    const auto op = laplacian_fd(build_grid(1, {0, 1}, 8, BoundaryCondition::periodic()));
    SparseMatrix bad = op.interior();
    bad.coeffRef(2, 2) = -0.5;
    spit(dir / "bad.csv", encode_triplets(bad));
    spit(dir / "sweep.toml", "[[fixture]]\nname = \"bad\"\nfile = \"bad.csv\"\n");
    CHECK(run_exe("verify-ops --sweep \"" + (dir / "sweep.toml").string() + "\" --out-dir \"" + (dir / "p").string() +
                  "\"") == 2);
    CHECK(slurp(dir / "p" / "verify_ops.csv").find("2:") != std::string::npos);
}
