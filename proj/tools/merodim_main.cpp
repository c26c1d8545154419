// Batch CLI for the spherical transfer-operator toolkit: regime
// classification, pressure curves, dimension estimates, conformal-measure
// construction and diagnostics, invariant-measure criteria, rasters,
// parameter sweeps and the self-test suite.

#include "merodim/bowen.hpp"
#include "merodim/invariant.hpp"
#include "merodim/numerics.hpp"
#include "merodim/poincare.hpp"
#include "merodim/raster.hpp"
#include "merodim/runio.hpp"
#include "merodim/transfer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>

namespace fs = std::filesystem;
using namespace merodim;

namespace {

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

TruncationPolicy policy_from(const Config& cfg) {
    TruncationPolicy pol;
    pol.k_max = static_cast<int>(cfg.get_long("k_max", 100000));
    pol.radius_cut = cfg.get_double("radius_cut", 1e12);
    pol.rel_tail_tol = cfg.get_double("rel_tail_tol", 1e-9);
    pol.asym_tol = cfg.get_double("asym_tol", 1e-8);
    return pol;
}

BeamParams beam_from(const Config& cfg, unsigned workers) {
    BeamParams beam;
    beam.beam_width = static_cast<int>(cfg.get_long("beam_width", 6000));
    beam.branch_halfwidth = static_cast<int>(cfg.get_long("branch_halfwidth", 40));
    beam.rel_tol = cfg.get_double("beam_rel_tol", 1e-6);
    beam.workers = workers;
    return beam;
}

Json pressure_to_json(const PressureEstimate& est) {
    Json j;
    j["kind"] = "pressure";
    j["t"] = est.t;
    j["base"] = est.base.is_infinity() ? "inf" : format_complex(est.base.value());
    j["depth"] = est.depth;
    j["value"] = est.extrapolated;
    j["error_bar"] = est.error_bar;
    j["per_depth"] = est.per_depth;
    j["trunc"] = Json{{"discard_share", est.discard_share}, {"lump_uncertainty", est.lump_uncertainty}};
    return j;
}

Json dimension_to_json(const DimensionEstimate& est) {
    Json j;
    j["kind"] = "dimension";
    j["method"] = est.method;
    j["value"] = est.h;
    j["bracket"] = {est.bracket.first, est.bracket.second};
    j["residual"] = est.residual;
    j["flag"] = est.flag;
    j["map"] = est.map_label;
    return j;
}

struct RunContext {
    Config cfg;
    fs::path out_dir;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

// Each handler returns the records it wants written, in deterministic order.
std::vector<Json> run_classify(const RunContext& ctx) {
    const MapSpec f = map_from_config(ctx.cfg);
    const RegimeReport rep = classify_regime(f, static_cast<int>(ctx.cfg.get_long("orbit_len", 60)),
                                             ctx.cfg.get_double("escape_box", 1e6));
    Json j = regime_to_json(rep);
    j["kind"] = "classify";
    j["map"] = f.label();
    return {j};
}

std::vector<Json> run_pressure(const RunContext& ctx) {
    const MapSpec f = map_from_config(ctx.cfg);
    const RegimeReport rep = classify_regime(f, static_cast<int>(ctx.cfg.get_long("orbit_len", 60)),
                                             ctx.cfg.get_double("escape_box", 1e6));
    const TruncationPolicy pol = policy_from(ctx.cfg);
    const BeamParams beam = beam_from(ctx.cfg, ctx.workers);
    const int depth = static_cast<int>(ctx.cfg.get_long("depth", 8));

    SpherePoint base = default_base_point(f, rep);
    if (ctx.cfg.has("base")) base = SpherePoint(parse_complex(ctx.cfg.get("base")));

    std::vector<double> grid;
    if (ctx.cfg.has("t_grid")) grid = parse_grid(ctx.cfg.get("t_grid"));
    else grid.push_back(ctx.cfg.get_double("t", 1.0));

    std::vector<Json> records;
    for (double t : grid) {
        const PressureEstimate est = pressure_estimate(f, t, base, depth, pol, beam);
        Json j = pressure_to_json(est);
        j["map"] = f.label();
        records.push_back(j);
    }
    return records;
}

std::vector<Json> run_dimension(const RunContext& ctx) {
    const MapSpec f = map_from_config(ctx.cfg);
    const RegimeReport rep = classify_regime(f, static_cast<int>(ctx.cfg.get_long("orbit_len", 60)),
                                             ctx.cfg.get_double("escape_box", 1e6));
    const TruncationPolicy pol = policy_from(ctx.cfg);
    const BeamParams beam = beam_from(ctx.cfg, ctx.workers);
    const std::string method = ctx.cfg.get("method", "pressure");
    const double tol = ctx.cfg.get_double("bisect_tol", 0.02);
    const int depth = static_cast<int>(ctx.cfg.get_long("depth", 8));

    std::vector<Json> records;
    if (method == "pressure" || method == "both") {
        const DimensionEstimate est = pressure_root(f, rep, pol, beam, depth, tol);
        Json j = dimension_to_json(est);
        const BoundsReport bounds = bounds_check(est, rep, f.order());
        j["bounds_pass"] = bounds.pass;
        j["bounds"] = bounds.lines;
        records.push_back(j);
    }
    if (method == "ulam" || method == "both") {
        const double lo = ctx.cfg.get_double("ulam_lo", -6.0 * std::numbers::pi);
        const double hi = ctx.cfg.get_double("ulam_hi", 6.0 * std::numbers::pi);
        const int bins = static_cast<int>(ctx.cfg.get_long("bins", 1200));
        const DimensionEstimate est = ulam_root(f, rep, lo, hi, bins, tol);
        records.push_back(dimension_to_json(est));
    }
    if (records.empty()) throw Error("ConfigError", "unknown dimension method " + method);
    return records;
}

std::vector<Json> run_poincare(const RunContext& ctx) {
    const MapSpec f = map_from_config(ctx.cfg);
    const RegimeReport rep = classify_regime(f, static_cast<int>(ctx.cfg.get_long("orbit_len", 60)),
                                             ctx.cfg.get_double("escape_box", 1e6));
    const TruncationPolicy pol = policy_from(ctx.cfg);
    const BeamParams beam = beam_from(ctx.cfg, ctx.workers);
    const int n_max = static_cast<int>(ctx.cfg.get_long("n_max", 10));
    std::vector<double> grid = parse_grid(ctx.cfg.get("t_grid", "1.7,1.8,1.9,1.95,2.0"));

    const ExponentEstimate est = estimate_h(f, rep, grid, n_max, pol, beam);
    Json j;
    j["kind"] = "exponent";
    j["method"] = est.method;
    j["value"] = est.h;
    j["bracket"] = {est.bracket.first, est.bracket.second};
    j["inconsistent_regime"] = est.inconsistent_regime;
    Json diags = Json::array();
    for (const auto& d : est.diagnostics) {
        const char* cls = d.cls == SeriesClass::Convergent
                              ? "Convergent"
                              : (d.cls == SeriesClass::Divergent ? "Divergent" : "Inconclusive");
        diags.push_back(Json{{"t", d.t}, {"class", cls}, {"ratio", d.ratio}});
    }
    j["diagnostics"] = diags;
    j["map"] = f.label();
    return {j};
}

std::vector<Json> run_measure(const RunContext& ctx) {
    const MapSpec f = map_from_config(ctx.cfg);
    const TruncationPolicy pol = policy_from(ctx.cfg);
    const BeamParams beam = beam_from(ctx.cfg, ctx.workers);
    const double s = ctx.cfg.get_double("s", 2.05);
    const int depth = static_cast<int>(ctx.cfg.get_long("depth", 8));

    const AtomicMeasure m = build_ps_measure(f, s, depth, pol, beam);
    const std::string file = ctx.cfg.get("measure_out", (ctx.out_dir / "measure.atoms").string());
    m.save(file);

    std::vector<double> radii = parse_grid(ctx.cfg.get("radii", "1,2,4,8,16,32,64"));
    const TightnessProfile prof = tightness_profile(m, radii);
    {
        std::ofstream csv(ctx.out_dir / "tightness.csv");
        csv << "radius,mass\n";
        char buf[80];
        for (std::size_t i = 0; i < prof.radii.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", prof.radii[i], prof.masses[i]);
            csv << buf;
        }
    }

    Json j;
    j["kind"] = "measure";
    j["s"] = s;
    j["depth_max"] = depth;
    j["atoms"] = m.atoms().size();
    j["normalization_Z"] = m.normalization();
    j["discarded_mass_bound"] = m.discarded_mass_bound();
    j["tail_exponent_fit"] = prof.fitted_exponent;
    j["file"] = file;
    j["map"] = f.label();
    return {j};
}

std::vector<Json> run_conformality(const RunContext& ctx) {
    const MapSpec f = map_from_config(ctx.cfg);
    const RegimeReport rep = classify_regime(f, static_cast<int>(ctx.cfg.get_long("orbit_len", 60)),
                                             ctx.cfg.get_double("escape_box", 1e6));
    if (!ctx.cfg.has("measure")) throw Error("ConfigError", "conformality needs --measure FILE");
    const AtomicMeasure m = AtomicMeasure::load(ctx.cfg.get("measure"));
    const double h_test = ctx.cfg.get_double("h_test", 2.0);
    const int count = static_cast<int>(ctx.cfg.get_long("cells", 20));
    const double radius = ctx.cfg.get_double("cell_radius", 0.05);

    const auto cells = default_conformality_cells(f, m, rep, count, radius);
    const ConformalityReport report = conformality_check(f, m, cells, h_test);
    Json j;
    j["kind"] = "conformality";
    j["h_test"] = h_test;
    j["cells"] = report.cells.size();
    j["summary_C"] = report.summary_c;
    j["drift_slope"] = report.drift_slope;
    j["drift_r2"] = report.drift_r2;
    j["non_conformal"] = report.non_conformal;
    j["map"] = f.label();
    return {j};
}

std::vector<Json> run_criterion(const RunContext& ctx) {
    std::vector<Json> records;
    if (ctx.cfg.has("rho") || ctx.cfg.has("h")) {
        const double rho = ctx.cfg.get_double("rho", 1.0);
        const double h = ctx.cfg.get_double("h", 2.0);
        const Finiteness fin = finiteness_criterion(rho, h);
        const std::string verdict = fin == Finiteness::Finite ? "Finite" : "Infinite";
        std::cout << verdict << "\n";
        records.push_back(Json{{"kind", "criterion"},
                               {"rho", rho},
                               {"h", h},
                               {"threshold", 3.0 * rho / (rho + 1.0)},
                               {"value", verdict}});
    }
    if (ctx.cfg.has("degp")) {
        const int degp = static_cast<int>(ctx.cfg.get_long("degp", 0));
        const std::string verdict =
            schwarzian_degree_criterion(degp) == Finiteness::Finite ? "Finite" : "Infinite";
        std::cout << verdict << "\n";
        records.push_back(Json{{"kind", "criterion_degree"}, {"degP", degp}, {"value", verdict}});
    }
    if (records.empty()) throw Error("ConfigError", "criterion needs --rho/--h or --degp");
    return records;
}

std::vector<Json> run_martens(const RunContext& ctx) {
    const MapSpec f = map_from_config(ctx.cfg);
    const RegimeReport rep = classify_regime(f, static_cast<int>(ctx.cfg.get_long("orbit_len", 60)),
                                             ctx.cfg.get_double("escape_box", 1e6));
    if (!ctx.cfg.has("measure")) throw Error("ConfigError", "martens needs --measure FILE");
    const AtomicMeasure m = AtomicMeasure::load(ctx.cfg.get("measure"));
    const double radius = ctx.cfg.get_double("cell_radius", 0.08);
    const ChordalDisk a{parse_complex(ctx.cfg.get("cell_a", "0.9+0.35i")), radius};
    const ChordalDisk a0{parse_complex(ctx.cfg.get("cell_a0", "-0.9+0.35i")), radius};
    const int n_max = static_cast<int>(ctx.cfg.get_long("n_max", 10));

    const MartensEstimate est = martens_ratio(f, m, rep, a, a0, n_max);
    Json j;
    j["kind"] = "martens";
    j["cell_a"] = format_complex(a.center);
    j["cell_a0"] = format_complex(a0.center);
    j["radius"] = radius;
    j["value"] = est.limit;
    j["error_bar"] = est.error_bar;
    j["ratios"] = est.ratios;
    j["map"] = f.label();
    return {j};
}

std::vector<Json> run_lyapunov(const RunContext& ctx) {
    const MapSpec f = map_from_config(ctx.cfg);
    std::vector<Json> records;
    if (ctx.cfg.get("control", "") == "fixed_point") {
        const SpherePoint z(parse_complex(ctx.cfg.get("control_point", "0+0i")));
        const LyapunovEstimate est = lyapunov_control_orbit(f, z, static_cast<int>(ctx.cfg.get_long("returns", 100)));
        records.push_back(Json{{"kind", "lyapunov_control"}, {"value", est.chi}, {"map", f.label()}});
        return records;
    }
    const RegimeReport rep = classify_regime(f, static_cast<int>(ctx.cfg.get_long("orbit_len", 60)),
                                             ctx.cfg.get_double("escape_box", 1e6));
    if (!ctx.cfg.has("measure")) throw Error("ConfigError", "lyapunov needs --measure FILE");
    const AtomicMeasure m = AtomicMeasure::load(ctx.cfg.get("measure"));
    const int orbits = static_cast<int>(ctx.cfg.get_long("orbits", 200));
    const int returns = static_cast<int>(ctx.cfg.get_long("returns", 100));

    const LyapunovEstimate est = lyapunov_induced(f, rep, m, orbits, returns, ctx.seed);
    {
        std::ofstream csv(ctx.out_dir / "tau_histogram.csv");
        csv << "tau,count\n";
        for (const auto& [tau, count] : est.tau_histogram) csv << tau << "," << count << "\n";
    }
    Json j;
    j["kind"] = "lyapunov";
    j["value"] = est.chi;
    j["std_err"] = est.std_err;
    j["orbits_completed"] = est.orbits_completed;
    j["orbits_requested"] = est.orbits_requested;
    j["map"] = f.label();
    return {j};
}

std::vector<Json> run_raster(const RunContext& ctx) {
    const MapSpec f = map_from_config(ctx.cfg);
    const RegimeReport rep = classify_regime(f, static_cast<int>(ctx.cfg.get_long("orbit_len", 60)),
                                             ctx.cfg.get_double("escape_box", 1e6));
    std::vector<Json> records;
    const std::string mode = ctx.cfg.get("mode", "grid");
    if (mode == "grid") {
        const std::vector<double> region = parse_grid(ctx.cfg.get("region", "-4.8,4.8,-3.2,3.2"));
        if (region.size() != 4) throw Error("ConfigError", "region needs x0,x1,y0,y1");
        const int nx = static_cast<int>(ctx.cfg.get_long("nx", 400));
        const int ny = static_cast<int>(ctx.cfg.get_long("ny", 300));
        const int max_iter = static_cast<int>(ctx.cfg.get_long("max_iter", 200));
        const RasterResult raster = raster_region(f, rep, {region[0], region[1], region[2], region[3]},
                                                  nx, ny, max_iter, ctx.workers);
        const std::string pgm = ctx.cfg.get("pgm", (ctx.out_dir / "julia.pgm").string());
        write_pgm(pgm, raster);
        records.push_back(Json{{"kind", "raster"},
                               {"nx", nx},
                               {"ny", ny},
                               {"undecided_fraction", raster.undecided_fraction},
                               {"file", pgm},
                               {"map", f.label()}});
    } else if (mode == "real") {
        const int depth = static_cast<int>(ctx.cfg.get_long("depth", 12));
        const double wlo = ctx.cfg.get_double("window_lo", -4.8);
        const double whi = ctx.cfg.get_double("window_hi", 4.8);
        const RealJuliaRefinement ref = refine_real_julia(f, wlo, whi, depth);
        const std::string csv_path = ctx.cfg.get("csv", (ctx.out_dir / "intervals.csv").string());
        {
            std::ofstream csv(csv_path);
            csv << "lo,hi\n";
            char buf[80];
            for (const Interval& iv : ref.intervals) {
                std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", iv.lo, iv.hi);
                csv << buf;
            }
        }
        std::vector<double> scales = parse_grid(ctx.cfg.get("scales", "0.005,0.01,0.02,0.05,0.1,0.2,0.5"));
        const BoxCountResult boxes = box_count_intervals(ref.intervals, scales);
        records.push_back(Json{{"kind", "box_count"},
                               {"method", "BoxCount"},
                               {"value", boxes.slope},
                               {"r2", boxes.r2},
                               {"depth", depth},
                               {"total_length", ref.total_length},
                               {"intervals", ref.intervals.size()},
                               {"file", csv_path},
                               {"map", f.label()}});
    } else {
        throw Error("ConfigError", "raster mode must be grid or real");
    }
    return records;
}

std::vector<Json> run_selftest(const RunContext& ctx);

std::vector<Json> run_sweep(const RunContext& ctx) {
    const std::string param = ctx.cfg.get("param", "");
    const std::string inner = ctx.cfg.get("run", "pressure");
    if (param.empty()) throw Error("ConfigError", "sweep needs --param");
    std::vector<std::string> values;
    {
        std::stringstream ss(ctx.cfg.get("values", ""));
        std::string item;
        while (std::getline(ss, item, ',')) values.push_back(item);
    }
    if (values.empty()) throw Error("ConfigError", "sweep needs --values");

    std::vector<std::vector<Json>> slots(values.size());
    parallel_for(values.size(), ctx.workers, [&](std::size_t i) {
        RunContext sub = ctx;
        sub.cfg.set(param, values[i]);
        sub.seed = task_seed(ctx.seed, i);
        sub.workers = 1;
        if (inner == "pressure") slots[i] = run_pressure(sub);
        else if (inner == "criterion") slots[i] = run_criterion(sub);
        else if (inner == "classify") slots[i] = run_classify(sub);
        else throw Error("ConfigError", "sweep inner command must be pressure, criterion or classify");
    });
    std::vector<Json> records;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        for (Json& j : slots[i]) {
            j["sweep_index"] = i;
            j["sweep_value"] = values[i];
            records.push_back(std::move(j));
        }
    }
    return records;
}

int dispatch(const std::string& command, RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(ctx.out_dir);

    Manifest man;
    man.command = command;
    man.config_echo = ctx.cfg.kv;
    man.master_seed = ctx.seed;
    man.version = tool_version();

    std::vector<Json> records;
    int exit_code = 0;
    try {
        if (command == "classify") records = run_classify(ctx);
        else if (command == "pressure") records = run_pressure(ctx);
        else if (command == "dimension") records = run_dimension(ctx);
        else if (command == "poincare") records = run_poincare(ctx);
        else if (command == "measure") records = run_measure(ctx);
        else if (command == "conformality") records = run_conformality(ctx);
        else if (command == "criterion") records = run_criterion(ctx);
        else if (command == "martens") records = run_martens(ctx);
        else if (command == "lyapunov") records = run_lyapunov(ctx);
        else if (command == "raster") records = run_raster(ctx);
        else if (command == "sweep") records = run_sweep(ctx);
        else if (command == "selftest") records = run_selftest(ctx);
        else throw Error("ConfigError", "unknown command " + command);
    } catch (const Error& e) {
        if (e.code() == "ConfigError") {
            std::cerr << "config error: " << e.what() << "\n";
            return 2;
        }
        records.push_back(Json{{"kind", "error"}, {"error", e.code()}, {"detail", e.what()}});
        std::cerr << "numeric failure: " << e.what() << "\n";
        exit_code = 3;
    }

    for (const Json& j : records) {
        if (j.contains("regime")) {
            man.regime_summary = j["regime"].get<std::string>();
            break;
        }
    }
    JsonlWriter writer((ctx.out_dir / "records.jsonl").string(), man.hash());
    for (Json& j : records) writer.write(std::move(j));
    man.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    man.save((ctx.out_dir / "manifest.json").string());
    return exit_code;
}

}  // namespace

// ---------------------------------------------------------------------------
// Self test: the closed-form cases of every module.
// ---------------------------------------------------------------------------

namespace {

std::vector<Json> run_selftest(const RunContext& ctx) {
    std::vector<Json> records;
    int failures = 0;
    const auto check = [&](const std::string& name, bool pass, double got, double expected) {
        records.push_back(Json{{"kind", "selftest"},
                               {"check", name},
                               {"pass", pass},
                               {"got", got},
                               {"expected", expected}});
        if (!pass) ++failures;
    };
    const auto near = [](double a, double b, double tol) { return std::abs(a - b) <= tol; };

    // Sphere primitives.
    check("chordal(0,inf)=1", chordal_dist(SpherePoint(Complex(0.0)), SpherePoint::infinity()) == 1.0,
          chordal_dist(SpherePoint(Complex(0.0)), SpherePoint::infinity()), 1.0);
    check("chordal(z,z)=0", chordal_dist(SpherePoint(Complex(1.3, -0.4)), SpherePoint(Complex(1.3, -0.4))) == 0.0,
          0.0, 0.0);
    {
        const double d = chordal_dist(SpherePoint(Complex(0.0)), SpherePoint(Complex(1.0)));
        check("chordal(0,1)=1/sqrt2", near(d, 1.0 / std::sqrt(2.0), 1e-15), d, 1.0 / std::sqrt(2.0));
    }
    {
        const double sd = spherical_derivative(MobiusMap::identity(), SpherePoint(Complex(2.0, 1.0)));
        check("mobius identity |f'|_sigma=1", near(sd, 1.0, 1e-15), sd, 1.0);
    }

    const MapSpec tan1 = MapSpec::tangent(Complex(1.0, 0.0));
    const MapSpec tanpi = MapSpec::tangent(Complex(0.0, std::numbers::pi));
    {
        const double sd = tan1.spherical_derivative(SpherePoint(Complex(0.0)));
        check("tan |f'|_sigma(0)=1", near(sd, 1.0, 1e-15), sd, 1.0);
        const double o5 = tan1.orbit_spherical_derivative(SpherePoint(Complex(0.0)), 5);
        check("orbit derivative fixed point", near(o5, 1.0, 1e-14), o5, 1.0);
        const double o1 = tan1.orbit_spherical_derivative(SpherePoint(Complex(0.4, 0.2)), 1);
        const double sd2 = tan1.spherical_derivative(SpherePoint(Complex(0.4, 0.2)));
        check("orbit n=1 equals spherical", near(o1, sd2, 1e-15), o1, sd2);
    }
    {
        const Complex s = schwarzian_fd(
            [](Complex z) { return (2.0 * z + Complex(0.0, 1.0)) / (z + 3.0); }, Complex(0.3, 0.2), 1e-2);
        check("mobius schwarzian = 0", std::abs(s) < 1e-8, std::abs(s), 0.0);
    }
    {
        const SpherePoint w = tan1.eval(SpherePoint(Complex(std::numbers::pi / 4.0, 0.0)));
        check("tan(pi/4)=1", near(std::abs(w.value() - 1.0), 0.0, 1e-15), w.value().real(), 1.0);
        const SpherePoint p = tan1.eval(SpherePoint(Complex(std::numbers::pi / 2.0, 0.0)));
        check("tan(pi/2)=inf", p.is_infinity(), p.is_infinity() ? 1.0 : 0.0, 1.0);
        const SpherePoint zi = tanpi.eval(SpherePoint(Complex(std::numbers::pi, 0.0)));
        check("pi tan lands exactly on 0", !zi.is_infinity() && zi.value() == Complex(0.0),
              std::abs(zi.value()), 0.0);
    }
    {
        TruncationPolicy pol;
        pol.k_max = 8;
        const PreimageSet ps = tan1.preimages(SpherePoint(Complex(0.0)), pol);
        bool all = ps.branches.size() == 17;
        for (const auto& br : ps.branches) {
            const double k = std::round(br.z.real() / std::numbers::pi);
            all = all && std::abs(br.z - Complex(k * std::numbers::pi, 0.0)) < 1e-12;
        }
        check("preimages of 0 are k pi", all, all ? 1.0 : 0.0, 1.0);
        const PreimageSet pw = tan1.preimages(SpherePoint(Complex(1.0)), pol);
        double base_err = 1.0;
        for (const auto& br : pw.branches)
            base_err = std::min(base_err, std::abs(br.z - Complex(std::numbers::pi / 4.0, 0.0)));
        check("preimages of 1 contain pi/4", base_err < 1e-12, base_err, 0.0);
        const PreimageSet pinf = tan1.preimages(SpherePoint::infinity(), pol);
        double pole_err = 1.0;
        for (const auto& br : pinf.branches)
            pole_err = std::min(pole_err, std::abs(br.z - Complex(std::numbers::pi / 2.0, 0.0)));
        check("preimages of inf are poles", pole_err < 1e-12, pole_err, 0.0);
    }
    {
        const RegimeReport rep = classify_regime(tan1, 60, 1e6);
        check("lambda=1 unsupported", rep.regime == Regime::Unsupported,
              rep.regime == Regime::Unsupported ? 1.0 : 0.0, 1.0);
        const std::vector<TractCell> cells = tract_cells(tan1, Complex(0.0, 1.0), 2, 2, 0.05);
        bool found = false;
        for (const auto& c : cells)
            if (c.n == 0 && c.k == 0) found = c.z.imag() > 0.0;
        check("tract base cell upper half plane", found, found ? 1.0 : 0.0, 1.0);
    }
    {
        TruncationPolicy pol;
        pol.k_max = 64;
        const OperatorEval big_t = transfer_one(tan1, 30.0, SpherePoint(Complex(0.0)), pol);
        check("t->inf single-branch domination", near(big_t.value(), 1.0, 1e-6), big_t.value(), 1.0);
        bool threw = false;
        try {
            transfer_one(tan1, 0.4, SpherePoint(Complex(0.0)), pol);
        } catch (const Error& e) {
            threw = e.code() == "BelowBorelThreshold";
        }
        check("below Borel threshold rejected", threw, threw ? 1.0 : 0.0, 1.0);
    }
    {
        TruncationPolicy pol;
        BeamParams beam;
        beam.beam_width = 500;
        beam.branch_halfwidth = 24;
        beam.workers = ctx.workers;
        const SpherePoint base(Complex(0.65, 0.45));
        const TreeResult tree = backward_orbit_tree(tanpi, 1.2, base, pol, beam, TreeOptions{1, false});
        const OperatorEval direct = transfer_one(tanpi, 1.2, base, pol);
        const double p1 = std::exp(tree.levels[0].log_sum);
        check("depth-1 tree equals transfer_one", near(p1, direct.value(), 1e-6 * direct.value()), p1,
              direct.value());

        const DistortionResult dist = distortion_probe(tanpi, classify_regime(tanpi, 40, 1e6),
                                                       SpherePoint(Complex(1.2, 0.8)), 0.03, 0, 10, ctx.seed);
        check("distortion depth 0 is exactly 1", dist.empirical_K == 1.0, dist.empirical_K, 1.0);
    }
    {
        TruncationPolicy pol;
        BeamParams beam;
        beam.beam_width = 400;
        beam.branch_halfwidth = 24;
        beam.workers = ctx.workers;
        const PoincarePartial part = poincare_partial(tanpi, 1.5, 1, pol, beam);
        const OperatorEval at_inf = transfer_one(tanpi, 1.5, SpherePoint::infinity(), pol);
        const double a1 = std::exp(part.log_terms[0]);
        check("poincare n=1 equals operator at inf", near(a1, at_inf.value(), 1e-6 * at_inf.value()), a1,
              at_inf.value());

        const AtomicMeasure m1 = build_ps_measure(tanpi, 2.1, 1, pol, beam);
        CompensatedSum mass;
        bool on_poles = true;
        for (const Atom& a : m1.atoms()) {
            mass.add(a.weight);
            on_poles = on_poles && tanpi.is_pole(SpherePoint(a.z), 1e-9);
        }
        check("depth-1 measure sits on poles", on_poles, on_poles ? 1.0 : 0.0, 1.0);
        check("measure normalized", near(mass.value(), 1.0, 1e-9), mass.value(), 1.0);
    }
    {
        bool infinite_boundary = finiteness_criterion(1.0, 1.5) == Finiteness::Infinite;
        check("criterion boundary strict", infinite_boundary, infinite_boundary ? 1.0 : 0.0, 1.0);
        check("degP 0 finite", schwarzian_degree_criterion(0) == Finiteness::Finite, 1.0, 1.0);
        check("degP 2 infinite", schwarzian_degree_criterion(2) == Finiteness::Infinite, 1.0, 1.0);
        const LatticeSumResult l1 = lattice_sum_2d(1.0, 64);
        check("2d lattice diverges at s=1", !l1.converges, l1.converges ? 1.0 : 0.0, 0.0);
    }
    {
        const RegimeReport rep = classify_regime(tanpi, 40, 1e6);
        const SpherePoint z(Complex(0.9, 0.35));
        if (in_induced_domain(tanpi, rep, z)) {
            const ReturnResult r1 = induced_return(tanpi, rep, z, 64);
            const ReturnResult r2 = induced_return(tanpi, rep, r1.landing, 64);
            const double lhs = r1.log_deriv + r2.log_deriv;
            const double direct =
                std::log(tanpi.orbit_spherical_derivative(z, r1.tau + r2.tau));
            check("induced returns compose", near(lhs, direct, 1e-9 * std::max(1.0, std::abs(direct))),
                  lhs, direct);
        }
        const LyapunovEstimate ctl = lyapunov_control_orbit(tanpi, SpherePoint(Complex(0.0)), 50);
        check("control orbit chi = log pi", near(ctl.chi, std::log(std::numbers::pi), 1e-12), ctl.chi,
              std::log(std::numbers::pi));
    }
    {
        std::vector<Complex> seg;
        for (int i = 0; i < 2000; ++i) seg.push_back(Complex(i / 2000.0, 0.37));
        std::vector<double> scales{0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1};
        const BoxCountResult seg_box = box_count_points(seg, scales);
        check("segment box dim 1", near(seg_box.slope, 1.0, 0.02), seg_box.slope, 1.0);
        std::vector<Complex> square;
        for (int i = 0; i < 160; ++i)
            for (int j = 0; j < 160; ++j) square.push_back(Complex(i / 160.0, j / 160.0));
        std::vector<double> sq_scales{0.01, 0.02, 0.04, 0.08, 0.16};
        const BoxCountResult sq_box = box_count_points(square, sq_scales);
        check("square box dim 2", near(sq_box.slope, 2.0, 0.02), sq_box.slope, 2.0);
    }
    {
        const MapSpec tanh5 = MapSpec::tangent(Complex(0.5, 0.0));
        const RegimeReport rep = classify_regime(tanh5, 80, 1e6);
        check("lambda=0.5 hyperbolic", rep.regime == Regime::Hyperbolic,
              rep.regime == Regime::Hyperbolic ? 1.0 : 0.0, 1.0);
        const ClassifyResult inner = classify_point(tanh5, rep, SpherePoint(Complex(0.1, 0.0)), 200);
        check("0.1 attracted", inner.cls == PointClass::Fatou, inner.cls == PointClass::Fatou ? 1.0 : 0.0, 1.0);
        const ClassifyResult pole = classify_point(tanh5, rep, SpherePoint(Complex(std::numbers::pi / 2.0, 0.0)), 200);
        check("pole is Julia", pole.cls == PointClass::Julia, pole.cls == PointClass::Julia ? 1.0 : 0.0, 1.0);
        const ClassifyResult tract = classify_point(tanh5, rep, SpherePoint(Complex(0.0, 10.0)), 200);
        check("tract point attracted", tract.cls == PointClass::Fatou,
              tract.cls == PointClass::Fatou ? 1.0 : 0.0, 1.0);

        const RealJuliaRefinement f0 = refine_real_julia(tanh5, -4.8, 4.8, 0);
        const RealJuliaRefinement f3 = refine_real_julia(tanh5, -4.8, 4.8, 3);
        check("refinement length decreasing", f3.total_length < f0.total_length, f3.total_length,
              f0.total_length);

        const UlamResult u1 = ulam_pressure(tanh5, 1.0, 1.1, 1.4, 1, false);
        TruncationPolicy pol;
        pol.k_max = 1;
        pol.radius_cut = 1.45;
        const OperatorEval ref = transfer_one(tanh5, 1.0, SpherePoint(Complex(1.25, 0.0)), pol);
        check("ulam bins=1 matches restricted operator sum",
              near(std::exp(u1.log_eigenvalue), ref.partial, 1e-9), std::exp(u1.log_eigenvalue),
              ref.partial);
    }

    records.push_back(Json{{"kind", "selftest_summary"}, {"failures", failures},
                           {"checks", records.size()}});
    if (failures > 0) throw Error("SelftestFailure", std::to_string(failures) + " selftest checks failed");
    return records;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spherical transfer-operator toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::uint64_t seed = 20240805;
    unsigned workers = 2;

    app.add_option("--config", config_path, "flat key=value config file");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--workers", workers, "worker threads");

    // Shared per-command overrides funneled into the config map.
    std::map<std::string, std::string> overrides;
    const auto add_override = [&](CLI::App* cmd, const std::string& key, const std::string& help) {
        cmd->add_option_function<std::string>(
            "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
    };

    std::vector<std::string> commands = {"classify", "pressure",  "dimension", "poincare",
                                         "measure",  "conformality", "criterion", "martens",
                                         "lyapunov", "raster",    "sweep",     "selftest"};
    static const std::vector<std::string> keys = {
        "family", "lambda", "lambda_re", "lambda_im", "a", "b", "c", "d",
        "orbit_len", "escape_box", "t", "t_grid", "depth", "base", "n_max",
        "method", "bisect_tol", "bins", "ulam_lo", "ulam_hi",
        "s", "measure_out", "radii", "measure", "h_test", "cells", "cell_radius",
        "rho", "h", "degp", "cell_a", "cell_a0", "orbits", "returns", "control", "control_point",
        "mode", "region", "nx", "ny", "max_iter", "pgm", "csv", "scales", "window_lo", "window_hi",
        "param", "values", "run",
        "k_max", "radius_cut", "rel_tail_tol", "asym_tol",
        "beam_width", "branch_halfwidth", "beam_rel_tol"};
    for (const std::string& name : commands) {
        CLI::App* cmd = app.add_subcommand(name);
        for (const std::string& key : keys) add_override(cmd, key, "");
    }

    CLI11_PARSE(app, argc, argv);

    RunContext ctx;
    try {
        if (!config_path.empty()) ctx.cfg = load_config(config_path);
        for (const auto& [k, v] : overrides) ctx.cfg.set(k, v);
        ctx.out_dir = out_dir;
        ctx.seed = seed;
        ctx.workers = std::max(1u, workers);
        return dispatch(app.get_subcommands().front()->get_name(), ctx);
    } catch (const Error& e) {
        std::cerr << (e.code() == "ConfigError" ? "config error: " : "error: ") << e.what() << "\n";
        return e.code() == "ConfigError" ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
}
