#include "merodim/poincare.hpp"

#include "merodim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

namespace merodim {

PoincarePartial poincare_partial(const MapSpec& f, double t, int n_max,
                                 const TruncationPolicy& policy, const BeamParams& beam) {
    if (n_max < 1) throw Error("InvalidArgument", "n_max must be >= 1");
    const double rho = f.order();
    if (t < rho / (rho + 1.0) + kBorelMargin - 1e-9)
        throw Error("BelowBorelThreshold", "t at or below rho/(rho+1) + margin");

    TreeOptions opt;
    opt.depth = n_max;
    const TreeResult tree = backward_orbit_tree(f, t, SpherePoint::infinity(), policy, beam, opt);

    PoincarePartial out;
    out.t = t;
    out.discard_share = tree.total_discard_share;
    std::vector<double> acc;
    for (const TreeLevel& lvl : tree.levels) {
        out.log_terms.push_back(lvl.log_sum);
        acc.push_back(lvl.log_sum);
        out.log_partials.push_back(log_sum_exp(acc));
    }
    return out;
}

SeriesDiagnostics classify_log_terms(std::span<const double> log_terms, double sigma) {
    SeriesDiagnostics diag;
    diag.sigma = sigma;
    const std::size_t n = log_terms.size();
    if (n < 3) throw Error("InvalidArgument", "need at least 3 terms to classify");

    if (n >= 64) {
        // Dyadic block-sum ratio (S_N - S_{N/2}) / (S_{N/2} - S_{N/4}):
        // below 1 for convergent power tails, above 1 for divergent ones.
        const std::size_t q4 = n / 4, q2 = n / 2;
        std::vector<double> b1(log_terms.begin() + q4, log_terms.begin() + q2);
        std::vector<double> b2(log_terms.begin() + q2, log_terms.end());
        const double r = std::exp(log_sum_exp(std::move(b2)) - log_sum_exp(std::move(b1)));
        diag.fitted_ratio = r;
        const double sb = std::max(0.01, sigma / 5.0);
        diag.cls = r < 1.0 - sb ? SeriesClass::Convergent
                                : (r > 1.0 + sb ? SeriesClass::Divergent : SeriesClass::Inconclusive);
        return diag;
    }

    // Geometric fit of the terms over the last half of the stream.
    const std::size_t start = n / 2 >= 1 ? n / 2 - 1 : 0;
    std::vector<double> xs, ys;
    for (std::size_t i = start; i < n; ++i) {
        xs.push_back(static_cast<double>(i + 1));
        ys.push_back(log_terms[i]);
    }
    const LineFit fit = fit_line(xs, ys);
    diag.fitted_ratio = std::exp(fit.slope);
    diag.cls = diag.fitted_ratio < 1.0 - sigma
                   ? SeriesClass::Convergent
                   : (diag.fitted_ratio > 1.0 + sigma ? SeriesClass::Divergent : SeriesClass::Inconclusive);
    return diag;
}

ExponentEstimate estimate_h(const MapSpec& f, const RegimeReport& regime,
                            std::span<const double> t_grid, int n_max,
                            const TruncationPolicy& policy, const BeamParams& beam) {
    const double rho = f.order();
    const double borel = rho / (rho + 1.0);
    std::vector<double> grid(t_grid.begin(), t_grid.end());
    std::sort(grid.begin(), grid.end());
    if (grid.empty() || grid.front() < borel + kBorelMargin - 1e-9 || grid.back() > 2.0 + 1e-12)
        throw Error("InvalidArgument", "t grid must lie in (rho/(rho+1), 2]");

    ExponentEstimate est;
    constexpr double kSigma = 0.05;
    std::vector<SeriesClass> cls;
    for (double t : grid) {
        const PoincarePartial part = poincare_partial(f, t, n_max, policy, beam);
        const SeriesDiagnostics d = classify_log_terms(part.log_terms, kSigma);
        est.diagnostics.push_back({t, d.cls, d.fitted_ratio});
        cls.push_back(d.cls);
    }

    int last_div = -1, first_conv = -1;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (cls[i] == SeriesClass::Divergent) last_div = static_cast<int>(i);
        if (cls[i] == SeriesClass::Convergent && first_conv < 0) first_conv = static_cast<int>(i);
    }
    if (first_conv >= 0 && last_div > first_conv)
        throw Error("InconclusiveRatio", "classification is not monotone across the grid");
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        if (cls[i] == SeriesClass::Inconclusive && cls[i + 1] == SeriesClass::Inconclusive)
            throw Error("InconclusiveRatio",
                        "adjacent inconclusive ratios; refine the grid between " +
                            std::to_string(grid[i]) + " and " + std::to_string(grid[i + 1]));
    }

    const double low = last_div >= 0 ? grid[static_cast<std::size_t>(last_div)] : borel + kBorelMargin;
    const double high = first_conv >= 0 ? grid[static_cast<std::size_t>(first_conv)] : 2.0;
    est.bracket = {low, high};
    est.h = 0.5 * (low + high);
    est.method = "PoincareCutoff";

    if (regime.regime == Regime::SubExpanding) {
        const double lower_bound = 2.0 * rho / (rho + 1.0);
        if (est.bracket.first < lower_bound - 1e-9) est.inconsistent_regime = true;
    }
    return est;
}

// ---------------------------------------------------------------------------
// Atomic measure
// ---------------------------------------------------------------------------

namespace {

// Sphere-embedding spatial hash for chordal-distance merging.
struct SphereKey {
    long x, y, z;
    bool operator<(const SphereKey& o) const { return std::tie(x, y, z) < std::tie(o.x, o.y, o.z); }
};

SphereKey embed_key(const Complex& p, double cell) {
    const double n2 = std::norm(p);
    const double den = 1.0 + n2;
    const double X = 2.0 * p.real() / den, Y = 2.0 * p.imag() / den, Z = (n2 - 1.0) / den;
    return {static_cast<long>(std::floor(X / cell)), static_cast<long>(std::floor(Y / cell)),
            static_cast<long>(std::floor(Z / cell))};
}

}  // namespace

AtomicMeasure::AtomicMeasure(std::vector<Atom> atoms, double s, double normalization, int depth_max,
                             double discarded_mass_bound)
    : atoms_(std::move(atoms)), s_(s), z_(normalization), depth_max_(depth_max),
      discarded_(discarded_mass_bound) {}

double AtomicMeasure::mass_above_radius(double r) const {
    CompensatedSum acc;
    for (const Atom& a : atoms_)
        if (std::abs(a.z) > r) acc.add(a.weight);
    return acc.value();
}

double AtomicMeasure::mass_in_disk(const Complex& center, double radius) const {
    CompensatedSum acc;
    const SpherePoint c(center);
    for (const Atom& a : atoms_)
        if (chordal_dist(SpherePoint(a.z), c) <= radius) acc.add(a.weight);
    return acc.value();
}

void AtomicMeasure::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("IoError", "cannot open " + path + " for writing");
    char buf[256];
    os << "# merodim-atoms v1\n";
    std::snprintf(buf, sizeof buf, "# s=%.17g Z=%.17g depth_max=%d discarded=%.17g\n", s_, z_,
                  depth_max_, discarded_);
    os << buf;
    os << "# columns: re im weight depth\n";
    for (const Atom& a : atoms_) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %d\n", a.z.real(), a.z.imag(), a.weight,
                      a.depth);
        os << buf;
    }
}

AtomicMeasure AtomicMeasure::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("IoError", "cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line.rfind("# merodim-atoms v1", 0) != 0)
        throw Error("IoError", "unrecognized atom file header in " + path);
    double s = 0.0, z = 1.0, disc = 0.0;
    int depth_max = 0;
    if (!std::getline(is, line) ||
        std::sscanf(line.c_str(), "# s=%lg Z=%lg depth_max=%d discarded=%lg", &s, &z, &depth_max,
                    &disc) != 4)
        throw Error("IoError", "bad atom file metadata line");
    std::getline(is, line);  // column header
    std::vector<Atom> atoms;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        double re, im, w;
        int d;
        if (std::sscanf(line.c_str(), "%lg %lg %lg %d", &re, &im, &w, &d) != 4)
            throw Error("IoError", "bad atom line: " + line);
        atoms.push_back({Complex(re, im), w, d});
    }
    return AtomicMeasure(std::move(atoms), s, z, depth_max, disc);
}

AtomicMeasure build_ps_measure(const MapSpec& f, double s, int depth_max,
                               const TruncationPolicy& policy, const BeamParams& beam,
                               const std::pair<double, double>* h_bracket) {
    if (depth_max < 1) throw Error("InvalidArgument", "depth_max must be >= 1");
    if (h_bracket && s < h_bracket->second + 0.02 - 1e-12)
        throw Error("SubcriticalExponent",
                    "s must exceed the h bracket top by the supercritical offset 0.02");

    TreeOptions opt;
    opt.depth = depth_max;
    opt.collect_atoms = true;
    const TreeResult tree = backward_orbit_tree(f, s, SpherePoint::infinity(), policy, beam, opt);

    // Atoms arrive in canonical order (depth, then lexicographic branch
    // path); merge near-coincident points on the sphere embedding.
    std::vector<Atom> atoms;
    atoms.reserve(tree.atoms.size());
    constexpr double kMergeTol = 1e-9;
    std::map<SphereKey, std::vector<std::size_t>> buckets;
    for (const TreeAtomRec& rec : tree.atoms) {
        const Complex z = rec.z;
        bool merged = false;
        const SphereKey key = embed_key(z, 4.0 * kMergeTol);
        for (long dx = -1; dx <= 1 && !merged; ++dx)
            for (long dy = -1; dy <= 1 && !merged; ++dy)
                for (long dz = -1; dz <= 1 && !merged; ++dz) {
                    const auto it = buckets.find({key.x + dx, key.y + dy, key.z + dz});
                    if (it == buckets.end()) continue;
                    for (std::size_t idx : it->second) {
                        if (chordal_dist(SpherePoint(atoms[idx].z), SpherePoint(z)) < kMergeTol) {
                            atoms[idx].weight += std::exp(rec.log_weight);
                            merged = true;
                            break;
                        }
                    }
                }
        if (!merged) {
            atoms.push_back({z, std::exp(rec.log_weight), rec.depth});
            buckets[key].push_back(atoms.size() - 1);
        }
    }
    if (atoms.empty()) throw Error("EmptyTruncation", "no atoms survived the tree");

    // Unnormalized masses are exp(log_weight); normalize and record the
    // truncation debt: pruned/lumped mass plus the depth tail estimated
    // from the fitted level ratio.
    std::vector<double> lws;
    for (const Atom& a : atoms) lws.push_back(std::log(a.weight));
    const double log_z = log_sum_exp(std::move(lws));
    const double z_norm = std::exp(log_z);
    CompensatedSum total;
    for (Atom& a : atoms) {
        a.weight = std::exp(std::log(a.weight) - log_z);
        total.add(a.weight);
    }
    const double fix = total.value();
    for (Atom& a : atoms) a.weight /= fix;

    double depth_tail = 0.0;
    if (tree.levels.size() >= 2) {
        const double r = std::exp(tree.levels.back().log_sum - tree.levels[tree.levels.size() - 2].log_sum);
        if (r < 0.95) {
            const double last_mass = std::exp(tree.levels.back().log_sum - log_z);
            depth_tail = last_mass * r / (1.0 - r);
        } else {
            depth_tail = std::exp(tree.levels.back().log_sum - log_z);
        }
    }
    const double discarded = tree.total_discard_share + depth_tail;
    return AtomicMeasure(std::move(atoms), s, z_norm, depth_max, discarded);
}

// ---------------------------------------------------------------------------
// Conformality
// ---------------------------------------------------------------------------

namespace {

// Nearest branch index of the fiber over y to the cell center.
int nearest_branch_index(const PreimageLattice& lat, const Complex& center) {
    const Complex d = center - lat.base;
    const double along = (d.real() * lat.step.real() + d.imag() * lat.step.imag()) / std::norm(lat.step);
    return static_cast<int>(std::lround(along));
}

ConformalityReport finish_report(std::vector<CellRatio> cells, double h_test) {
    ConformalityReport rep;
    rep.cells = std::move(cells);
    rep.h_test = h_test;
    std::vector<double> xs, ys;
    for (const CellRatio& c : rep.cells) {
        if (c.ratio <= 0.0) continue;
        rep.summary_c = std::max(rep.summary_c, std::max(c.ratio, 1.0 / c.ratio));
        xs.push_back(c.mean_log_deriv);
        ys.push_back(std::log(c.ratio));
    }
    if (xs.size() >= 3) {
        const LineFit fit = fit_line(xs, ys);
        rep.drift_slope = fit.slope;
        rep.drift_r2 = fit.r2;
    }
    rep.non_conformal =
        rep.summary_c > 3.0 || (std::abs(rep.drift_slope) > 0.3 && rep.drift_r2 > 0.5);
    return rep;
}

}  // namespace

ConformalityReport conformality_check(const MapSpec& f, const AtomicMeasure& m,
                                      std::span<const ChordalDisk> cells, double h_test) {
    std::vector<CellRatio> out;
    for (const ChordalDisk& cell : cells) {
        const SpherePoint center(cell.center);
        // Injectivity via branch separation: the euclidean footprint must
        // stay below the fiber period and exactly one preimage branch of
        // f(center) may sit inside the cell.
        const double euclid_span = 2.0 * cell.radius * (1.0 + std::norm(cell.center));
        if (euclid_span >= 3.0)
            throw Error("NotInjectiveOnCell", "cell footprint spans more than one fiber period");
        const SpherePoint fc = f.eval(center);
        if (!fc.is_infinity()) {
            const PreimageLattice lat = f.preimage_lattice(fc, 0.0);
            int inside = 0;
            const int k0 = nearest_branch_index(lat, cell.center);
            for (int k = k0 - 2; k <= k0 + 2; ++k) {
                const Complex z = lat.base + static_cast<double>(k) * lat.step;
                if (chordal_dist(SpherePoint(z), center) <= cell.radius) ++inside;
            }
            if (inside != 1)
                throw Error("NotInjectiveOnCell", "preimage branch separation failed for a cell");
        }

        CellRatio cr;
        cr.cell = cell;
        CompensatedSum flux_in, mass_in, log_deriv, mass_image;
        for (const Atom& a : m.atoms()) {
            if (chordal_dist(SpherePoint(a.z), center) <= cell.radius) {
                const double sph = f.spherical_derivative(SpherePoint(a.z));
                flux_in.add(a.weight * std::pow(sph, h_test));
                mass_in.add(a.weight);
                log_deriv.add(a.weight * std::log(sph));
                ++cr.atoms_in;
            }
        }
        if (cr.atoms_in < 50) throw Error("CellTooThin", "cell holds fewer than 50 atoms");

        // m(f(E)): atoms y whose unique branch over the cell lands in E.
        for (const Atom& a : m.atoms()) {
            PreimageLattice lat;
            try {
                lat = f.preimage_lattice(SpherePoint(a.z), 0.0);
            } catch (const Error&) {
                continue;
            }
            const int k0 = nearest_branch_index(lat, cell.center);
            for (int k = k0 - 1; k <= k0 + 1; ++k) {
                const Complex z = lat.base + static_cast<double>(k) * lat.step;
                if (chordal_dist(SpherePoint(z), center) <= cell.radius) {
                    mass_image.add(a.weight);
                    break;
                }
            }
        }
        cr.mass_in = mass_in.value();
        cr.mass_image = mass_image.value();
        cr.mean_log_deriv = cr.mass_in > 0.0 ? log_deriv.value() / cr.mass_in : 0.0;
        cr.ratio = flux_in.value() > 0.0 ? cr.mass_image / flux_in.value() : 0.0;
        out.push_back(cr);
    }
    return finish_report(std::move(out), h_test);
}

ConformalityReport conformality_identity_control(const AtomicMeasure& m,
                                                 std::span<const ChordalDisk> cells) {
    std::vector<CellRatio> out;
    for (const ChordalDisk& cell : cells) {
        CellRatio cr;
        cr.cell = cell;
        CompensatedSum mass;
        for (const Atom& a : m.atoms()) {
            if (chordal_dist(SpherePoint(a.z), SpherePoint(cell.center)) <= cell.radius) {
                mass.add(a.weight);
                ++cr.atoms_in;
            }
        }
        cr.mass_in = cr.mass_image = mass.value();
        // Identity transport: m(E) against the unit-derivative flux.
        cr.ratio = cr.mass_in > 0.0 ? 1.0 : 0.0;
        out.push_back(cr);
    }
    return finish_report(std::move(out), 0.0);
}

std::vector<ChordalDisk> default_conformality_cells(const MapSpec& f, const AtomicMeasure& m,
                                                    const RegimeReport& regime, int count,
                                                    double radius, int min_atoms) {
    // Median depth atoms as candidate centers.
    std::vector<int> depths;
    for (const Atom& a : m.atoms()) depths.push_back(a.depth);
    std::vector<int> sorted = depths;
    std::sort(sorted.begin(), sorted.end());
    const int med = sorted[sorted.size() / 2];

    std::vector<Complex> obstacles = regime.postsingular_prefix;
    for (const Complex& a : f.asymptotic_values()) obstacles.push_back(a);
    const double T = std::max(regime.safety_radius, 1e-3);

    std::vector<ChordalDisk> cells;
    for (std::size_t i = 0; i < m.atoms().size() && cells.size() < static_cast<std::size_t>(count); ++i) {
        if (depths[i] != med) continue;
        const Complex c = m.atoms()[i].z;
        if (2.0 * radius * (1.0 + std::norm(c)) >= 3.0) continue;  // injectivity footprint
        bool ok = true;
        for (const Complex& o : obstacles) {
            if (chordal_dist(SpherePoint(c), SpherePoint(o)) < T + radius) { ok = false; break; }
        }
        for (const ChordalDisk& prev : cells) {
            if (chordal_dist(SpherePoint(c), SpherePoint(prev.center)) < 2.2 * radius) { ok = false; break; }
        }
        if (!ok) continue;
        int inside = 0;
        for (const Atom& a : m.atoms())
            if (chordal_dist(SpherePoint(a.z), SpherePoint(c)) <= radius) ++inside;
        if (inside < min_atoms) continue;
        try {
            const SpherePoint fc = f.eval(SpherePoint(c));
            if (!fc.is_infinity()) {
                const PreimageLattice lat = f.preimage_lattice(fc, 0.0);
                int branches_in = 0;
                const int k0 = nearest_branch_index(lat, c);
                for (int k = k0 - 2; k <= k0 + 2; ++k) {
                    const Complex z = lat.base + static_cast<double>(k) * lat.step;
                    if (chordal_dist(SpherePoint(z), SpherePoint(c)) <= radius) ++branches_in;
                }
                if (branches_in != 1) continue;
            }
        } catch (const Error&) {
            continue;
        }
        cells.push_back({c, radius});
    }
    return cells;
}

TightnessProfile tightness_profile(const AtomicMeasure& m, std::span<const double> radii) {
    TightnessProfile prof;
    prof.radii.assign(radii.begin(), radii.end());
    std::sort(prof.radii.begin(), prof.radii.end());
    std::vector<double> xs, ys;
    for (double r : prof.radii) {
        const double mass = m.mass_above_radius(r);
        prof.masses.push_back(mass);
        if (mass > 1e-14 && r > 0.0) {
            xs.push_back(std::log(r));
            ys.push_back(std::log(mass));
        }
    }
    if (xs.size() >= 3) {
        const LineFit fit = fit_line(xs, ys);
        prof.fitted_exponent = fit.slope;
        prof.r2 = fit.r2;
    }
    return prof;
}

}  // namespace merodim
