#include "merodim/invariant.hpp"

#include "merodim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace merodim {

Finiteness finiteness_criterion(double rho, double h) {
    if (!(rho > 0.0)) throw Error("OutOfRange", "rho must be positive");
    if (!(h > rho / (rho + 1.0) && h <= 2.0 + 1e-12))
        throw Error("OutOfRange", "h must lie in (rho/(rho+1), 2]");
    return h > 3.0 * rho / (rho + 1.0) ? Finiteness::Finite : Finiteness::Infinite;
}

Finiteness schwarzian_degree_criterion(int deg_p) {
    if (deg_p < 0) throw Error("OutOfRange", "deg P must be nonnegative");
    return (deg_p == 0 || deg_p == 1) ? Finiteness::Finite : Finiteness::Infinite;
}

namespace {

// int_0^inf (1+u^2)^(-s) du = sqrt(pi)/2 * Gamma(s-1/2)/Gamma(s).
double half_line_constant(double s) {
    return 0.5 * std::sqrt(std::numbers::pi) *
           std::exp(std::lgamma(s - 0.5) - std::lgamma(s));
}

// One row sum_{k>=1} weight * (n^2+k^2)^(-s) as value/bracket via the
// shared lattice tail with k_start = 1 plus the direct head.
struct RowSum {
    double low, high, mid;
};

RowSum row_sum(double n, double s, long k_direct) {
    CompensatedSum head;
    for (long k = 1; k <= k_direct; ++k) head.add(std::pow(n * n + static_cast<double>(k) * k, -s));
    const LatticeTail tail =
        lattice_tail_one_side(1.0, 0.0, n * n, s, static_cast<int>(k_direct) + 1);
    const double h = head.value();
    return {h + tail.low, h + tail.high, h + tail.mid};
}

LatticeSumResult lattice_sum_core(double s, long n_cap, bool triple) {
    // triple: row weight N; plain: weight 1. Convergence thresholds 3/2 and 1.
    LatticeSumResult res;
    res.converges = triple ? s > 1.5 : s > 1.0;
    if (!res.converges) {
        res.value = res.bracket_low = res.bracket_high = std::numeric_limits<double>::infinity();
        return res;
    }
    if (n_cap < 4) throw Error("InvalidArgument", "n_cap too small");

    CompensatedSum lo_acc, hi_acc, mid_acc;
    const long k_direct = std::min<long>(n_cap, 384);
    for (long n = 1; n <= n_cap; ++n) {
        const double wn = triple ? static_cast<double>(n) : 1.0;
        const RowSum row = row_sum(static_cast<double>(n), s, k_direct);
        lo_acc.add(wn * row.low);
        hi_acc.add(wn * row.high);
        mid_acc.add(wn * row.mid);
    }

    // Outer tail beyond n_cap: rows bounded by the half-line integral
    // c_s n^{1-2s} plus the first term, with the integral test in n.
    const double cs = half_line_constant(s);
    const double outer_exp = (triple ? 2.0 : 1.0) - 2.0 * s;  // exponent of n in the row weight
    // Upper: sum_{n>N} w_n [c_s n^{1-2s} + (n^2+1)^{-s}]
    //      <= sum_{n>N} (c_s + 1) n^{outer_exp}
    // Lower: sum_{n>N} w_n [c_s n^{1-2s} - n^{-2s}] >= sum (c_s - 1/N) n^{outer_exp}.
    const double N = static_cast<double>(n_cap);
    const double p = -outer_exp;  // p > 1 when convergent
    const double tail_elem_hi = std::pow(N, 1.0 - p) / (p - 1.0) + std::pow(N + 1.0, -p);
    const double tail_elem_lo = std::pow(N + 1.0, 1.0 - p) / (p - 1.0);
    res.bracket_low = lo_acc.value() + std::max(0.0, (cs - 1.0 / N)) * tail_elem_lo;
    res.bracket_high = hi_acc.value() + (cs + 1.0) * tail_elem_hi;
    res.value = std::clamp(mid_acc.value() + cs * 0.5 * (tail_elem_lo + tail_elem_hi),
                           res.bracket_low, res.bracket_high);
    return res;
}

}  // namespace

LatticeSumResult lattice_sum_2d(double s, long n_cap) {
    if (!(s > 0.0)) throw Error("InvalidArgument", "s must be positive");
    return lattice_sum_core(s, n_cap, false);
}

LatticeSumResult lattice_sum_triple(double s, long n_cap) {
    if (!(s > 0.0)) throw Error("InvalidArgument", "s must be positive");
    return lattice_sum_core(s, n_cap, true);
}

// ---------------------------------------------------------------------------
// Martens ratios
// ---------------------------------------------------------------------------

MartensEstimate martens_ratio(const MapSpec& f, const AtomicMeasure& m, const RegimeReport& regime,
                              const ChordalDisk& cell_a, const ChordalDisk& cell_a0, int n_max) {
    if (m.atoms().size() < 10000)
        throw Error("InsufficientAtoms", "the Martens estimator needs at least 10^4 atoms");
    std::vector<Complex> obstacles = regime.postsingular_prefix;
    for (const Complex& a : f.asymptotic_values()) obstacles.push_back(a);
    const double T = regime.safety_radius;
    for (const ChordalDisk& cell : {cell_a, cell_a0}) {
        for (const Complex& o : obstacles) {
            if (chordal_dist(SpherePoint(cell.center), SpherePoint(o)) <= T + cell.radius)
                throw Error("CellTooCloseToSingular", "cell meets B(A_f u P_f, T)");
        }
    }

    MartensEstimate est;
    est.cell_a = cell_a;
    est.cell_a0 = cell_a0;
    std::vector<CompensatedSum> acc_a(static_cast<std::size_t>(n_max) + 1);
    std::vector<CompensatedSum> acc_a0(static_cast<std::size_t>(n_max) + 1);

    const SpherePoint ca(cell_a.center), ca0(cell_a0.center);
    for (const Atom& atom : m.atoms()) {
        SpherePoint z(atom.z);
        for (int k = 0; k <= n_max; ++k) {
            if (z.is_infinity()) break;
            if (chordal_dist(z, ca) <= cell_a.radius) acc_a[static_cast<std::size_t>(k)].add(atom.weight);
            if (chordal_dist(z, ca0) <= cell_a0.radius)
                acc_a0[static_cast<std::size_t>(k)].add(atom.weight);
            if (k < n_max) {
                try {
                    z = f.eval(z);
                } catch (const Error&) {
                    break;
                }
            }
        }
    }

    CompensatedSum cum_a, cum_a0;
    for (int k = 0; k <= n_max; ++k) {
        est.mass_a.push_back(acc_a[static_cast<std::size_t>(k)].value());
        est.mass_a0.push_back(acc_a0[static_cast<std::size_t>(k)].value());
        cum_a.add(est.mass_a.back());
        cum_a0.add(est.mass_a0.back());
        if (cum_a0.value() > 0.0) {
            est.ratios.push_back(cum_a.value() / cum_a0.value());
            CompensatedSum mean;
            for (double r : est.ratios) mean.add(r);
            est.cesaro.push_back(mean.value() / static_cast<double>(est.ratios.size()));
        }
    }
    if (std::accumulate(est.mass_a.begin(), est.mass_a.end(), 0.0) == 0.0)
        throw Error("EmptyCell", "no transported mass ever lands in A");
    if (est.ratios.empty()) throw Error("EmptyCell", "no transported mass ever lands in A0");

    est.limit = est.cesaro.back();
    double spread = 0.0;
    const std::size_t half = est.cesaro.size() / 2;
    for (std::size_t i = half; i < est.cesaro.size(); ++i)
        spread = std::max(spread, std::abs(est.cesaro[i] - est.limit));
    est.error_bar = spread;
    return est;
}

GammaDecayResult gamma_decay_probe(const MapSpec& f, const AtomicMeasure& m,
                                   const NestedDomainSpec& spec, int n_max) {
    if (spec.centers.empty() || spec.radius <= 0.0)
        throw Error("InvalidArgument", "nested-domain spec needs centers and a positive radius");
    if (spec.iterate_power < 1) throw Error("InvalidArgument", "iterate power must be >= 1");

    const auto in_omega0 = [&](const SpherePoint& z) {
        if (z.is_infinity()) return false;
        for (const Complex& c : spec.centers)
            if (chordal_dist(z, SpherePoint(c)) <= spec.radius) return true;
        return false;
    };

    GammaDecayResult res;
    res.masses.assign(static_cast<std::size_t>(n_max) + 1, 0.0);
    res.atom_counts.assign(static_cast<std::size_t>(n_max) + 1, 0);
    std::vector<CompensatedSum> acc(static_cast<std::size_t>(n_max) + 1);

    for (const Atom& atom : m.atoms()) {
        SpherePoint z(atom.z);
        if (!in_omega0(z)) continue;
        // Exit time of the g = f^p orbit from Omega_0.
        int exit = -1;
        for (int j = 1; j <= n_max + 1; ++j) {
            bool dead = false;
            for (int step = 0; step < spec.iterate_power; ++step) {
                if (z.is_infinity()) { dead = true; break; }
                try {
                    z = f.eval(z);
                } catch (const Error&) {
                    dead = true;
                    break;
                }
            }
            if (dead || !in_omega0(z)) { exit = j; break; }
        }
        if (exit >= 1 && exit - 1 <= n_max) {
            acc[static_cast<std::size_t>(exit - 1)].add(atom.weight);
            res.atom_counts[static_cast<std::size_t>(exit - 1)] += 1;
        }
    }
    for (int n = 0; n <= n_max; ++n) res.masses[static_cast<std::size_t>(n)] = acc[static_cast<std::size_t>(n)].value();

    std::vector<double> xs, ys;
    for (int n = 0; n <= n_max; ++n) {
        if (res.atom_counts[static_cast<std::size_t>(n)] >= 30 && res.masses[static_cast<std::size_t>(n)] > 0.0) {
            xs.push_back(static_cast<double>(n));
            ys.push_back(std::log(res.masses[static_cast<std::size_t>(n)]));
        }
    }
    if (xs.size() < 3)
        throw Error("InsufficientAtoms", "fewer than 3 annuli hold the 30-atom minimum");
    const LineFit fit = fit_line(xs, ys);
    res.gamma_fit = std::exp(fit.slope);
    res.r2 = fit.r2;
    res.n_used = static_cast<int>(xs.size());
    return res;
}

// ---------------------------------------------------------------------------
// Induced map
// ---------------------------------------------------------------------------

bool in_induced_domain(const MapSpec& f, const RegimeReport& regime, const SpherePoint& z) {
    if (z.is_infinity()) return false;
    const double T = regime.safety_radius;
    for (const Complex& p : regime.postsingular_prefix)
        if (chordal_dist(z, SpherePoint(p)) <= T) return false;
    SpherePoint image;
    try {
        image = f.eval(z);
    } catch (const Error&) {
        return false;
    }
    for (const Complex& a : f.asymptotic_values()) {
        try {
            const SpherePoint fa = f.eval(SpherePoint(a));
            if (chordal_dist(image, fa) <= T) return false;
        } catch (const Error&) {
            continue;
        }
    }
    return true;
}

ReturnResult induced_return(const MapSpec& f, const RegimeReport& regime, const SpherePoint& z,
                            int max_steps) {
    if (!in_induced_domain(f, regime, z))
        throw Error("InvalidArgument", "starting point is outside the induced domain X");
    SpherePoint w = z;
    double log_deriv = 0.0;
    for (int step = 1; step <= max_steps; ++step) {
        log_deriv += std::log(f.spherical_derivative(w));
        w = f.eval(w);
        if (w.is_infinity()) throw Error("LeftDomain", "orbit hit a pole exactly");
        if (in_induced_domain(f, regime, w)) return {step, w, log_deriv};
    }
    throw Error("NoReturnWithin", "no return to X within " + std::to_string(max_steps) + " steps");
}

LyapunovEstimate lyapunov_induced(const MapSpec& f, const RegimeReport& regime,
                                  const AtomicMeasure& m, int n_orbits, int len,
                                  std::uint64_t seed) {
    if (regime.regime != Regime::SubExpanding)
        throw Error("UnsupportedRegime", "the induced Lyapunov estimator is gated to sub-expanding maps");
    if (n_orbits < 1 || len < 1) throw Error("InvalidArgument", "need orbits and returns");

    // Cumulative weights for seeded multinomial sampling.
    std::vector<double> cum;
    cum.reserve(m.atoms().size());
    double run = 0.0;
    for (const Atom& a : m.atoms()) {
        run += a.weight;
        cum.push_back(run);
    }

    LyapunovEstimate est;
    est.orbits_requested = n_orbits;
    std::vector<double> per_orbit;
    constexpr int kMaxReturnSteps = 64;

    for (int oi = 0; oi < n_orbits; ++oi) {
        std::mt19937_64 gen(task_seed(seed, static_cast<std::uint64_t>(oi)));
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        SpherePoint z;
        bool found = false;
        for (int attempt = 0; attempt < 256 && !found; ++attempt) {
            const double u = unif(gen) * run;
            const std::size_t idx = static_cast<std::size_t>(
                std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
            const Complex base = m.atoms()[std::min(idx, m.atoms().size() - 1)].z;
            // Chordal jitter of 1e-8 so the exact preimages of infinity do
            // not terminate the forward orbit at their own depth.
            const double span = 1e-8 * (1.0 + std::norm(base));
            const Complex cand = base + std::polar(span * std::sqrt(unif(gen)),
                                                   2.0 * std::numbers::pi * unif(gen));
            if (in_induced_domain(f, regime, SpherePoint(cand))) {
                z = SpherePoint(cand);
                found = true;
            }
        }
        if (!found) continue;

        double log_sum = 0.0;
        int returns = 0;
        try {
            for (; returns < len; ++returns) {
                const ReturnResult r = induced_return(f, regime, z, kMaxReturnSteps);
                log_sum += r.log_deriv;
                est.tau_histogram[r.tau] += 1;
                z = r.landing;
            }
        } catch (const Error&) {
            continue;  // orbit lost: hit a pole or failed to return
        }
        per_orbit.push_back(log_sum / static_cast<double>(len));
        est.orbits_completed += 1;
    }

    if (2 * est.orbits_completed < n_orbits)
        throw Error("TooFewSurvivingOrbits", "fewer than half of the induced orbits completed");
    CompensatedSum mean_acc;
    for (double v : per_orbit) mean_acc.add(v);
    est.chi = mean_acc.value() / static_cast<double>(per_orbit.size());
    CompensatedSum var_acc;
    for (double v : per_orbit) var_acc.add((v - est.chi) * (v - est.chi));
    const double var = var_acc.value() / std::max<std::size_t>(1, per_orbit.size() - 1);
    est.std_err = std::sqrt(var / static_cast<double>(per_orbit.size()));
    return est;
}

LyapunovEstimate lyapunov_control_orbit(const MapSpec& f, const SpherePoint& z0, int len) {
    LyapunovEstimate est;
    est.orbits_requested = 1;
    SpherePoint z = z0;
    CompensatedSum acc;
    for (int i = 0; i < len; ++i) {
        acc.add(std::log(f.spherical_derivative(z)));
        est.tau_histogram[1] += 1;
        z = f.eval(z);
        if (z.is_infinity()) throw Error("LeftDomain", "control orbit hit a pole exactly");
    }
    est.chi = acc.value() / static_cast<double>(len);
    est.orbits_completed = 1;
    return est;
}

}  // namespace merodim
