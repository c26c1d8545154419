#include "merodim/bowen.hpp"

#include "merodim/numerics.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace merodim {

void validate_dimension_estimate(const DimensionEstimate& est, double rho) {
    const double lo = rho / (rho + 1.0);
    if (!(est.h > lo && est.h <= 2.0 + 1e-12) || !(est.bracket.first < est.bracket.second + 1e-15) ||
        est.h < est.bracket.first - 1e-12 || est.h > est.bracket.second + 1e-12)
        throw Error("DimensionOutOfRange", "estimate violates rho/(rho+1) < h <= 2 or its bracket");
}

DimensionEstimate pressure_root(const MapSpec& f, const RegimeReport& regime,
                                const TruncationPolicy& policy, const BeamParams& beam, int depth,
                                double bisect_tol) {
    if (regime.regime == Regime::Unsupported)
        throw Error("UnsupportedRegime", "pressure root needs a hyperbolic or sub-expanding map");
    const double rho = f.order();
    const SpherePoint base = default_base_point(f, regime);

    const auto eval_p = [&](double t) { return pressure_estimate(f, t, base, depth, policy, beam); };

    DimensionEstimate est;
    est.method = "PressureRoot";
    est.map_label = f.label();

    double a = rho / (rho + 1.0) + 0.02;
    double b = 2.0;

    const PressureEstimate top = eval_p(b);
    if (top.extrapolated > top.error_bar) {
        // Positive pressure across the whole admissible interval.
        est.flag = "JuliaLikelySphere";
        est.h = 2.0;
        est.bracket = {std::max(a, 2.0 - std::max(bisect_tol, 0.05)), 2.0};
        est.residual = std::abs(top.extrapolated);
        validate_dimension_estimate(est, rho);
        return est;
    }
    const PressureEstimate bottom = eval_p(a);
    if (bottom.extrapolated < -bottom.error_bar) {
        est.flag = "InconsistentTruncation";
        est.h = a + 0.5 * bisect_tol;
        est.bracket = {a, a + bisect_tol};
        est.residual = std::abs(bottom.extrapolated);
        validate_dimension_estimate(est, rho);
        return est;
    }

    // a carries certified positive pressure unless the map already
    // straddles there; b likewise on the negative side.
    double residual = std::abs(bottom.extrapolated);
    if (bottom.extrapolated <= bottom.error_bar) {
        // Straddle at the bottom end: bracket is the first grid cell.
        est.h = a + 0.5 * bisect_tol;
        est.bracket = {a, a + bisect_tol};
        est.residual = residual;
        validate_dimension_estimate(est, rho);
        return est;
    }

    while (b - a > bisect_tol) {
        const double mid = 0.5 * (a + b);
        const PressureEstimate pm = eval_p(mid);
        residual = std::abs(pm.extrapolated);
        if (pm.extrapolated > pm.error_bar) {
            a = mid;
        } else if (pm.extrapolated < -pm.error_bar) {
            b = mid;
        } else {
            // Error bars straddle zero: the certified interval is the bracket.
            break;
        }
    }
    est.h = 0.5 * (a + b);
    est.bracket = {a, b};
    est.residual = residual;
    validate_dimension_estimate(est, rho);
    return est;
}

UlamResult ulam_pressure(const MapSpec& f, double t, double lo, double hi, int bins,
                         bool tail_state) {
    if (f.family() != Family::Tangent || f.lambda().imag() != 0.0 || f.lambda().real() <= 0.0 ||
        f.lambda().real() >= 1.0)
        throw Error("ComplexParameter", "the Ulam cross-check needs real lambda in (0,1)");
    if (bins < 1 || hi <= lo) throw Error("InvalidArgument", "bad Ulam interval or bin count");
    const double rho = f.order();
    if (t < rho / (rho + 1.0) + kBorelMargin - 1e-9)
        throw Error("BelowBorelThreshold", "t at or below rho/(rho+1) + margin");

    const int n_states = bins + (tail_state ? 1 : 0);
    const double width = (hi - lo) / bins;
    const int k_span =
        static_cast<int>(std::ceil(std::max(std::abs(lo), std::abs(hi)) / std::numbers::pi)) + 2;

    std::vector<Eigen::Triplet<double>> trips;
    const auto add_row = [&](int row, const SpherePoint& target) {
        const PreimageLattice lat = f.preimage_lattice(target, 0.0);
        for (int k = -k_span; k <= k_span; ++k) {
            const Complex z = lat.base + static_cast<double>(k) * lat.step;
            const double m2 = (k + lat.alpha) * (k + lat.alpha) + lat.q2;
            const double w = std::pow(lat.deriv_prefactor * lat.period * lat.period * m2, -t);
            const double x = z.real();
            if (x >= lo && x < hi) {
                const int j = std::min(bins - 1, static_cast<int>((x - lo) / width));
                trips.emplace_back(row, j, w);
            } else if (tail_state) {
                trips.emplace_back(row, bins, w);
            }
        }
        if (tail_state) {
            const LatticeTail tail = fiber_weight_tail(lat, t, k_span + 1, k_span + 1);
            if (std::isfinite(tail.mid)) trips.emplace_back(row, bins, tail.mid);
        }
    };

    for (int i = 0; i < bins; ++i) add_row(i, SpherePoint(Complex(lo + (i + 0.5) * width, 0.0)));
    if (tail_state) add_row(bins, SpherePoint::infinity());

    Eigen::SparseMatrix<double> M(n_states, n_states);
    M.setFromTriplets(trips.begin(), trips.end());

    Eigen::VectorXd v = Eigen::VectorXd::Constant(n_states, 1.0);
    double lam = 0.0;
    int it = 0;
    constexpr int kMaxIter = 20000;
    for (; it < kMaxIter; ++it) {
        Eigen::VectorXd w = M * v;
        const double nw = w.sum();
        if (!(nw > 0.0) || !std::isfinite(nw))
            throw Error("PowerIterationStall", "Ulam iteration lost positivity");
        const double lam_new = nw / v.sum();
        w /= nw;
        const bool done = it > 4 && std::abs(lam_new - lam) <= 1e-10 * std::abs(lam_new);
        lam = lam_new;
        v = std::move(w);
        if (done) break;
    }
    if (it >= kMaxIter) throw Error("PowerIterationStall", "no eigenvalue convergence");
    UlamResult res;
    res.log_eigenvalue = std::log(lam);
    res.iterations = it;
    res.bins = bins;
    return res;
}

DimensionEstimate ulam_root(const MapSpec& f, const RegimeReport& regime, double lo, double hi,
                            int bins, double bisect_tol) {
    if (regime.regime != Regime::Hyperbolic)
        throw Error("UnsupportedRegime", "the Ulam estimator is gated to the hyperbolic regime");
    const double rho = f.order();
    double a = rho / (rho + 1.0) + 0.02;
    double b = 2.0;
    const auto lp = [&](double t) { return ulam_pressure(f, t, lo, hi, bins).log_eigenvalue; };

    DimensionEstimate est;
    est.method = "Ulam";
    est.map_label = f.label();
    double pa = lp(a), pb = lp(b);
    if (pa < 0.0 || pb > 0.0) {
        est.flag = pb > 0.0 ? "JuliaLikelySphere" : "InconsistentTruncation";
        est.h = pb > 0.0 ? 2.0 : a;
        est.bracket = {pb > 0.0 ? 2.0 - bisect_tol : a, pb > 0.0 ? 2.0 : a + bisect_tol};
        est.residual = std::min(std::abs(pa), std::abs(pb));
        validate_dimension_estimate(est, rho);
        return est;
    }
    double residual = std::abs(pa);
    while (b - a > bisect_tol) {
        const double mid = 0.5 * (a + b);
        const double pm = lp(mid);
        residual = std::abs(pm);
        if (pm > 0.0) a = mid;
        else b = mid;
    }
    est.h = 0.5 * (a + b);
    est.bracket = {a, b};
    est.residual = residual;
    validate_dimension_estimate(est, rho);
    return est;
}

BoundsReport bounds_check(const DimensionEstimate& est, const RegimeReport& regime, double rho) {
    BoundsReport rep;
    rep.pass = true;
    const double base = rho / (rho + 1.0);
    const auto record = [&](bool ok, const std::string& text) {
        rep.lines.push_back((ok ? "pass: " : "fail: ") + text);
        rep.pass = rep.pass && ok;
    };
    record(est.h > base, "rho/(rho+1) = " + std::to_string(base) + " < h = " + std::to_string(est.h));
    record(est.h <= 2.0 + 1e-12, "h = " + std::to_string(est.h) + " <= 2");
    if (regime.regime == Regime::SubExpanding) {
        const double strengthened = 2.0 * base;
        record(est.h > strengthened, "sub-expanding: 2 rho/(rho+1) = " + std::to_string(strengthened) +
                                         " < h = " + std::to_string(est.h));
    }
    return rep;
}

}  // namespace merodim
