#include "merodim/map_family.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace merodim {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSnap = 1e-14;
constexpr double kImGuard = 300.0;  // |Im z| beyond which exp-scale formulas degenerate

double sqr(double x) { return x * x; }

// Nearest lattice index of x on {origin + k*period}.
long nearest_index(double x, double origin, double period) {
    return std::lround((x - origin) / period);
}

std::string fmt_complex(Complex z) {
    std::ostringstream os;
    os << z.real() << (z.imag() < 0 ? "" : "+") << z.imag() << "i";
    return os.str();
}

}  // namespace

MapSpec MapSpec::tangent(Complex lambda) {
    if (lambda == Complex(0.0)) throw Error("InvalidFamily", "tangent family needs lambda != 0");
    MapSpec f;
    f.family_ = Family::Tangent;
    f.lambda_ = lambda;
    return f;
}

MapSpec MapSpec::mobius_exp(Complex a, Complex b, Complex c, Complex d) {
    if (a * d - b * c == Complex(0.0))
        throw Error("InvalidFamily", "mobius-exp family needs ad - bc != 0");
    if (c == Complex(0.0) || d == Complex(0.0))
        throw Error("InvalidFamily", "mobius-exp family needs finite asymptotic values (c, d != 0)");
    MapSpec f;
    f.family_ = Family::MobiusExp;
    f.a_ = a;
    f.b_ = b;
    f.c_ = c;
    f.d_ = d;
    return f;
}

Complex MapSpec::schwarzian_constant() const {
    // S(lambda tan) = 2; S(M(e^{2z})) = S(e^{2z}) = -2 by Mobius invariance.
    return family_ == Family::Tangent ? Complex(2.0) : Complex(-2.0);
}

std::string MapSpec::label() const {
    if (family_ == Family::Tangent) return "tan:lambda=" + fmt_complex(lambda_);
    return "mobius_exp:a=" + fmt_complex(a_) + ",b=" + fmt_complex(b_) + ",c=" + fmt_complex(c_) +
           ",d=" + fmt_complex(d_);
}

std::vector<Complex> MapSpec::asymptotic_values() const {
    if (family_ == Family::Tangent) {
        const Complex i(0.0, 1.0);
        return {lambda_ * i, -lambda_ * i};
    }
    return {a_ / c_, b_ / d_};
}

SpherePoint MapSpec::eval(const SpherePoint& zp) const {
    if (zp.is_infinity()) throw Error("EssentialSingularity", "f is undefined at infinity");
    const Complex z = zp.value();
    const double x = z.real(), y = z.imag();

    if (family_ == Family::Tangent) {
        // Lattice snapping: tan(k pi) = 0 and tan(pi/2 + k pi) = inf exactly.
        const double tol = kSnap * std::max(1.0, std::abs(x));
        if (std::abs(y) <= tol) {
            const long kz = nearest_index(x, 0.0, kPi);
            if (std::hypot(x - static_cast<double>(kz) * kPi, y) <= tol)
                return SpherePoint(Complex(0.0));
            const long kp = nearest_index(x, kPi / 2.0, kPi);
            if (std::hypot(x - (kPi / 2.0 + static_cast<double>(kp) * kPi), y) <= tol)
                return SpherePoint::infinity();
        }
        Complex t;
        if (y > 18.0) {
            const Complex q = std::exp(Complex(0.0, 2.0) * z);  // |q| = e^{-2y} tiny
            t = Complex(0.0, 1.0) * (1.0 - q) / (1.0 + q);
        } else if (y < -18.0) {
            const Complex r = std::exp(Complex(0.0, -2.0) * z);
            t = Complex(0.0, -1.0) * (1.0 - r) / (1.0 + r);
        } else {
            t = std::tan(z);
            if (std::isinf(t.real()) || std::isinf(t.imag())) return SpherePoint::infinity();
        }
        return SpherePoint(lambda_ * t);
    }

    // Mobius-exp. Snap onto the pole lattice and the e^{2z} = 1 lattice.
    const Complex up = -d_ / c_;
    const Complex zpole = 0.5 * std::log(up);
    const double tol = kSnap * std::max(1.0, std::abs(z));
    {
        const long kp = nearest_index(y, zpole.imag(), kPi);
        if (std::abs(Complex(x - zpole.real(), y - zpole.imag() - static_cast<double>(kp) * kPi)) <= tol)
            return SpherePoint::infinity();
        const long k1 = nearest_index(y, 0.0, kPi);
        if (std::abs(Complex(x, y - static_cast<double>(k1) * kPi)) <= tol)
            return SpherePoint((a_ + b_) / (c_ + d_));
    }
    if (x >= 0.0) {
        const Complex q = std::exp(-2.0 * z);
        const Complex den = c_ + d_ * q;
        if (den == Complex(0.0)) return SpherePoint::infinity();
        return SpherePoint((a_ + b_ * q) / den);
    }
    const Complex q = std::exp(2.0 * z);
    const Complex den = c_ * q + d_;
    if (den == Complex(0.0)) return SpherePoint::infinity();
    return SpherePoint((a_ * q + b_) / den);
}

Complex MapSpec::derivative(Complex z) const {
    if (family_ == Family::Tangent) {
        const Complex t = std::tan(z);
        return lambda_ * (1.0 + t * t);
    }
    const Complex u = std::exp(2.0 * z);
    const Complex den = c_ * u + d_;
    return 2.0 * (a_ * d_ - b_ * c_) * u / (den * den);
}

Complex MapSpec::derivative2(Complex z) const {
    if (family_ == Family::Tangent) {
        const Complex t = std::tan(z);
        const Complex d1 = lambda_ * (1.0 + t * t);
        return 2.0 * d1 * t;
    }
    const Complex u = std::exp(2.0 * z);
    const Complex den = c_ * u + d_;
    const Complex delta = a_ * d_ - b_ * c_;
    const Complex m1 = delta / (den * den);
    const Complex m2 = -2.0 * c_ * delta / (den * den * den);
    return 4.0 * u * m1 + 4.0 * u * u * m2;
}

Complex MapSpec::derivative3(Complex z) const {
    if (family_ == Family::Tangent) {
        const Complex t = std::tan(z);
        const Complex d1 = lambda_ * (1.0 + t * t);
        const Complex d2 = 2.0 * d1 * t;
        // f''' = 2 (f'' f + f'^2) / lambda with f = lambda t.
        return 2.0 * (d2 * lambda_ * t + d1 * d1) / lambda_;
    }
    const Complex u = std::exp(2.0 * z);
    const Complex den = c_ * u + d_;
    const Complex delta = a_ * d_ - b_ * c_;
    const Complex m1 = delta / (den * den);
    const Complex m2 = -2.0 * c_ * delta / (den * den * den);
    const Complex m3 = 6.0 * c_ * c_ * delta / (den * den * den * den);
    return 8.0 * u * m1 + 24.0 * u * u * m2 + 8.0 * u * u * u * m3;
}

double MapSpec::spherical_derivative(const SpherePoint& zp) const {
    if (zp.is_infinity())
        throw Error("EssentialSingularity", "no spherical derivative at the essential singularity");
    const Complex z = zp.value();
    const double x = z.real(), y = z.imag();
    if (std::abs(y) > kImGuard)
        throw Error("NumericallyUnstable", "spherical derivative underflows for |Im z| > 300");
    const double one_plus_z2 = 1.0 + std::norm(z);

    if (family_ == Family::Tangent) {
        // |f'|_sigma = |lambda| (1+|z|^2) / (|cos z|^2 + |lambda|^2 |sin z|^2),
        // valid through the poles (it is the 1/w-chart value there).
        const double sh2 = sqr(std::sinh(y));
        const double c2 = sqr(std::cos(x)) + sh2;
        const double s2 = sqr(std::sin(x)) + sh2;
        const double al2 = std::norm(lambda_);
        return std::abs(lambda_) * one_plus_z2 / (c2 + al2 * s2);
    }

    // |f'|_sigma = 2|delta| (1+|z|^2) / (|N|^2 + |D|^2) with N, D the
    // numerator/denominator; scale e^{|x|} out to keep it finite.
    const Complex delta = a_ * d_ - b_ * c_;
    double n2, dn2, scale2;
    if (x >= 0.0) {
        const Complex q = std::exp(-2.0 * z);
        n2 = std::norm(a_ + b_ * q);
        dn2 = std::norm(c_ + d_ * q);
        scale2 = std::exp(-2.0 * x);  // |e^z|^-2 relative to the factored e^{2x}
    } else {
        const Complex q = std::exp(2.0 * z);
        n2 = std::norm(a_ * q + b_);
        dn2 = std::norm(c_ * q + d_);
        scale2 = std::exp(2.0 * x);
    }
    return 2.0 * std::abs(delta) * one_plus_z2 * scale2 / (n2 + dn2);
}

double MapSpec::orbit_spherical_derivative(const SpherePoint& z0, int n) const {
    if (n <= 0) throw Error("InvalidArgument", "orbit length must be positive");
    SpherePoint z = z0;
    double prod = 1.0;
    for (int j = 0; j < n; ++j) {
        if (z.is_infinity())
            throw Error("OrbitEscaped", "orbit reached the essential singularity at step " + std::to_string(j));
        prod *= spherical_derivative(z);
        if (j + 1 < n) z = eval(z);
    }
    return prod;
}

Complex MapSpec::pole(int k) const {
    if (family_ == Family::Tangent) return Complex(kPi / 2.0 + k * kPi, 0.0);
    const Complex zp = 0.5 * std::log(-d_ / c_);
    return zp + Complex(0.0, k * kPi);
}

bool MapSpec::is_pole(const SpherePoint& zp, double tol) const {
    if (zp.is_infinity()) return false;
    const Complex z = zp.value();
    if (family_ == Family::Tangent) {
        const long k = nearest_index(z.real(), kPi / 2.0, kPi);
        return std::abs(z - pole(static_cast<int>(k))) <= tol * std::max(1.0, std::abs(z));
    }
    const Complex zp0 = pole(0);
    const long k = nearest_index(z.imag(), zp0.imag(), kPi);
    return std::abs(z - pole(static_cast<int>(k))) <= tol * std::max(1.0, std::abs(z));
}

PreimageLattice MapSpec::preimage_lattice(const SpherePoint& w, double asym_tol) const {
    PreimageLattice lat;
    lat.period = kPi;

    if (family_ == Family::Tangent) {
        lat.step = Complex(kPi, 0.0);
        if (w.is_infinity()) {
            lat.base = Complex(kPi / 2.0, 0.0);
            lat.alpha = 0.5;
            lat.q2 = 1.0 / (kPi * kPi);
            lat.deriv_prefactor = 1.0 / std::abs(lambda_);
            return lat;
        }
        const Complex wv = w.value();
        const Complex u = wv / lambda_;
        if (u == Complex(0.0, 1.0) || u == Complex(0.0, -1.0))
            throw Error("BranchPointConflict", "w/lambda hits the branch point +-i exactly");
        for (const Complex& a : asymptotic_values()) {
            if (chordal_dist(w, SpherePoint(a)) < asym_tol)
                throw Error("AsymptoticValue", "w within tolerance of asymptotic value " + fmt_complex(a));
        }
        const Complex zeta = std::atan(u);
        lat.base = zeta;
        lat.alpha = zeta.real() / kPi;
        lat.q2 = (1.0 + sqr(zeta.imag())) / (kPi * kPi);
        lat.deriv_prefactor = std::abs(lambda_ + wv * wv / lambda_) / (1.0 + std::norm(wv));
        return lat;
    }

    lat.step = Complex(0.0, kPi);
    const Complex delta = a_ * d_ - b_ * c_;
    if (w.is_infinity()) {
        const Complex z0 = 0.5 * std::log(-d_ / c_);
        lat.base = z0;
        lat.alpha = z0.imag() / kPi;
        lat.q2 = (1.0 + sqr(z0.real())) / (kPi * kPi);
        lat.deriv_prefactor = 2.0 * std::abs(c_ * d_) / std::abs(delta);
        return lat;
    }
    const Complex wv = w.value();
    for (const Complex& a : asymptotic_values()) {
        if (chordal_dist(w, SpherePoint(a)) < asym_tol)
            throw Error("AsymptoticValue", "w within tolerance of asymptotic value " + fmt_complex(a));
    }
    const Complex den = a_ - c_ * wv;
    if (den == Complex(0.0)) throw Error("BranchPointConflict", "w equals a/c exactly");
    const Complex u = (d_ * wv - b_) / den;
    if (u == Complex(0.0)) throw Error("BranchPointConflict", "w equals b/d exactly");
    const Complex z0 = 0.5 * std::log(u);
    lat.base = z0;
    lat.alpha = z0.imag() / kPi;
    lat.q2 = (1.0 + sqr(z0.real())) / (kPi * kPi);
    const Complex cu_d = c_ * u + d_;
    lat.deriv_prefactor = 2.0 * std::abs(delta) * std::abs(u) / (std::norm(cu_d) * (1.0 + std::norm(wv)));
    return lat;
}

PreimageSet MapSpec::preimages(const SpherePoint& w, const TruncationPolicy& policy) const {
    if (policy.k_max <= 0) throw Error("InvalidArgument", "k_max must be positive");
    PreimageSet set;
    set.lattice = preimage_lattice(w, policy.asym_tol);
    set.tail_exponent = order() + 1.0;

    const PreimageLattice& lat = set.lattice;
    const double p2 = lat.period * lat.period;

    // |f'(z_k)| itself is branch-independent; recover it from the lattice
    // prefactor for finite w, and it is infinite on the pole fiber.
    const double abs_fprime = w.is_infinity()
                                  ? std::numeric_limits<double>::infinity()
                                  : lat.deriv_prefactor * (1.0 + std::norm(w.value()));

    set.branches.reserve(2 * static_cast<std::size_t>(policy.k_max) + 1);
    double smallest_omitted = std::numeric_limits<double>::infinity();
    for (int k = -policy.k_max; k <= policy.k_max; ++k) {
        const Complex z = lat.base + static_cast<double>(k) * lat.step;
        const double mod2 = p2 * (sqr(k + lat.alpha) + lat.q2) - 1.0;  // |z_k|^2
        const double mod = std::sqrt(std::max(mod2, 0.0));
        if (mod > policy.radius_cut) {
            smallest_omitted = std::min(smallest_omitted, mod);
            continue;
        }
        PreimageBranch br;
        br.k = k;
        br.z = z;
        br.abs_fprime = abs_fprime;
        br.sph_deriv = lat.deriv_prefactor * (1.0 + mod2);
        set.branches.push_back(br);
        if (k >= 0) set.k_enum_pos = std::max(set.k_enum_pos, k);
        if (k <= 0) set.k_enum_neg = std::max(set.k_enum_neg, -k);
    }
    if (set.branches.empty()) throw Error("EmptyTruncation", "radius cutoff removed every branch");

    // Smallest omitted modulus across both the index and radius cutoffs.
    for (const int kk : {policy.k_max + 1, -(policy.k_max + 1)}) {
        const double mod2 = p2 * (sqr(kk + lat.alpha) + lat.q2) - 1.0;
        smallest_omitted = std::min(smallest_omitted, std::sqrt(std::max(mod2, 0.0)));
    }
    set.smallest_omitted_modulus = smallest_omitted;

    std::sort(set.branches.begin(), set.branches.end(), [](const PreimageBranch& l, const PreimageBranch& r) {
        const double ml = std::abs(l.z), mr = std::abs(r.z);
        if (ml != mr) return ml < mr;
        return l.k < r.k;
    });
    return set;
}

// ---------------------------------------------------------------------------
// Regime classification
// ---------------------------------------------------------------------------

namespace {

struct CycleHit {
    bool attracted = false;
    int period = 0;
    double multiplier = 0.0;
    std::vector<Complex> cycle;
    std::size_t entry_index = 0;  // first orbit index close to the cycle
};

CycleHit detect_attracting_cycle(const MapSpec& f, const std::vector<Complex>& orbit) {
    CycleHit hit;
    const std::size_t n = orbit.size();
    if (n < 25) return hit;
    constexpr double kMulTol = 1e-6;
    for (int q = 1; q <= 8; ++q) {
        const std::size_t window = 20;
        if (n < window + static_cast<std::size_t>(q) + 1) continue;
        // Orbit-difference contraction over the window. The per-step ratio
        // of successive q-differences must be < 1 and stable; a ratio that
        // keeps drifting toward 1 is the algebraic decay of a neutral
        // point, not geometric attraction.
        bool contracting = true;
        std::vector<double> ratios;
        double prev = -1.0;
        for (std::size_t j = n - window; j + static_cast<std::size_t>(q) < n; ++j) {
            const double d = chordal_dist(SpherePoint(orbit[j]), SpherePoint(orbit[j + q]));
            if (prev > 1e-13 && d > 1e-15) ratios.push_back(d / prev);
            if (prev >= 0.0 && d > prev * 0.999 && d > 1e-13) contracting = false;
            prev = d;
        }
        if (!contracting) continue;
        if (ratios.size() >= 6) {
            const double head = ratios[1];
            const double tail = ratios[ratios.size() - 1];
            if (head < 1.0 - kMulTol && tail > head + 1e-3) contracting = false;  // drifting up
        }
        if (!contracting) continue;
        // Multiplier from the local derivative product over one period.
        double mult = 1.0;
        bool ok = true;
        for (int i = 0; i < q; ++i) {
            const Complex p = orbit[n - 1 - static_cast<std::size_t>(i)];
            const Complex d1 = f.derivative(p);
            if (!std::isfinite(d1.real()) || !std::isfinite(d1.imag())) { ok = false; break; }
            mult *= std::abs(d1);
        }
        if (!ok || mult >= 1.0 - kMulTol) continue;
        hit.attracted = true;
        hit.period = q;
        hit.multiplier = mult;
        for (int i = q; i >= 1; --i) hit.cycle.push_back(orbit[n - static_cast<std::size_t>(i)]);
        // Entry index: first orbit point within trap distance of the cycle.
        constexpr double kTrap = 0.05;
        hit.entry_index = n;
        for (std::size_t j = 0; j < n; ++j) {
            double dmin = 1.0;
            for (const Complex& c : hit.cycle)
                dmin = std::min(dmin, chordal_dist(SpherePoint(orbit[j]), SpherePoint(c)));
            if (dmin < kTrap) { hit.entry_index = j; break; }
        }
        return hit;
    }
    return hit;
}

std::vector<Complex> dedupe_points(std::vector<Complex> pts, double tol) {
    std::vector<Complex> out;
    for (const Complex& p : pts) {
        bool dup = false;
        for (const Complex& q : out) {
            if (chordal_dist(SpherePoint(p), SpherePoint(q)) < tol) { dup = true; break; }
        }
        if (!dup) out.push_back(p);
    }
    return out;
}

}  // namespace

double compute_safety_radius(const MapSpec& f, const std::vector<Complex>& prefix) {
    std::vector<Complex> avals = f.asymptotic_values();
    std::vector<Complex> all = prefix;
    all.insert(all.end(), avals.begin(), avals.end());
    all = dedupe_points(all, 1e-9);

    double min_gap = 1.0;
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j)
            min_gap = std::min(min_gap, chordal_dist(SpherePoint(all[i]), SpherePoint(all[j])));
    double T = std::min(0.2, min_gap / 4.0);

    // Truncated preimage set of A_f union prefix used for the preimage
    // exclusion condition; asymptotic values have no preimages and are
    // caught by the rejection in preimage_lattice.
    std::vector<Complex> preim;
    TruncationPolicy probe;
    probe.k_max = 64;
    probe.radius_cut = 200.0;
    probe.asym_tol = 1e-12;
    for (const Complex& tgt : all) {
        try {
            const PreimageSet ps = f.preimages(SpherePoint(tgt), probe);
            for (const auto& br : ps.branches) preim.push_back(br.z);
        } catch (const Error&) {
            // asymptotic value or branch conflict: empty fiber
        }
    }

    auto conditions_hold = [&](double t) {
        // (i) 4T below every asymptotic-value gap.
        for (std::size_t i = 0; i < avals.size(); ++i)
            for (std::size_t j = i + 1; j < avals.size(); ++j)
                if (chordal_dist(SpherePoint(avals[i]), SpherePoint(avals[j])) <= 4.0 * t) return false;
        // (ii) the 4T-neighborhood of the prefix avoids A_f.
        for (const Complex& p : prefix)
            for (const Complex& a : avals)
                if (chordal_dist(SpherePoint(p), SpherePoint(a)) <= 4.0 * t) return false;
        // (iii) no strict preimage of A_f union prefix inside the punctured
        // 4T-neighborhood of A_f union prefix (verified on the truncated set).
        for (const Complex& z : preim) {
            double dmin = 1.0;
            for (const Complex& s : all)
                dmin = std::min(dmin, chordal_dist(SpherePoint(z), SpherePoint(s)));
            if (dmin > 1e-9 && dmin <= 4.0 * t) return false;
        }
        return true;
    };

    for (int iter = 0; iter < 48 && T > 1e-8; ++iter) {
        if (conditions_hold(T)) return T;
        T /= 2.0;
    }
    return std::max(T, 1e-8);
}

RegimeReport classify_regime(const MapSpec& f, int orbit_len, double escape_box) {
    if (orbit_len < 10) throw Error("InvalidArgument", "orbit_len must be >= 10");
    RegimeReport rep;

    const std::vector<Complex> avals = f.asymptotic_values();
    std::vector<CycleHit> hits;
    bool all_bounded = true;
    bool away_from_avals = true;

    for (const Complex& a : avals) {
        std::vector<Complex> orbit{a};
        SpherePoint z(a);
        for (int j = 0; j < orbit_len; ++j) {
            const SpherePoint next = f.eval(z);
            if (next.is_infinity())
                throw Error("OrbitHitPole", "singular orbit of " + fmt_complex(a) +
                                                " lands on a pole at step " + std::to_string(j + 1));
            orbit.push_back(next.value());
            if (next.modulus() > escape_box) { all_bounded = false; }
            z = next;
        }
        for (std::size_t j = 1; j < orbit.size(); ++j) {
            for (const Complex& av : avals)
                if (chordal_dist(SpherePoint(orbit[j]), SpherePoint(av)) < 1e-2) away_from_avals = false;
        }
        hits.push_back(detect_attracting_cycle(f, orbit));
        rep.singular_orbits.push_back(std::move(orbit));
    }

    const bool all_attracted =
        std::all_of(hits.begin(), hits.end(), [](const CycleHit& h) { return h.attracted; });

    if (all_attracted) {
        rep.regime = Regime::Hyperbolic;
        rep.fatou_nonempty = true;
        std::vector<Complex> prefix;
        for (std::size_t i = 0; i < hits.size(); ++i) {
            const auto& orbit = rep.singular_orbits[i];
            for (std::size_t j = 1; j < std::min(orbit.size(), hits[i].entry_index); ++j)
                prefix.push_back(orbit[j]);
            for (const Complex& c : hits[i].cycle) {
                prefix.push_back(c);
                rep.attracting_cycle.push_back(c);
            }
        }
        rep.attracting_cycle = dedupe_points(rep.attracting_cycle, 1e-6);
        rep.postsingular_prefix = dedupe_points(prefix, 1e-9);
        rep.safety_radius = compute_safety_radius(f, rep.postsingular_prefix);
        rep.note = "all singular orbits attracted";
        return rep;
    }

    if (all_bounded && away_from_avals) {
        std::vector<Complex> prefix;
        for (const auto& orbit : rep.singular_orbits)
            for (std::size_t j = 1; j < orbit.size(); ++j) prefix.push_back(orbit[j]);
        rep.postsingular_prefix = dedupe_points(prefix, 1e-9);
        rep.safety_radius = compute_safety_radius(f, rep.postsingular_prefix);

        // Expansion check |(f^p)'|_sigma > 2 on a grid around the orbit closure.
        const double T = rep.safety_radius;
        for (int p = 1; p <= std::min(orbit_len, 8); ++p) {
            double mn = std::numeric_limits<double>::infinity();
            bool usable = true;
            for (const Complex& x0 : rep.postsingular_prefix) {
                const double r = T * (1.0 + std::norm(x0));  // euclidean span of the chordal disk
                for (int gi = -2; gi <= 2 && usable; ++gi) {
                    for (int gj = -2; gj <= 2; ++gj) {
                        const Complex x = x0 + Complex(gi * r / 2.0, gj * r / 2.0);
                        try {
                            mn = std::min(mn, f.orbit_spherical_derivative(SpherePoint(x), p));
                        } catch (const Error&) {
                            usable = false;
                            break;
                        }
                    }
                }
            }
            if (usable && mn > 2.0) {
                rep.regime = Regime::SubExpanding;
                rep.expansion_power = p;
                rep.expansion_min = mn;
                rep.fatou_nonempty = false;
                rep.note = "bounded non-attracted singular orbits with verified expansion";
                return rep;
            }
        }
        rep.regime = Regime::Unsupported;
        rep.note = "bounded singular orbits but no expansion power p <= 8 found";
        return rep;
    }

    rep.regime = Regime::Unsupported;
    rep.note = all_bounded ? "singular orbit approaches an asymptotic value"
                           : "singular orbit leaves the escape box";
    std::vector<Complex> prefix;
    for (const auto& orbit : rep.singular_orbits)
        for (std::size_t j = 1; j < orbit.size(); ++j) prefix.push_back(orbit[j]);
    rep.postsingular_prefix = dedupe_points(prefix, 1e-9);
    return rep;
}

std::vector<TractCell> tract_cells(const MapSpec& f, Complex a, int n_max, int k_max, double T) {
    bool is_asym = false;
    for (const Complex& av : f.asymptotic_values())
        if (chordal_dist(SpherePoint(a), SpherePoint(av)) < 1e-9) { is_asym = true; a = av; }
    if (!is_asym) throw Error("NotAsymptoticValue", "tract cells need an asymptotic value");
    if (a == Complex(0.0)) throw Error("NotAsymptoticValue", "degenerate asymptotic value at 0");

    const Complex dir = -a / std::abs(a);  // approach radially toward the origin
    std::vector<TractCell> cells;
    cells.reserve(static_cast<std::size_t>(n_max + 1) * (2 * static_cast<std::size_t>(k_max) + 1));
    for (int n = 0; n <= n_max; ++n) {
        const double r = T * std::pow(2.0, -n);
        // Solve chordal(a, a + s*dir) = r for the euclidean offset s.
        double s = r * (1.0 + std::norm(a));
        for (int it = 0; it < 4; ++it) {
            const double cur = chordal_dist(SpherePoint(a), SpherePoint(a + s * dir));
            if (cur > 0.0) s *= r / cur;
        }
        const SpherePoint w(a + s * dir);
        const PreimageLattice lat = f.preimage_lattice(w, 1e-15);
        for (int k = -k_max; k <= k_max; ++k) {
            TractCell cell;
            cell.asym_value = a;
            cell.n = n;
            cell.k = k;
            cell.z = lat.base + static_cast<double>(k) * lat.step;
            cell.weight_scale = lat.deriv_prefactor * (1.0 + std::norm(cell.z));
            cells.push_back(cell);
        }
    }
    return cells;
}

}  // namespace merodim
