#pragma once

#include "merodim/sphere.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace merodim {

enum class Family { Tangent, MobiusExp };

/// Cutoffs for the infinite preimage sums. Every truncated sum emitted by
/// the operator modules carries an analytic tail bracket derived from the
/// exact preimage lattice below.
struct TruncationPolicy {
    int k_max = 10000;            // branch-index cutoff per side
    double radius_cut = 1e12;     // modulus cutoff R
    double rel_tail_tol = 1e-9;   // target relative tail bound
    double asym_tol = 1e-8;       // chordal tolerance for asymptotic-value rejection
};

struct PreimageBranch {
    int k = 0;
    Complex z;
    double abs_fprime = 0.0;  // |f'(z)|, identical across branches of one fiber
    double sph_deriv = 0.0;   // |f'(z)|_sigma
};

/// Exact fiber geometry for both built-in families: the preimages of w are
/// z_k = base + k*step with |step| = pi, and
///     1 + |z_k|^2 = period^2 * ((k + alpha)^2 + q2),
///     |f'(z_k)|_sigma = deriv_prefactor * (1 + |z_k|^2).
struct PreimageLattice {
    Complex base;
    Complex step;
    double period = 0.0;      // |step| = pi
    double alpha = 0.0;
    double q2 = 0.0;
    double deriv_prefactor = 0.0;
};

struct PreimageSet {
    std::vector<PreimageBranch> branches;  // sorted by |z| ascending
    PreimageLattice lattice;
    int k_enum_pos = -1;   // largest enumerated k >= 0 (-1: none)
    int k_enum_neg = -1;   // largest enumerated -k   (-1: none)
    double smallest_omitted_modulus = 0.0;
    double tail_exponent = 2.0;  // rho + 1
};

enum class Regime { Hyperbolic, SubExpanding, Unsupported };

struct RegimeReport {
    Regime regime = Regime::Unsupported;
    std::vector<std::vector<Complex>> singular_orbits;  // orbit prefix per asymptotic value
    double safety_radius = 0.0;                         // T
    int expansion_power = 0;                            // p with |(f^p)'|_sigma > 2 near P_f
    double expansion_min = 0.0;
    std::vector<Complex> postsingular_prefix;           // deduped forward images of A_f
    std::vector<Complex> attracting_cycle;
    bool fatou_nonempty = false;
    std::string note;
};

struct TractCell {
    Complex asym_value;
    int n = 0;
    int k = 0;
    Complex z;
    double weight_scale = 0.0;  // |f'(z)|_sigma
};

/// An explicit meromorphic family instance with constant Schwarzian
/// derivative: lambda*tan(z), or (a e^z + b e^-z)/(c e^z + d e^-z).
/// Order rho = 1 for both. Immutable; all operations are pure.
class MapSpec {
public:
    static MapSpec tangent(Complex lambda);
    static MapSpec mobius_exp(Complex a, Complex b, Complex c, Complex d);

    Family family() const { return family_; }
    Complex lambda() const { return lambda_; }
    std::array<Complex, 4> mobius_coeffs() const { return {a_, b_, c_, d_}; }
    double order() const { return 1.0; }       // rho = (deg P + 2)/2 with deg P = 0
    int schwarzian_degree() const { return 0; }
    Complex schwarzian_constant() const;       // 2 for tangent, -2 for mobius-exp
    std::string label() const;

    std::vector<Complex> asymptotic_values() const;

    /// Family formula with lattice snapping: inputs within 1e-14 of the
    /// zero/pole lattice evaluate exactly (the strictly preperiodic
    /// instances need the postsingular orbit to land, not drift).
    SpherePoint eval(const SpherePoint& z) const;

    Complex derivative(Complex z) const;
    Complex derivative2(Complex z) const;
    Complex derivative3(Complex z) const;

    /// |f'(z)|_sigma; finite z only, poles handled in the 1/w chart by a
    /// single uniformly stable formula.
    double spherical_derivative(const SpherePoint& z) const;

    /// Product of spherical derivatives along z, f(z), ..., f^{n-1}(z).
    double orbit_spherical_derivative(const SpherePoint& z, int n) const;

    /// k-th pole (all poles are simple).
    Complex pole(int k) const;
    bool is_pole(const SpherePoint& z, double tol = 1e-12) const;

    /// Fiber lattice over w; w may be the point at infinity (pole fiber).
    PreimageLattice preimage_lattice(const SpherePoint& w, double asym_tol = 1e-8) const;

    /// Complete truncated preimage enumeration, branches sorted by |z|.
    PreimageSet preimages(const SpherePoint& w, const TruncationPolicy& policy) const;

private:
    MapSpec() = default;
    Family family_ = Family::Tangent;
    Complex lambda_{1.0, 0.0};
    Complex a_, b_, c_, d_;
};

/// Iterates the asymptotic-value orbits and classifies the dynamical
/// regime per the sub-expanding definition; never assumes it.
RegimeReport classify_regime(const MapSpec& f, int orbit_len, double escape_box);

/// Safety radius T for a given postsingular prefix: starts at 1/4 of the
/// minimal pairwise separation and halves until the separation conditions
/// (asymptotic-value gaps, prefix/asymptotic gap, preimage exclusion on
/// the truncated preimage set) all hold.
double compute_safety_radius(const MapSpec& f, const std::vector<Complex>& prefix);

/// Tract cells over the asymptotic value a: representative of cell (n,k)
/// is the preimage of the point at chordal radius T*2^-n from a, shifted
/// by k periods.
std::vector<TractCell> tract_cells(const MapSpec& f, Complex a, int n_max, int k_max, double T);

}  // namespace merodim
