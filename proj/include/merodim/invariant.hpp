#pragma once

#include "merodim/poincare.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace merodim {

enum class Finiteness { Finite, Infinite };

/// The invariant measure is finite iff h > 3 rho/(rho+1), strictly.
Finiteness finiteness_criterion(double rho, double h);

/// Finite iff the Schwarzian polynomial degree is 0 or 1.
Finiteness schwarzian_degree_criterion(int deg_p);

struct LatticeSumResult {
    bool converges = false;
    double value = 0.0;       // Euler-Maclaurin value inside the bracket
    double bracket_low = 0.0;
    double bracket_high = 0.0;
};

/// sum_{n,k >= 1} (n^2+k^2)^(-s): converges iff s > 1.
LatticeSumResult lattice_sum_2d(double s, long n_cap);

/// sum_{n >= 1} sum_{N >= n} sum_{k >= 1} (N^2+k^2)^(-s)
///   = sum_{N,k >= 1} N (N^2+k^2)^(-s): converges iff s > 3/2.
LatticeSumResult lattice_sum_triple(double s, long n_cap);

// ---------------------------------------------------------------------------
// Martens ratios and decay probes
// ---------------------------------------------------------------------------

struct MartensEstimate {
    ChordalDisk cell_a, cell_a0;
    std::vector<double> mass_a, mass_a0;  // per-k preimage masses
    std::vector<double> ratios;           // cumulative-sum ratios per n
    std::vector<double> cesaro;
    double limit = 0.0;
    double error_bar = 0.0;
};

/// Ratio estimate of the sigma-finite invariant measure: masses of
/// f^{-k}(A) transported forward through the atoms of m, normalized by
/// the reference cell A0. The measure itself is never materialized.
MartensEstimate martens_ratio(const MapSpec& f, const AtomicMeasure& m, const RegimeReport& regime,
                              const ChordalDisk& cell_a, const ChordalDisk& cell_a0, int n_max);

struct NestedDomainSpec {
    std::vector<Complex> centers;  // postsingular prefix
    double radius = 0.0;           // T
    int iterate_power = 1;         // p with g = f^p
};

struct GammaDecayResult {
    std::vector<double> masses;    // mass of Gamma_n per n
    std::vector<long> atom_counts;
    double gamma_fit = 0.0;
    double r2 = 0.0;
    int n_used = 0;
};

/// Mass decay of the nested-domain annuli Gamma_n = Omega_n \ Omega_{n+1}
/// with Omega_0 the T-neighborhood of the postsingular prefix. The fit
/// uses only levels holding at least 30 atoms.
GammaDecayResult gamma_decay_probe(const MapSpec& f, const AtomicMeasure& m,
                                   const NestedDomainSpec& spec, int n_max);

// ---------------------------------------------------------------------------
// Induced first-return map and Lyapunov exponent
// ---------------------------------------------------------------------------

/// Membership in the induced domain X: away from the postsingular prefix
/// and the image not within T of any image of an asymptotic value.
bool in_induced_domain(const MapSpec& f, const RegimeReport& regime, const SpherePoint& z);

struct ReturnResult {
    int tau = 0;
    SpherePoint landing;
    double log_deriv = 0.0;  // log |f_*'(z)|_sigma
};

ReturnResult induced_return(const MapSpec& f, const RegimeReport& regime, const SpherePoint& z,
                            int max_steps);

struct LyapunovEstimate {
    double chi = 0.0;  // nats per return
    double std_err = 0.0;
    int orbits_completed = 0;
    int orbits_requested = 0;
    std::map<int, long> tau_histogram;
};

/// Birkhoff average of log |f_*'|_sigma over induced orbits started from
/// atoms of m conditioned on X (with a tiny seeded jitter so the exact
/// backward-orbit starting points do not terminate at infinity).
LyapunovEstimate lyapunov_induced(const MapSpec& f, const RegimeReport& regime,
                                  const AtomicMeasure& m, int n_orbits, int len,
                                  std::uint64_t seed);

/// Control estimate along the orbit of a single point with the trivial
/// membership test (every step is a return).
LyapunovEstimate lyapunov_control_orbit(const MapSpec& f, const SpherePoint& z, int len);

}  // namespace merodim
