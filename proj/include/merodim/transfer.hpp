#pragma once

#include "merodim/map_family.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace merodim {

constexpr double kBorelMargin = 0.01;

/// Analytic tail of the one-sided lattice series
///   sum_{k >= k_start} (scale * ((k+alpha)^2 + q2))^(-t),
/// as an integral-test bracket [low, high] plus an Euler-Maclaurin value
/// `mid` clamped into the bracket. Divergent iff 2t <= 1.
struct LatticeTail {
    double low = 0.0;
    double high = 0.0;
    double mid = 0.0;
    bool divergent = false;
};

LatticeTail lattice_tail_one_side(double scale, double alpha, double q2, double t, int k_start);

/// Two-sided weight tail of a preimage fiber: branches k > k_pos and
/// k < -k_neg, with weights |f'(z_k)|_sigma^(-t).
LatticeTail fiber_weight_tail(const PreimageLattice& lat, double t, int k_pos, int k_neg);

/// One application of the transfer operator to the constant function 1:
/// partial sum over enumerated branches plus the analytic tail bracket.
struct OperatorEval {
    double t = 0.0;
    SpherePoint w;
    double partial = 0.0;
    double tail_low = 0.0;
    double tail_high = 0.0;
    double tail_mid = 0.0;
    int branches_used = 0;
    bool tail_divergent = false;

    double low() const { return partial + tail_low; }
    double high() const { return partial + tail_high; }
    double value() const { return partial + tail_mid; }
    double bracket_width() const { return tail_high - tail_low; }
};

/// strict_asym = false opts into the dist(w, A_f)^{-t} blow-up region
/// instead of rejecting w near an asymptotic value.
OperatorEval transfer_one(const MapSpec& f, double t, const SpherePoint& w,
                          const TruncationPolicy& policy, bool strict_asym = true);

/// Same sum with the derivative prefactor dropped: the bare series
/// sum (1+|z|^(rho+1))^(-t), bounded uniformly in w.
OperatorEval bare_bound_sum(const MapSpec& f, double t, const SpherePoint& w,
                            const TruncationPolicy& policy);

struct ScanReport {
    double sup = 0.0;
    double median = 0.0;
    SpherePoint argmax;
    bool flagged_unbounded = false;
    std::vector<double> values;
};

ScanReport uniform_bound_scan(const MapSpec& f, double t, std::span<const SpherePoint> grid,
                              const TruncationPolicy& policy);

/// Roughly chordal-uniform grid (Fibonacci sphere pushed through the
/// stereographic chart); the north pole maps to the point at infinity.
std::vector<SpherePoint> sphere_grid(int n);

// ---------------------------------------------------------------------------
// Backward-orbit tree
// ---------------------------------------------------------------------------

struct BeamParams {
    int beam_width = 6000;
    int branch_halfwidth = 40;  // enumerated branches per node per side
    double rel_tol = 1e-6;      // per-level relative pruning threshold
    unsigned workers = 1;
};

struct TreeLevel {
    double log_sum = 0.0;        // log of the level weight sum
    double discarded_share = 0.0;
    double lump_share = 0.0;     // mass aggregated into infinity-lumps
    std::size_t node_count = 0;
};

struct TreeAtomRec {
    Complex z;
    double log_weight = 0.0;
    int depth = 0;
    std::vector<std::int16_t> path;  // branch indices root -> node
};

struct TreeOptions {
    int depth = 1;
    bool collect_atoms = false;  // atom mode drops lump expansion entirely
};

struct TreeResult {
    std::vector<TreeLevel> levels;
    std::vector<TreeAtomRec> atoms;
    double total_discard_share = 0.0;
    double total_lump_share = 0.0;
    double lump_error_rate = 0.0;  // measured one-level variation at the lump boundary
};

/// Level-synchronous expansion of the backward-orbit tree of `root` with
/// weights |f'|_sigma^(-t) per edge. Omitted far branches of every node
/// are lumped into a pseudo-node at infinity (their chordal limit) whose
/// own fiber is the pole lattice; pruned and overflowed mass is tracked
/// per level. Deterministic for any worker count.
TreeResult backward_orbit_tree(const MapSpec& f, double t, const SpherePoint& root,
                               const TruncationPolicy& policy, const BeamParams& beam,
                               const TreeOptions& opt);

// ---------------------------------------------------------------------------
// Pressure
// ---------------------------------------------------------------------------

struct PressureEstimate {
    double t = 0.0;
    SpherePoint base;
    int depth = 0;
    std::vector<double> per_depth;   // P_n = log(S_n)/n
    std::vector<double> increments;  // d_n = log S_n - log S_{n-1}
    double extrapolated = 0.0;
    double error_bar = 0.0;
    double discard_share = 0.0;
    double lump_uncertainty = 0.0;
};

PressureEstimate pressure_estimate(const MapSpec& f, double t, const SpherePoint& base, int depth,
                                   const TruncationPolicy& policy, const BeamParams& beam);

/// A deterministic admissible base point: the candidate farthest from the
/// postsingular prefix, the asymptotic values and the nearest poles.
SpherePoint default_base_point(const MapSpec& f, const RegimeReport& regime);

struct PressureCurve {
    std::vector<double> t_grid;
    std::vector<PressureEstimate> estimates;
};

PressureCurve pressure_curve(const MapSpec& f, std::span<const double> t_grid, const SpherePoint& base,
                             int depth, const TruncationPolicy& policy, const BeamParams& beam);

// ---------------------------------------------------------------------------
// Distortion probe
// ---------------------------------------------------------------------------

struct DistortionResult {
    double empirical_K = 1.0;
    int samples_used = 0;
    int branch_losses = 0;
};

/// Empirical bounded-distortion constant: max ratio of inverse-branch
/// spherical derivatives over random branch choices and random point
/// pairs in D(w, delta). Inverse branches come from the preimage
/// enumerator polished by Newton steps.
DistortionResult distortion_probe(const MapSpec& f, const RegimeReport& regime, const SpherePoint& w,
                                  double delta, int depth, int samples, std::uint64_t seed);

}  // namespace merodim
