#pragma once

#include "merodim/transfer.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace merodim {

/// Partial data of the series sum_n L_t^n 1(inf): per-depth terms from the
/// backward-orbit tree rooted at the pole fiber.
struct PoincarePartial {
    double t = 0.0;
    std::vector<double> log_terms;     // log a_n, n = 1..n_max
    std::vector<double> log_partials;  // log sum_{m<=n} a_m
    double discard_share = 0.0;
};

PoincarePartial poincare_partial(const MapSpec& f, double t, int n_max,
                                 const TruncationPolicy& policy, const BeamParams& beam);

enum class SeriesClass { Convergent, Divergent, Inconclusive };

struct SeriesDiagnostics {
    SeriesClass cls = SeriesClass::Inconclusive;
    double fitted_ratio = 1.0;
    double sigma = 0.05;
};

/// Divergence classification of a positive series given per-term logs.
/// Short streams (tree depths) get a geometric fit of the terms; long
/// streams are judged by dyadic block-sum ratios, which classify power
/// tails correctly where the per-term ratio is blind.
SeriesDiagnostics classify_log_terms(std::span<const double> log_terms, double sigma);

struct ExponentEstimate {
    double h = 0.0;
    std::pair<double, double> bracket{0.0, 0.0};
    std::string method = "PoincareCutoff";
    struct PerT {
        double t;
        SeriesClass cls;
        double ratio;
    };
    std::vector<PerT> diagnostics;
    bool inconsistent_regime = false;
};

/// Convergence-exponent estimate of h over the given t grid. Bracket ends
/// are the last divergent and first convergent grid points; the upper end
/// falls back to 2 (the universal cap) when the whole grid diverges.
ExponentEstimate estimate_h(const MapSpec& f, const RegimeReport& regime,
                            std::span<const double> t_grid, int n_max,
                            const TruncationPolicy& policy, const BeamParams& beam);

// ---------------------------------------------------------------------------
// Patterson-Sullivan atomic measure
// ---------------------------------------------------------------------------

struct Atom {
    Complex z;
    double weight = 0.0;
    int depth = 0;
};

class AtomicMeasure {
public:
    AtomicMeasure(std::vector<Atom> atoms, double s, double normalization, int depth_max,
                  double discarded_mass_bound);

    const std::vector<Atom>& atoms() const { return atoms_; }
    double exponent() const { return s_; }
    double normalization() const { return z_; }
    int depth_max() const { return depth_max_; }
    double discarded_mass_bound() const { return discarded_; }

    double mass_above_radius(double r) const;
    double mass_in_disk(const Complex& center, double radius) const;

    /// Columnar text format, one atom per line: re im weight depth.
    void save(const std::string& path) const;
    static AtomicMeasure load(const std::string& path);

private:
    std::vector<Atom> atoms_;
    double s_ = 0.0;
    double z_ = 1.0;
    int depth_max_ = 0;
    double discarded_ = 0.0;
};

/// Atomic approximation of the conformal measure at the strictly
/// supercritical exponent s: atoms at the backward-orbit tree nodes of
/// infinity with weights |(f^n)'|_sigma^{-s} / Z. When an h bracket is
/// supplied, s must clear its upper end by 0.02.
AtomicMeasure build_ps_measure(const MapSpec& f, double s, int depth_max,
                               const TruncationPolicy& policy, const BeamParams& beam,
                               const std::pair<double, double>* h_bracket = nullptr);

// ---------------------------------------------------------------------------
// Conformality and tightness diagnostics
// ---------------------------------------------------------------------------

struct ChordalDisk {
    Complex center;
    double radius = 0.0;
};

struct CellRatio {
    ChordalDisk cell;
    double ratio = 0.0;       // m(f(E)) / int_E |f'|^h_test dm
    double mass_in = 0.0;
    double mass_image = 0.0;
    int atoms_in = 0;
    double mean_log_deriv = 0.0;
};

struct ConformalityReport {
    std::vector<CellRatio> cells;
    double summary_c = 1.0;   // max(ratio, 1/ratio) over cells
    double drift_slope = 0.0; // d log ratio / d log|f'| across cells
    double drift_r2 = 0.0;
    bool non_conformal = false;
    double h_test = 0.0;
};

ConformalityReport conformality_check(const MapSpec& f, const AtomicMeasure& m,
                                      std::span<const ChordalDisk> cells, double h_test);

/// Identity-transport control: every ratio is exactly 1 by construction.
ConformalityReport conformality_identity_control(const AtomicMeasure& m,
                                                 std::span<const ChordalDisk> cells);

/// Cells centered at atoms of median depth, pairwise separated, away from
/// the singular set, each holding at least `min_atoms` atoms.
std::vector<ChordalDisk> default_conformality_cells(const MapSpec& f, const AtomicMeasure& m,
                                                    const RegimeReport& regime, int count,
                                                    double radius, int min_atoms = 50);

struct TightnessProfile {
    std::vector<double> radii;
    std::vector<double> masses;
    double fitted_exponent = 0.0;
    double r2 = 0.0;
};

TightnessProfile tightness_profile(const AtomicMeasure& m, std::span<const double> radii);

}  // namespace merodim
