#pragma once

#include "merodim/transfer.hpp"

#include <string>
#include <utility>
#include <vector>

namespace merodim {

struct DimensionEstimate {
    double h = 0.0;
    std::pair<double, double> bracket{0.0, 0.0};
    std::string method;  // PressureRoot | Ulam | BoxCount | PoincareCutoff
    double residual = 0.0;
    std::string flag;  // "", "JuliaLikelySphere", "InconsistentTruncation"
    std::string map_label;
};

/// Enforces the universal chain rho/(rho+1) < h <= 2 on every emitted
/// estimate; violations are a logic error, not a report.
void validate_dimension_estimate(const DimensionEstimate& est, double rho);

/// Bisection for the zero of the extrapolated pressure on
/// [rho/(rho+1)+0.02, 2]. Stops at bisect_tol or when the error bars
/// straddle zero, in which case the certified interval is the bracket.
DimensionEstimate pressure_root(const MapSpec& f, const RegimeReport& regime,
                                const TruncationPolicy& policy, const BeamParams& beam, int depth,
                                double bisect_tol);

struct UlamResult {
    double log_eigenvalue = 0.0;
    int iterations = 0;
    int bins = 0;
};

/// Backward Ulam discretization on a real interval: rows are target bins,
/// entries sum |f'|_sigma^{-t} over the real preimage branches landing in
/// the source bin, plus a far-tail state at infinity whose fiber is the
/// pole lattice. Leading eigenvalue by power iteration.
UlamResult ulam_pressure(const MapSpec& f, double t, double lo, double hi, int bins,
                         bool tail_state = true);

DimensionEstimate ulam_root(const MapSpec& f, const RegimeReport& regime, double lo, double hi,
                            int bins, double bisect_tol);

struct BoundsReport {
    bool pass = false;
    std::vector<std::string> lines;
};

/// Checks the applicable chain of bounds on h: the universal one always,
/// the sub-expanding strengthening 2 rho/(rho+1) < h when the regime
/// classification warrants it.
BoundsReport bounds_check(const DimensionEstimate& est, const RegimeReport& regime, double rho);

}  // namespace merodim
