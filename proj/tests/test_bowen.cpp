#include "testutil.hpp"

#include "merodim/bowen.hpp"

#include <cmath>
#include <numbers>

using namespace merodim;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("degenerate tolerance: one evaluation, full-interval bracket") {
    const MapSpec f = MapSpec::tangent(Complex(0.0, kPi));
    const RegimeReport rep = classify_regime(f, 40, 1e6);
    TruncationPolicy pol;
    BeamParams beam;
    beam.beam_width = 1200;
    beam.branch_halfwidth = 32;
    const double full_width = 2.0 - (0.5 + 0.02);
    const DimensionEstimate est = pressure_root(f, rep, pol, beam, 6, full_width);
    CHECK(est.bracket.second - est.bracket.first <= full_width + 1e-12);
    CHECK(est.h > 0.5);
    CHECK(est.h <= 2.0);
}

TEST_CASE("sphere instance: pressure root lands at 2 or flags the sphere") {
    const MapSpec f = MapSpec::tangent(Complex(0.0, kPi));
    const RegimeReport rep = classify_regime(f, 40, 1e6);
    TruncationPolicy pol;
    BeamParams beam;
    beam.beam_width = 2500;
    beam.branch_halfwidth = 36;
    const DimensionEstimate est = pressure_root(f, rep, pol, beam, 8, 0.02);
    const bool ok = (est.flag == "JuliaLikelySphere" && est.h == 2.0) || std::abs(est.h - 2.0) <= 0.05;
    CHECK(ok);
    const BoundsReport bounds = bounds_check(est, rep, f.order());
    CHECK(bounds.pass);
}

TEST_CASE("ulam bins=1 reduces to the restricted operator sum") {
    const MapSpec f = MapSpec::tangent(Complex(0.5));
    const UlamResult u = ulam_pressure(f, 1.0, 1.1, 1.4, 1, false);
    TruncationPolicy pol;
    pol.k_max = 1;
    pol.radius_cut = 1.45;
    const OperatorEval direct = transfer_one(f, 1.0, SpherePoint(Complex(1.25, 0.0)), pol);
    CHECK(std::exp(u.log_eigenvalue) == doctest::Approx(direct.partial).epsilon(1e-10));
}

TEST_CASE("ulam log-eigenvalue is strictly decreasing in t") {
    const MapSpec f = MapSpec::tangent(Complex(0.5));
    double prev = 1e9;
    for (double t : {0.55, 0.7, 0.9, 1.2, 1.6, 2.0}) {
        const UlamResult u = ulam_pressure(f, t, -6.0 * kPi, 6.0 * kPi, 600);
        CHECK(u.log_eigenvalue < prev);
        prev = u.log_eigenvalue;
    }
}

TEST_CASE("ulam rejects complex parameters") {
    CHECK_THROWS_AS(static_cast<void>(ulam_pressure(MapSpec::tangent(Complex(0.0, kPi)), 1.0, -3, 3, 50)),
                    Error);
}

TEST_CASE("pressure and ulam dimension estimates agree on the hyperbolic line") {
    const MapSpec f = MapSpec::tangent(Complex(0.5));
    const RegimeReport rep = classify_regime(f, 80, 1e6);
    TruncationPolicy pol;
    BeamParams beam;
    beam.beam_width = 2500;
    beam.branch_halfwidth = 36;
    const DimensionEstimate pr = pressure_root(f, rep, pol, beam, 8, 0.02);
    const DimensionEstimate ul = ulam_root(f, rep, -8.0 * kPi, 8.0 * kPi, 1200, 0.005);
    CHECK(std::abs(pr.h - ul.h) <= 0.05);
    CHECK(pr.bracket.first > 0.5);
    CHECK(pr.bracket.second <= 1.0);
}

TEST_CASE("pressure root is stable under refined truncation") {
    const MapSpec f = MapSpec::tangent(Complex(0.5));
    const RegimeReport rep = classify_regime(f, 80, 1e6);
    TruncationPolicy pol;
    BeamParams beam;
    beam.beam_width = 1500;
    beam.branch_halfwidth = 28;
    const DimensionEstimate coarse = pressure_root(f, rep, pol, beam, 6, 0.02);
    BeamParams finer = beam;
    finer.branch_halfwidth = 56;
    const DimensionEstimate fine = pressure_root(f, rep, pol, finer, 8, 0.02);
    const double tol = 0.5 * ((coarse.bracket.second - coarse.bracket.first) +
                              (fine.bracket.second - fine.bracket.first)) +
                       0.02;
    CHECK(std::abs(coarse.h - fine.h) <= tol);
}

TEST_CASE("bounds check applies the regime-gated chain") {
    RegimeReport sub;
    sub.regime = Regime::SubExpanding;
    RegimeReport hyp;
    hyp.regime = Regime::Hyperbolic;

    DimensionEstimate at2;
    at2.h = 2.0;
    at2.bracket = {1.95, 2.0};
    CHECK(bounds_check(at2, sub, 1.0).pass);  // 1 < 2 <= 2

    DimensionEstimate mid;
    mid.h = 0.8;
    mid.bracket = {0.75, 0.85};
    CHECK(bounds_check(mid, hyp, 1.0).pass);   // only the universal chain
    CHECK(!bounds_check(mid, sub, 1.0).pass);  // fails the strengthened bound

    DimensionEstimate low;
    low.h = 0.4;
    low.bracket = {0.35, 0.45};
    CHECK(!bounds_check(low, hyp, 1.0).pass);
    CHECK_THROWS_AS(validate_dimension_estimate(low, 1.0), Error);
}
