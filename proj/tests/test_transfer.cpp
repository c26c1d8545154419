#include "testutil.hpp"

#include "merodim/numerics.hpp"
#include "merodim/transfer.hpp"

#include <cmath>
#include <numbers>

using namespace merodim;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("closed-form operator sum: coth(1) at t=1, w=0, lambda=1") {
    // Mittag-Leffler oracle: sum over k in Z of (1+k^2 pi^2)^-1 = coth(1).
    const double coth1 = std::cosh(1.0) / std::sinh(1.0);
    const MapSpec f = MapSpec::tangent(Complex(1.0));
    TruncationPolicy pol;
    pol.k_max = 100000;
    const OperatorEval ev = transfer_one(f, 1.0, SpherePoint(Complex(0.0)), pol);
    CHECK(ev.low() <= coth1);
    CHECK(ev.high() >= coth1);
    CHECK(ev.bracket_width() <= 1e-6);
    CHECK(ev.value() == doctest::Approx(coth1).epsilon(1e-9));
}

TEST_CASE("borel threshold behavior") {
    const MapSpec f = MapSpec::tangent(Complex(1.0));
    TruncationPolicy pol;
    pol.k_max = 2000;
    for (double t : {0.40, 0.50}) {
        CHECK_THROWS_AS(static_cast<void>(transfer_one(f, t, SpherePoint(Complex(0.0)), pol)), Error);
    }
    for (double t : {0.51, 0.6, 1.0}) {
        const OperatorEval ev = transfer_one(f, t, SpherePoint(Complex(0.0)), pol);
        CHECK(std::isfinite(ev.high()));
        CHECK(!ev.tail_divergent);
    }
    // The tail machinery itself diverges exactly at (rho+1) t <= 1.
    const PreimageLattice lat = f.preimage_lattice(SpherePoint(Complex(0.0)));
    CHECK(fiber_weight_tail(lat, 0.5, 10, 10).divergent);
    CHECK(fiber_weight_tail(lat, 0.500001, 10, 10).divergent == false);
}

TEST_CASE("bracket consistency: refining k_max keeps the value inside the bracket") {
    auto gen = testutil::rng(41);
    std::uniform_real_distribution<double> ut(0.55, 2.2);
    const MapSpec f = MapSpec::tangent(Complex(0.0, kPi));
    int tested = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const double t = ut(gen);
        const Complex w = testutil::random_point(gen, 3.0);
        TruncationPolicy coarse, fine;
        coarse.k_max = 300;
        fine.k_max = 600;
        try {
            const OperatorEval lo = transfer_one(f, t, SpherePoint(w), coarse);
            const OperatorEval hi = transfer_one(f, t, SpherePoint(w), fine);
            CHECK(hi.value() >= lo.low() - 1e-12);
            CHECK(hi.value() <= lo.high() + 1e-12);
            CHECK(lo.tail_low <= lo.tail_high);
            ++tested;
        } catch (const Error& e) {
            CHECK((e.code() == "AsymptoticValue" || e.code() == "BranchPointConflict"));
        }
    }
    CHECK(tested > 80);
}

TEST_CASE("partial sums are non-decreasing in the branch budget") {
    const MapSpec f = MapSpec::tangent(Complex(1.0));
    double prev = 0.0;
    for (int k_max : {10, 100, 1000}) {
        TruncationPolicy pol;
        pol.k_max = k_max;
        const OperatorEval ev = transfer_one(f, 0.8, SpherePoint(Complex(0.3, 0.1)), pol);
        CHECK(ev.partial >= prev);
        prev = ev.partial;
    }
}

TEST_CASE("uniform bound scan: bare sums stay flat across the sphere") {
    const MapSpec f = MapSpec::tangent(Complex(0.0, kPi));
    TruncationPolicy pol;
    pol.k_max = 3000;
    const std::vector<SpherePoint> grid = sphere_grid(200);
    const ScanReport rep = uniform_bound_scan(f, 0.75, grid, pol);
    CHECK(std::isfinite(rep.sup));
    CHECK(rep.sup / rep.median <= 3.0);
    CHECK(!rep.flagged_unbounded);

    // A point almost on an asymptotic value is still bounded: the bare sum
    // carries no dist(w, A_f) factor.
    std::vector<SpherePoint> near_asym{SpherePoint(Complex(0.001, 0.0) + Complex(kPi, 0.0))};
    const ScanReport rep2 = uniform_bound_scan(f, 0.75, near_asym, pol);
    CHECK(std::isfinite(rep2.sup));
    CHECK(rep2.sup < 2.0 * rep.sup);
}

TEST_CASE("pressure base case and level determinism") {
    const MapSpec f = MapSpec::tangent(Complex(0.0, kPi));
    TruncationPolicy pol;
    BeamParams beam;
    beam.beam_width = 800;
    beam.branch_halfwidth = 32;
    const SpherePoint base(Complex(0.65, 0.45));

    const PressureEstimate p1 = pressure_estimate(f, 1.3, base, 3, pol, beam);
    const OperatorEval direct = transfer_one(f, 1.3, base, pol);
    CHECK(p1.per_depth[0] == doctest::Approx(std::log(direct.value())).epsilon(1e-6));

    // Worker count cannot change a single bit of the level sums.
    BeamParams beam2 = beam;
    beam2.workers = 2;
    const PressureEstimate p2 = pressure_estimate(f, 1.3, base, 3, pol, beam2);
    for (int i = 0; i < 3; ++i) CHECK(p1.per_depth[i] == p2.per_depth[i]);
}

TEST_CASE("pressure is strictly decreasing in t") {
    const MapSpec f = MapSpec::tangent(Complex(0.0, kPi));
    TruncationPolicy pol;
    BeamParams beam;
    beam.beam_width = 1500;
    beam.branch_halfwidth = 32;
    const SpherePoint base(Complex(0.65, 0.45));
    const std::vector<double> grid{0.6, 0.9, 1.2, 1.6, 2.0};
    std::vector<PressureEstimate> est;
    for (double t : grid) est.push_back(pressure_estimate(f, t, base, 6, pol, beam));
    for (std::size_t i = 1; i < est.size(); ++i) {
        CHECK(est[i].extrapolated < est[i - 1].extrapolated);
        // Error bars separate for spacing >= 0.15.
        CHECK(est[i].extrapolated + est[i].error_bar <
              est[i - 1].extrapolated - est[i - 1].error_bar);
    }
}

TEST_CASE("pressure is robust across admissible base points") {
    const MapSpec f = MapSpec::tangent(Complex(0.0, kPi));
    TruncationPolicy pol;
    BeamParams beam;
    beam.beam_width = 2000;
    beam.branch_halfwidth = 32;
    std::vector<PressureEstimate> est;
    for (const Complex base : {Complex(0.65, 0.45), Complex(1.3, 0.25), Complex(0.45, -0.85)})
        est.push_back(pressure_estimate(f, 1.4, SpherePoint(base), 7, pol, beam));
    for (std::size_t i = 1; i < est.size(); ++i) {
        const double gap = std::abs(est[i].extrapolated - est[0].extrapolated);
        CHECK(gap <= est[i].error_bar + est[0].error_bar + 0.02);
    }
}

TEST_CASE("near-zero pressure at t=2 on the sphere instance") {
    const MapSpec f = MapSpec::tangent(Complex(0.0, kPi));
    TruncationPolicy pol;
    BeamParams beam;
    beam.beam_width = 3000;
    beam.branch_halfwidth = 40;
    const PressureEstimate est = pressure_estimate(f, 2.0, SpherePoint(Complex(0.65, 0.45)), 8, pol, beam);
    CHECK(std::abs(est.extrapolated) <= std::max(est.error_bar, 0.04));
}

TEST_CASE("distortion probe: identity composition, shrinking disks, measured constant") {
    const MapSpec f = MapSpec::tangent(Complex(0.0, kPi));
    const RegimeReport rep = classify_regime(f, 40, 1e6);
    const SpherePoint w(Complex(1.2, 0.8));
    const DistortionResult k0 = distortion_probe(f, rep, w, 0.05, 0, 50, 7);
    CHECK(k0.empirical_K == 1.0);

    const DistortionResult small_disk = distortion_probe(f, rep, w, 1e-4, 6, 120, 7);
    CHECK(small_disk.empirical_K < 1.01);

    const DistortionResult probe = distortion_probe(f, rep, w, 0.05, 10, 500, 7);
    CHECK(probe.empirical_K >= 1.0);
    CHECK(probe.empirical_K <= 4.0);  // measured fixture on this instance
}

TEST_CASE("sphere grid covers both hemispheres and reaches infinity handling") {
    const std::vector<SpherePoint> grid = sphere_grid(64);
    int small = 0, large = 0;
    for (const SpherePoint& p : grid) {
        if (p.is_infinity() || p.modulus() > 1.0) ++large;
        else ++small;
    }
    CHECK(small > 20);
    CHECK(large > 20);
}
