#include "testutil.hpp"

#include "merodim/map_family.hpp"

#include <cmath>

using namespace merodim;

TEST_CASE("chordal distance closed-form cases") {
    CHECK(chordal_dist(SpherePoint(Complex(0.0)), SpherePoint::infinity()) == 1.0);
    CHECK(chordal_dist(SpherePoint(Complex(2.0, -1.0)), SpherePoint(Complex(2.0, -1.0))) == 0.0);
    CHECK(chordal_dist(SpherePoint(Complex(0.0)), SpherePoint(Complex(1.0))) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("chordal distance is symmetric, bounded and satisfies the triangle inequality") {
    auto gen = testutil::rng(21);
    std::uniform_real_distribution<double> pick(0.0, 1.0);
    for (int trial = 0; trial < 4000; ++trial) {
        const auto draw = [&]() {
            if (pick(gen) < 0.05) return SpherePoint::infinity();
            return SpherePoint(testutil::random_point(gen, 20.0));
        };
        const SpherePoint a = draw(), b = draw(), c = draw();
        const double ab = chordal_dist(a, b), ba = chordal_dist(b, a);
        const double bc = chordal_dist(b, c), ac = chordal_dist(a, c);
        CHECK(ab == ba);
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        CHECK(ac <= ab + bc + 1e-12);
    }
}

TEST_CASE("mobius plumbing: determinant guard, composition, inverse") {
    CHECK_THROWS_AS(make_mobius(Complex(1.0), Complex(2.0), Complex(2.0), Complex(4.0)), Error);
    const MobiusMap m = make_mobius(Complex(2.0, 1.0), Complex(0.0, -1.0), Complex(1.0), Complex(3.0));
    const MobiusMap id = m.compose(m.inverse());
    auto gen = testutil::rng(22);
    for (int i = 0; i < 50; ++i) {
        const Complex z = testutil::random_point(gen);
        const Complex w = id.apply(SpherePoint(z)).value();
        // compose(inverse) is a scalar multiple of the identity matrix
        CHECK(std::abs(w - z) < 1e-12);
    }
}

TEST_CASE("spherical derivative of the identity map is 1 everywhere") {
    auto gen = testutil::rng(23);
    for (int i = 0; i < 30; ++i) {
        const SpherePoint z(testutil::random_point(gen, 50.0));
        CHECK(spherical_derivative(MobiusMap::identity(), z) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(spherical_derivative(MobiusMap::identity(), SpherePoint::infinity()) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rotations of the sphere preserve the spherical metric") {
    // z -> (cos z - sin)/(sin z + cos) style rotation (unitary coefficients).
    const double th = 0.37;
    const MobiusMap rot{Complex(std::cos(th)), Complex(-std::sin(th)), Complex(std::sin(th)),
                        Complex(std::cos(th))};
    auto gen = testutil::rng(24);
    for (int i = 0; i < 200; ++i) {
        const SpherePoint z(testutil::random_point(gen, 10.0));
        CHECK(spherical_derivative(rot, z) == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("finite-difference schwarzian of a mobius map vanishes") {
    const MobiusMap m = make_mobius(Complex(1.0, 0.5), Complex(-0.3), Complex(0.2), Complex(1.0));
    const auto call = [&](Complex z) { return m.apply(SpherePoint(z)).value(); };
    auto gen = testutil::rng(25);
    for (int i = 0; i < 20; ++i) {
        const Complex z = testutil::random_point(gen, 1.5);
        if (std::abs(m.c * z + m.d) < 0.3) continue;
        CHECK(std::abs(schwarzian_fd(call, z, 5e-3)) < 1e-7);
    }
}

TEST_CASE("schwarzian of the tangent family is the constant 2") {
    // Closed-form derivative path against the finite-difference fallback.
    auto gen = testutil::rng(26);
    std::uniform_real_distribution<double> mag(0.3, 2.0), arg(0.0, 6.28);
    for (int trial = 0; trial < 5; ++trial) {
        const Complex lambda = std::polar(mag(gen), arg(gen));
        const MapSpec f = MapSpec::tangent(lambda);
        for (int i = 0; i < 100; ++i) {
            Complex z = testutil::random_point(gen, 1.3);
            if (std::abs(f.derivative(z)) < 1e-3) continue;
            const Complex s_exact = schwarzian_from_derivatives(f.derivative(z), f.derivative2(z),
                                                                f.derivative3(z));
            CHECK(std::abs(s_exact - Complex(2.0)) < 1e-8);
            CHECK(std::abs(s_exact - f.schwarzian_constant()) < 1e-8);
        }
        // The numeric fallback agrees with the closed form at a looser tolerance.
        const Complex z(0.4, 0.3);
        const Complex s_fd = schwarzian_fd([&](Complex w) { return f.eval(SpherePoint(w)).value(); }, z, 1e-2);
        CHECK(std::abs(s_fd - Complex(2.0)) < 1e-5);
    }
}

TEST_CASE("schwarzian is invariant under postcomposition with mobius maps") {
    const MapSpec f = MapSpec::tangent(Complex(0.8, 0.4));
    auto gen = testutil::rng(27);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int tested = 0;
    for (int i = 0; i < 1000 && tested < 1000; ++i) {
        const MobiusMap m{Complex(1.0 + u(gen), u(gen)), Complex(u(gen), u(gen)),
                          Complex(0.3 * u(gen), 0.3 * u(gen)), Complex(1.0 + u(gen), u(gen))};
        if (std::abs(m.det()) < 0.2) continue;
        const Complex z = testutil::random_point(gen, 1.2);
        const Complex fz = f.eval(SpherePoint(z)).value();
        if (std::abs(m.c * fz + m.d) < 0.2 || std::abs(f.derivative(z)) < 1e-2) continue;
        // S(M o f) from the chain rule: S(M)=0, so S(M o f) = S(f).
        const Complex d1 = m.derivative(fz) * f.derivative(z);
        const Complex md2 = -2.0 * m.c * m.det() / std::pow(m.c * fz + m.d, 3);
        const Complex md3 = 6.0 * m.c * m.c * m.det() / std::pow(m.c * fz + m.d, 4);
        const Complex d2 = md2 * f.derivative(z) * f.derivative(z) + m.derivative(fz) * f.derivative2(z);
        const Complex d3 = md3 * std::pow(f.derivative(z), 3) +
                           3.0 * md2 * f.derivative(z) * f.derivative2(z) +
                           m.derivative(fz) * f.derivative3(z);
        const Complex s_comp = schwarzian_from_derivatives(d1, d2, d3);
        const Complex s_f = schwarzian_from_derivatives(f.derivative(z), f.derivative2(z), f.derivative3(z));
        CHECK(std::abs(s_comp - s_f) < 1e-8);
        ++tested;
    }
    CHECK(tested > 500);
}

TEST_CASE("mobius-exp family has constant schwarzian -2") {
    const MapSpec g = MapSpec::mobius_exp(Complex(1.0), Complex(0.2, 0.1), Complex(0.4), Complex(1.0));
    auto gen = testutil::rng(28);
    for (int i = 0; i < 100; ++i) {
        const Complex z = testutil::random_point(gen, 1.0);
        if (std::abs(g.derivative(z)) < 1e-3) continue;
        const Complex s = schwarzian_from_derivatives(g.derivative(z), g.derivative2(z), g.derivative3(z));
        CHECK(std::abs(s - Complex(-2.0)) < 1e-8);
    }
}
