#include "merodim/sphere.hpp"

#include <cmath>
#include <limits>

namespace merodim {

double SpherePoint::modulus() const {
    if (inf_) return std::numeric_limits<double>::infinity();
    return std::hypot(z_.real(), z_.imag());
}

namespace {

// sqrt(1+|z|^2) without squaring overflow.
double lift(const Complex& z) {
    return std::hypot(1.0, std::hypot(z.real(), z.imag()));
}

}  // namespace

double chordal_dist(const SpherePoint& p, const SpherePoint& q) {
    if (p.is_infinity() && q.is_infinity()) return 0.0;
    if (p.is_infinity()) return 1.0 / lift(q.value());
    if (q.is_infinity()) return 1.0 / lift(p.value());
    const Complex a = p.value();
    const Complex b = q.value();
    const double d = std::abs(a - b) / (lift(a) * lift(b));
    return std::min(d, 1.0);
}

SpherePoint MobiusMap::apply(const SpherePoint& z) const {
    if (z.is_infinity()) {
        if (c == Complex(0.0)) return SpherePoint::infinity();
        return SpherePoint(a / c);
    }
    const Complex num = a * z.value() + b;
    const Complex den = c * z.value() + d;
    if (den == Complex(0.0)) return SpherePoint::infinity();
    return SpherePoint(num / den);
}

Complex MobiusMap::derivative(Complex z) const {
    const Complex den = c * z + d;
    return det() / (den * den);
}

MobiusMap MobiusMap::compose(const MobiusMap& inner) const {
    // this(inner(z)) by coefficient product.
    MobiusMap m;
    m.a = a * inner.a + b * inner.c;
    m.b = a * inner.b + b * inner.d;
    m.c = c * inner.a + d * inner.c;
    m.d = c * inner.b + d * inner.d;
    return m;
}

MobiusMap MobiusMap::inverse() const {
    MobiusMap m;
    m.a = d;
    m.b = -b;
    m.c = -c;
    m.d = a;
    return m;
}

MobiusMap make_mobius(Complex a, Complex b, Complex c, Complex d) {
    MobiusMap m{a, b, c, d};
    if (std::abs(m.det()) == 0.0) throw Error("DegenerateMobius", "ad - bc must be nonzero");
    return m;
}

double spherical_derivative(const MobiusMap& m, const SpherePoint& z) {
    if (z.is_infinity()) {
        // Chart w = 1/z at the source: (M(1/w))' at w=0.
        if (m.c == Complex(0.0)) {
            // M(1/w) = (a/w + b)/d = (a + bw)/(dw): pole at w=0, target inf.
            // Spherical derivative via double chart: d(1/M(1/w))/dw at 0.
            const Complex dv = m.d / m.a;
            return std::abs(dv);
        }
        const Complex target = m.a / m.c;  // M(inf)
        // M(1/w) = (a + bw)/(c + dw); derivative at w=0: (bc - ad)/c^2.
        const Complex dv = -m.det() / (m.c * m.c);
        return std::abs(dv) / (1.0 + std::norm(target));
    }
    const Complex zz = z.value();
    const Complex den = m.c * zz + m.d;
    if (den == Complex(0.0)) {
        // Pole of the Mobius map: measure 1/M in the target chart.
        // (1/M)'(z) = -M'/M^2 = -(ad-bc)/(az+b)^2.
        const Complex num = m.a * zz + m.b;
        return std::abs(m.det()) / std::norm(num) * (1.0 + std::norm(zz));
    }
    const Complex fz = (m.a * zz + m.b) / den;
    const double d1 = std::abs(m.det()) / std::norm(den);
    return d1 * (1.0 + std::norm(zz)) / (1.0 + std::norm(fz));
}

Complex schwarzian_fd(const std::function<Complex(Complex)>& f, Complex z, double step) {
    if (!(step > 0.0)) throw Error("NumericallyUnstable", "step must be positive");
    const double h = step;
    const Complex fp3 = f(z + Complex(3 * h)), fp2 = f(z + Complex(2 * h)), fp1 = f(z + Complex(h));
    const Complex fm1 = f(z - Complex(h)), fm2 = f(z - Complex(2 * h)), fm3 = f(z - Complex(3 * h));
    const Complex f0 = f(z);
    // 4th-order central stencils.
    const Complex d1 = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h);
    const Complex d2 = (-fp2 + 16.0 * fp1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * h * h);
    const Complex d3 = (fp3 - 8.0 * fp2 + 13.0 * fp1 - 13.0 * fm1 + 8.0 * fm2 - fm3) / (8.0 * h * h * h);
    if (std::abs(d1) < 1e-12) throw Error("NumericallyUnstable", "|f'| below stability floor");
    return schwarzian_from_derivatives(d1, d2, d3);
}

Complex schwarzian_from_derivatives(Complex d1, Complex d2, Complex d3) {
    const Complex q = d2 / d1;
    return d3 / d1 - 1.5 * q * q;
}

}  // namespace merodim
