#pragma once

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>

namespace merodim {

using Complex = std::complex<double>;

/// Error with a stable machine-readable code; the CLI puts the code into
/// its JSON error records (exit 3).
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(code + ": " + what), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

/// A point of the Riemann sphere: a finite complex number or the point at
/// infinity. The infinity marker carries no numeric payload.
class SpherePoint {
public:
    SpherePoint() : z_(0.0, 0.0), inf_(false) {}
    SpherePoint(Complex z) : z_(z), inf_(false) {}  // NOLINT(google-explicit-constructor)
    SpherePoint(double x) : z_(x, 0.0), inf_(false) {}  // NOLINT(google-explicit-constructor)

    static SpherePoint infinity() {
        SpherePoint p;
        p.inf_ = true;
        return p;
    }

    bool is_infinity() const { return inf_; }

    Complex value() const {
        if (inf_) throw Error("InfinityPayload", "point at infinity has no finite value");
        return z_;
    }

    /// |z|, +inf for the infinity marker.
    double modulus() const;

private:
    Complex z_;
    bool inf_;
};

/// Chordal distance on the Riemann sphere, normalized without the factor-2
/// convention: [p,q] = |p-q| / sqrt((1+|p|^2)(1+|q|^2)), and [p,inf] =
/// 1/sqrt(1+|p|^2). Always in [0,1].
double chordal_dist(const SpherePoint& p, const SpherePoint& q);

/// z -> (az+b)/(cz+d) with ad-bc != 0.
struct MobiusMap {
    Complex a{1.0}, b{0.0}, c{0.0}, d{1.0};

    static MobiusMap identity() { return MobiusMap{}; }

    Complex det() const { return a * d - b * c; }
    SpherePoint apply(const SpherePoint& z) const;
    Complex derivative(Complex z) const;  // (ad-bc)/(cz+d)^2
    MobiusMap compose(const MobiusMap& inner) const;
    MobiusMap inverse() const;
};

MobiusMap make_mobius(Complex a, Complex b, Complex c, Complex d);

/// Derivative of a Mobius map in the spherical metric.
double spherical_derivative(const MobiusMap& m, const SpherePoint& z);

/// Schwarzian derivative (f''/f')' - (1/2)(f''/f')^2 by 4th-order central
/// differences with spacing `step`. Fallback path; family instances carry
/// closed-form derivatives and should be preferred (see map_family).
Complex schwarzian_fd(const std::function<Complex(Complex)>& f, Complex z, double step);

/// Schwarzian from closed-form derivative values: f'''/f' - (3/2)(f''/f')^2.
Complex schwarzian_from_derivatives(Complex d1, Complex d2, Complex d3);

}  // namespace merodim
