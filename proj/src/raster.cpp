#include "merodim/raster.hpp"

#include "merodim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <unordered_set>

namespace merodim {

namespace {

constexpr double kTrapRadius = 0.05;

double dist_to_cycle(const SpherePoint& z, const std::vector<Complex>& cycle) {
    double d = 1.0;
    for (const Complex& c : cycle) d = std::min(d, chordal_dist(z, SpherePoint(c)));
    return d;
}

}  // namespace

ClassifyResult classify_point(const MapSpec& f, const RegimeReport& regime, const SpherePoint& z0,
                              int max_iter) {
    if (regime.regime != Regime::Hyperbolic)
        throw Error("UnsupportedRegime", "attraction-based classification needs the hyperbolic regime");
    ClassifyResult res;
    SpherePoint z = z0;
    double last_dist = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        if (z.is_infinity()) {
            // Prepole: infinity belongs to the Julia set.
            res.cls = PointClass::Julia;
            res.iterations = it;
            return res;
        }
        last_dist = dist_to_cycle(z, regime.attracting_cycle);
        if (last_dist < kTrapRadius) {
            res.cls = PointClass::Fatou;
            res.attractor_id = 0;
            res.iterations = it;
            return res;
        }
        try {
            z = f.eval(z);
        } catch (const Error&) {
            res.cls = PointClass::Julia;
            res.iterations = it;
            return res;
        }
    }
    res.iterations = max_iter;
    res.cls = last_dist < 4.0 * kTrapRadius ? PointClass::Undecided : PointClass::Julia;
    return res;
}

// ---------------------------------------------------------------------------
// Real-line Cantor refinement
// ---------------------------------------------------------------------------

namespace {

double repelling_fixed_point(double lambda) {
    // Unique solution of lambda tan(x) = x in (0, pi/2) for lambda in (0,1).
    double lo = 1e-9, hi = std::numbers::pi / 2.0 - 1e-9;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double g = lambda * std::tan(mid) - mid;
        (g < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

RealJuliaRefinement refine_real_julia(const MapSpec& f, double window_lo, double window_hi,
                                      int depth, const RealJuliaOptions& opt) {
    if (f.family() != Family::Tangent || f.lambda().imag() != 0.0 || f.lambda().real() <= 0.0 ||
        f.lambda().real() >= 1.0)
        throw Error("ComplexParameter", "real-line refinement needs real lambda in (0,1)");
    if (window_hi <= window_lo) throw Error("InvalidArgument", "empty window");
    const double lambda = f.lambda().real();
    const double xstar = repelling_fixed_point(lambda);
    const double B = opt.source_cap;

    // Active sources on [-B, B]; frozen pieces are below the length floor
    // and only retained inside the reporting window.
    std::vector<Interval> active{{-B, -xstar, false}, {xstar, B, false}};
    std::vector<Interval> frozen;

    const int k_lo = static_cast<int>(std::floor((-B) / std::numbers::pi));
    const int k_hi = static_cast<int>(std::ceil(B / std::numbers::pi));

    for (int d = 0; d < depth; ++d) {
        std::vector<Interval> next;
        next.reserve(active.size() * 8);
        for (const Interval& iv : active) {
            // Branch images arctan(y/lambda) + k pi of the source values.
            const double blo = std::atan(iv.lo / lambda);
            const double bhi = std::atan(iv.hi / lambda);
            for (int k = k_lo; k <= k_hi; ++k) {
                Interval child{blo + k * std::numbers::pi, bhi + k * std::numbers::pi, false};
                if (child.hi < -B || child.lo > B) continue;
                child.lo = std::max(child.lo, -B);
                child.hi = std::min(child.hi, B);
                if (child.length() <= 0.0) continue;
                if (child.length() < opt.length_floor) {
                    if (child.hi >= window_lo && child.lo <= window_hi) frozen.push_back(child);
                } else {
                    next.push_back(child);
                }
            }
        }
        // Unresolved far-tail stubs: preimages of |y| > B accumulate at the
        // poles; with the default source cap they are below the floor.
        const double gap_lo = std::atan(B / lambda);
        for (int k = k_lo; k <= k_hi; ++k) {
            const double pole = std::numbers::pi / 2.0 + k * std::numbers::pi;
            const Interval right_stub{gap_lo + k * std::numbers::pi, pole, true};
            const Interval left_stub{pole, std::numbers::pi - gap_lo + k * std::numbers::pi, true};
            for (const Interval& stub : {right_stub, left_stub}) {
                if (stub.hi >= window_lo && stub.lo <= window_hi && stub.length() > 0.0)
                    frozen.push_back(stub);
            }
        }
        if (next.size() > static_cast<std::size_t>(opt.max_active))
            throw Error("InvalidArgument", "refinement outgrew the active budget; raise length_floor");
        active = std::move(next);
        // Keep frozen pieces from this level only (they repeat each level).
        std::sort(frozen.begin(), frozen.end(), [](const Interval& a, const Interval& b) {
            return a.lo < b.lo;
        });
        frozen.erase(std::unique(frozen.begin(), frozen.end(),
                                 [](const Interval& a, const Interval& b) {
                                     return std::abs(a.lo - b.lo) < 1e-15 &&
                                            std::abs(a.hi - b.hi) < 1e-15;
                                 }),
                     frozen.end());
    }

    RealJuliaRefinement out;
    out.depth = depth;
    out.repelling_fixed_point = xstar;
    for (const Interval& iv : active) {
        if (iv.hi < window_lo || iv.lo > window_hi) continue;
        Interval clipped{std::max(iv.lo, window_lo), std::min(iv.hi, window_hi), false};
        if (clipped.length() > 0.0) out.intervals.push_back(clipped);
    }
    for (const Interval& iv : frozen) {
        Interval clipped{std::max(iv.lo, window_lo), std::min(iv.hi, window_hi), iv.stub};
        if (clipped.length() > 0.0) out.intervals.push_back(clipped);
    }
    std::sort(out.intervals.begin(), out.intervals.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    CompensatedSum len;
    for (const Interval& iv : out.intervals) len.add(iv.length());
    out.total_length = len.value();
    return out;
}

// ---------------------------------------------------------------------------
// Box counting
// ---------------------------------------------------------------------------

namespace {

void check_scales(std::span<const double> scales) {
    if (scales.size() < 2) throw Error("DegenerateScales", "need at least two scales");
    for (double s : scales)
        if (!(s > 0.0) || !std::isfinite(s)) throw Error("DegenerateScales", "scales must be positive");
}

BoxCountResult finish_boxes(std::vector<double> scales, std::vector<long> counts) {
    BoxCountResult res;
    // Sort by scale ascending; counts then run descending.
    std::vector<std::size_t> idx(scales.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scales[a] < scales[b]; });
    std::vector<double> xs, ys;
    for (std::size_t i : idx) {
        res.scales.push_back(scales[i]);
        res.counts.push_back(counts[i]);
        if (counts[i] > 0) {
            xs.push_back(std::log(1.0 / scales[i]));
            ys.push_back(std::log(static_cast<double>(counts[i])));
        }
    }
    if (xs.size() < 2) throw Error("DegenerateScales", "not enough nonempty scales for a slope");
    const LineFit fit = fit_line(xs, ys);
    res.slope = fit.slope;
    res.r2 = fit.r2;
    return res;
}

}  // namespace

BoxCountResult box_count_intervals(std::span<const Interval> intervals,
                                   std::span<const double> scales) {
    check_scales(scales);
    if (intervals.empty()) throw Error("InvalidArgument", "no intervals to count");
    std::vector<double> sc(scales.begin(), scales.end());
    std::vector<long> counts;
    double lo = intervals.front().lo, hi = intervals.front().hi;
    for (const Interval& iv : intervals) {
        lo = std::min(lo, iv.lo);
        hi = std::max(hi, iv.hi);
    }
    for (double eps : sc) {
        // Occupied cells floor(x/eps) as a union of integer ranges.
        std::vector<std::pair<long, long>> cells;
        cells.reserve(intervals.size());
        for (const Interval& iv : intervals)
            cells.emplace_back(static_cast<long>(std::floor(iv.lo / eps)),
                               static_cast<long>(std::floor(iv.hi / eps)));
        std::sort(cells.begin(), cells.end());
        long count = 0;
        long cursor = std::numeric_limits<long>::min();
        for (const auto& [a, b] : cells) {
            const long start = std::max(a, cursor + 1);
            if (b >= start) {
                count += b - start + 1;
                cursor = b;
            } else {
                cursor = std::max(cursor, b);
            }
        }
        counts.push_back(count);
    }
    BoxCountResult res = finish_boxes(std::move(sc), std::move(counts));
    res.region = {lo, hi, 0.0, 0.0};
    return res;
}

BoxCountResult box_count_points(std::span<const Complex> points, std::span<const double> scales) {
    check_scales(scales);
    if (points.empty()) throw Error("InvalidArgument", "no points to count");
    std::vector<double> sc(scales.begin(), scales.end());
    std::vector<long> counts;
    double x0 = points[0].real(), x1 = x0, y0 = points[0].imag(), y1 = y0;
    for (const Complex& p : points) {
        x0 = std::min(x0, p.real());
        x1 = std::max(x1, p.real());
        y0 = std::min(y0, p.imag());
        y1 = std::max(y1, p.imag());
    }
    for (double eps : sc) {
        std::unordered_set<long long> cells;
        cells.reserve(points.size());
        for (const Complex& p : points) {
            const long long cx = static_cast<long long>(std::floor(p.real() / eps));
            const long long cy = static_cast<long long>(std::floor(p.imag() / eps));
            cells.insert(cx * 2000003LL + cy);
        }
        counts.push_back(static_cast<long>(cells.size()));
    }
    BoxCountResult res = finish_boxes(std::move(sc), std::move(counts));
    res.region = {x0, x1, y0, y1};
    return res;
}

// ---------------------------------------------------------------------------
// Raster
// ---------------------------------------------------------------------------

RasterResult raster_region(const MapSpec& f, const RegimeReport& regime,
                           const std::array<double, 4>& region, int nx, int ny, int max_iter,
                           unsigned workers) {
    if (nx < 1 || ny < 1) throw Error("InvalidArgument", "raster needs positive dimensions");
    RasterResult out;
    out.nx = nx;
    out.ny = ny;
    out.region = region;
    out.pixels.assign(static_cast<std::size_t>(nx) * ny, 128);
    const double dx = (region[1] - region[0]) / nx;
    const double dy = (region[3] - region[2]) / ny;

    parallel_for(static_cast<std::size_t>(ny), workers, [&](std::size_t row) {
        for (int col = 0; col < nx; ++col) {
            const Complex z(region[0] + (col + 0.5) * dx, region[2] + (row + 0.5) * dy);
            const ClassifyResult cr = classify_point(f, regime, SpherePoint(z), max_iter);
            std::uint8_t v = 128;
            if (cr.cls == PointClass::Julia) v = 0;
            if (cr.cls == PointClass::Fatou) v = 255;
            out.pixels[row * static_cast<std::size_t>(nx) + static_cast<std::size_t>(col)] = v;
        }
    });
    long undecided = 0;
    for (std::uint8_t v : out.pixels)
        if (v == 128) ++undecided;
    out.undecided_fraction = static_cast<double>(undecided) / static_cast<double>(out.pixels.size());
    return out;
}

void write_pgm(const std::string& path, const RasterResult& raster) {
    std::ofstream os(path);
    if (!os) throw Error("IoError", "cannot open " + path + " for writing");
    os << "P2\n" << raster.nx << " " << raster.ny << "\n255\n";
    for (int row = 0; row < raster.ny; ++row) {
        for (int col = 0; col < raster.nx; ++col) {
            os << static_cast<int>(raster.pixels[static_cast<std::size_t>(row) * raster.nx + col]);
            os << (col + 1 == raster.nx ? '\n' : ' ');
        }
    }
}

}  // namespace merodim
