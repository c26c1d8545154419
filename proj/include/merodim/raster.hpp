#pragma once

#include "merodim/map_family.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace merodim {

enum class PointClass { Fatou, Julia, Undecided };

struct ClassifyResult {
    PointClass cls = PointClass::Undecided;
    int attractor_id = -1;
    int iterations = 0;
};

/// Attraction-based Fatou/Julia classification; sound only in the
/// hyperbolic regime where the attracting cycles are known.
ClassifyResult classify_point(const MapSpec& f, const RegimeReport& regime, const SpherePoint& z,
                              int max_iter);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool stub = false;  // unresolved far-tail fragment next to a pole
    double length() const { return hi - lo; }
};

struct RealJuliaOptions {
    double source_cap = 300.0;   // sources tracked on [-B, B]
    double length_floor = 2e-4;  // intervals below this are frozen, not refined
    int max_active = 400000;
};

struct RealJuliaRefinement {
    std::vector<Interval> intervals;  // surviving set clipped to the window
    double total_length = 0.0;
    int depth = 0;
    double repelling_fixed_point = 0.0;  // x* with lambda tan(x*) = x*
};

/// Cantor refinement of the real-line Julia set: depth-fold real preimages
/// of the fundamental survival set under the explicit branches
/// arctan(./lambda) + k pi, clipped to [window_lo, window_hi].
RealJuliaRefinement refine_real_julia(const MapSpec& f, double window_lo, double window_hi,
                                      int depth, const RealJuliaOptions& opt = {});

struct BoxCountResult {
    std::vector<double> scales;
    std::vector<long> counts;
    double slope = 0.0;
    double r2 = 0.0;
    std::array<double, 4> region{0, 0, 0, 0};
};

BoxCountResult box_count_intervals(std::span<const Interval> intervals,
                                   std::span<const double> scales);
BoxCountResult box_count_points(std::span<const Complex> points, std::span<const double> scales);

struct RasterResult {
    int nx = 0, ny = 0;
    std::array<double, 4> region{0, 0, 0, 0};  // x0 x1 y0 y1
    std::vector<std::uint8_t> pixels;          // 0 Julia, 255 Fatou, 128 Undecided
    double undecided_fraction = 0.0;
};

RasterResult raster_region(const MapSpec& f, const RegimeReport& regime,
                           const std::array<double, 4>& region, int nx, int ny, int max_iter,
                           unsigned workers = 1);

/// Plain-text portable graymap, magic P2, one sample per pixel, maxval 255.
void write_pgm(const std::string& path, const RasterResult& raster);

}  // namespace merodim
