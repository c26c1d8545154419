#include "merodim/numerics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace merodim {

double stable_sum(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end(), [](double a, double b) {
        const double aa = std::abs(a), ab = std::abs(b);
        if (aa != ab) return aa > ab;
        return a > b;
    });
    CompensatedSum acc;
    for (double x : xs) acc.add(x);
    return acc.value();
}

double log_sum_exp(std::vector<double> logs) {
    if (logs.empty()) return -std::numeric_limits<double>::infinity();
    std::sort(logs.begin(), logs.end(), std::greater<double>());
    const double m = logs.front();
    if (!std::isfinite(m)) return m;
    CompensatedSum acc;
    for (double l : logs) acc.add(std::exp(l - m));
    return m + std::log(acc.value());
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        A(i, 0) = x[static_cast<std::size_t>(i)];
        A(i, 1) = 1.0;
        b(i) = y[static_cast<std::size_t>(i)];
    }
    const Eigen::Vector2d coef = A.colPivHouseholderQr().solve(b);
    LineFit fit;
    fit.slope = coef(0);
    fit.intercept = coef(1);
    const double mean = b.mean();
    const double ss_tot = (b.array() - mean).square().sum();
    const double ss_res = (b - A * coef).squaredNorm();
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

std::uint64_t splitmix64(std::uint64_t state) {
    std::uint64_t z = state + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t task_seed(std::uint64_t master_seed, std::uint64_t index) {
    return splitmix64(master_seed ^ splitmix64(index + 0x5851F42D4C957F2DULL));
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    if (workers == 0) workers = 1;
    workers = std::min<unsigned>(workers, static_cast<unsigned>(n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                body(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace merodim
