#include "testutil.hpp"

#include "merodim/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

using namespace merodim;

TEST_CASE("compensated sum beats naive accumulation on an ill-conditioned series") {
    // Oracle: long double accumulation of the same stream.
    auto gen = testutil::rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> xs;
    for (int i = 0; i < 20000; ++i) {
        const double mag = std::pow(10.0, -12.0 + 24.0 * u(gen));
        xs.push_back((u(gen) < 0.5 ? -1.0 : 1.0) * mag);
    }
    long double exact = 0.0L;
    for (double x : xs) exact += static_cast<long double>(x);
    const double got = stable_sum(xs);
    CHECK(std::abs(got - static_cast<double>(exact)) <=
          1e-9 * std::max(1.0, std::abs(static_cast<double>(exact))));
}

TEST_CASE("log_sum_exp is permutation independent to the bit") {
    auto gen = testutil::rng(12);
    std::uniform_real_distribution<double> u(-300.0, 10.0);
    std::vector<double> logs;
    for (int i = 0; i < 5000; ++i) logs.push_back(u(gen));
    const double a = log_sum_exp(logs);
    std::shuffle(logs.begin(), logs.end(), gen);
    const double b = log_sum_exp(logs);
    CHECK(a == b);
    CHECK(std::isfinite(a));
}

TEST_CASE("log_sum_exp matches direct evaluation in a benign range") {
    std::vector<double> logs{0.0, -1.0, -2.0, -3.5};
    double direct = 0.0;
    for (double l : logs) direct += std::exp(l);
    CHECK(log_sum_exp(logs) == doctest::Approx(std::log(direct)).epsilon(1e-14));
}

TEST_CASE("line fit recovers an exact affine relation") {
    std::vector<double> x, y;
    for (int i = 0; i < 40; ++i) {
        x.push_back(0.1 * i);
        y.push_back(2.5 * 0.1 * i - 0.7);
    }
    const LineFit fit = fit_line(x, y);
    CHECK(fit.slope == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(-0.7).epsilon(1e-12));
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("task seeds differ across indices and reproduce") {
    CHECK(task_seed(42, 0) == task_seed(42, 0));
    CHECK(task_seed(42, 0) != task_seed(42, 1));
    CHECK(task_seed(42, 7) != task_seed(43, 7));
}

TEST_CASE("parallel_for covers every index exactly once for any worker count") {
    for (unsigned workers : {1u, 2u, 5u}) {
        std::vector<std::atomic<int>> hits(257);
        for (auto& h : hits) h = 0;
        parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i] += 1; });
        for (const auto& h : hits) CHECK(h == 1);
    }
}
