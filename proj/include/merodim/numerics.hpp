#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace merodim {

/// Neumaier compensated accumulator. All tail-dominated series in this
/// library go through one of these instead of a bare double.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Compensated sum of a list after sorting by descending magnitude.
/// The sort makes the result independent of the input permutation, which
/// is what keeps parallel reductions deterministic.
double stable_sum(std::vector<double> xs);

/// log(sum(exp(logs))) with max-shift and permutation-independent
/// accumulation. Empty input yields -inf.
double log_sum_exp(std::vector<double> logs);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares y ~ slope*x + intercept.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// SplitMix64 step; used for counter-based per-task seeding.
std::uint64_t splitmix64(std::uint64_t state);

/// Seed for task `index` of a run with the given master seed. Independent
/// of scheduling, so worker counts cannot change any stream.
std::uint64_t task_seed(std::uint64_t master_seed, std::uint64_t index);

/// Runs body(i) for i in [0, n) on `workers` threads. Each index owns its
/// output slot; no reduction happens here, so callers combine results in
/// index order and stay deterministic.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body);

}  // namespace merodim
