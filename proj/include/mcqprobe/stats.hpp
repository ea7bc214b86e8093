#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace mcqprobe {

inline constexpr double kDefaultAlpha = 0.05;
/// Floor applied to expected proportions before building expected counts.
inline constexpr double kExpectedFloor = 1e-6;
/// Below this sample size Spearman significance is an exact permutation test.
inline constexpr std::size_t kExactPermutationMaxN = 9;

struct CorrelationResult {
    double rho = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    bool significant = false;
    bool exact_p = false;  // permutation p-value rather than the t approximation
};

struct ChiSquaredResult {
    double statistic = 0.0;
    int df = 2;
    double p_value = 1.0;
    bool significant = false;
    bool clamped = false;  // some expected proportion was floored at kExpectedFloor
};

/// Average ranks (1-based); values within `tie_tolerance` of the first value of a
/// sorted run share that run's mean rank. A zero tolerance means exact ties only.
std::vector<double> average_ranks(std::span<const double> values, double tie_tolerance = 0.0);

double pearson(std::span<const double> x, std::span<const double> y);

/// Spearman's rho with two-sided significance. Throws std::invalid_argument on length
/// mismatch or n < 3 and StatsError when either rank vector has zero variance.
CorrelationResult spearman(std::span<const double> x, std::span<const double> y,
                           double alpha = kDefaultAlpha, double tie_tolerance = 0.0);

/// Upper tail of the chi-squared distribution. df == 2 uses exp(-x/2) directly.
double chi2_survival(double x, int df = 2);

/// Two-sided p-value of Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

/// Pearson goodness of fit over three categories (df = 2).
ChiSquaredResult chi_squared_gof(std::span<const long> observed_counts,
                                 std::span<const double> expected_props,
                                 double alpha = kDefaultAlpha,
                                 double expected_floor = kExpectedFloor);

/// round(p * total) per category with largest-remainder correction so the counts
/// sum to `total`. Ties in the remainder go to the lower index.
std::vector<long> counts_from_proportions(std::span<const double> props, long total);

}  // namespace mcqprobe
