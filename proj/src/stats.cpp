#include "mcqprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mcqprobe/errors.hpp"

namespace mcqprobe {

namespace {

// |rho| this close to 1 is a perfect monotone association.
constexpr double kPerfectRhoSlack = 1e-12;

}  // namespace

std::vector<double> average_ranks(std::span<const double> values, double tie_tolerance) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] - values[order[i]] <= tie_tolerance) ++j;
        // positions i..j-1 hold ranks i+1..j
        double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mean_rank;
        i = j;
    }
    return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx;
        double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw StatsError("zero variance in rank vector");
    return sxy / std::sqrt(sxx * syy);
}

double student_t_two_sided(double t, double df) {
    boost::math::students_t dist(df);
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

namespace {

double exact_permutation_p(const std::vector<double>& rx, std::vector<double> ry, double rho) {
    std::vector<std::size_t> idx(ry.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const double target = std::abs(rho) - 1e-12;
    std::size_t extreme = 0, total = 0;
    std::vector<double> permuted(ry.size());
    do {
        for (std::size_t i = 0; i < idx.size(); ++i) permuted[i] = ry[idx[i]];
        if (std::abs(pearson(rx, permuted)) >= target) ++extreme;
        ++total;
    } while (std::next_permutation(idx.begin(), idx.end()));
    return static_cast<double>(extreme) / static_cast<double>(total);
}

}  // namespace

CorrelationResult spearman(std::span<const double> x, std::span<const double> y, double alpha,
                           double tie_tolerance) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("spearman: length mismatch (" + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()) + ")");
    }
    if (x.size() < 3) throw std::invalid_argument("spearman: n < 3");

    auto rx = average_ranks(x, tie_tolerance);
    auto ry = average_ranks(y, tie_tolerance);
    CorrelationResult r;
    r.n = x.size();
    r.rho = std::clamp(pearson(rx, ry), -1.0, 1.0);

    if (1.0 - std::abs(r.rho) <= kPerfectRhoSlack) {
        r.rho = r.rho > 0 ? 1.0 : -1.0;
        r.p_value = 0.0;
    } else if (r.n <= kExactPermutationMaxN) {
        r.p_value = exact_permutation_p(rx, ry, r.rho);
        r.exact_p = true;
    } else {
        double df = static_cast<double>(r.n) - 2.0;
        double t = r.rho * std::sqrt(df / (1.0 - r.rho * r.rho));
        r.p_value = student_t_two_sided(t, df);
    }
    r.significant = r.p_value < alpha;
    return r;
}

double chi2_survival(double x, int df) {
    if (std::isnan(x) || x < 0.0) throw std::invalid_argument("chi2_survival: negative statistic");
    if (df < 1) throw std::invalid_argument("chi2_survival: df must be positive");
    if (std::isinf(x)) return 0.0;
    if (df == 2) return std::exp(-x / 2.0);
    return boost::math::gamma_q(df / 2.0, x / 2.0);
}

ChiSquaredResult chi_squared_gof(std::span<const long> observed_counts,
                                 std::span<const double> expected_props, double alpha,
                                 double expected_floor) {
    if (observed_counts.size() != expected_props.size() || observed_counts.size() < 2) {
        throw std::invalid_argument("chi_squared_gof: category count mismatch");
    }
    long total = 0;
    for (long o : observed_counts) {
        if (o < 0) throw std::invalid_argument("chi_squared_gof: negative observed count");
        total += o;
    }
    if (total == 0) throw std::invalid_argument("chi_squared_gof: all observed counts are zero");

    double prop_sum = 0.0;
    for (double p : expected_props) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument("chi_squared_gof: expected proportion outside [0,1]");
        }
        prop_sum += p;
    }
    if (std::abs(prop_sum - 1.0) > 1e-6) {
        throw std::invalid_argument("chi_squared_gof: expected proportions sum to " +
                                    std::to_string(prop_sum));
    }

    ChiSquaredResult r;
    std::vector<double> floored(expected_props.begin(), expected_props.end());
    double floored_sum = 0.0;
    for (double& p : floored) {
        if (p < expected_floor) {
            p = expected_floor;
            r.clamped = true;
        }
        floored_sum += p;
    }
    const double n = static_cast<double>(total);
    for (std::size_t i = 0; i < floored.size(); ++i) {
        double expected = floored[i] / floored_sum * n;
        double diff = static_cast<double>(observed_counts[i]) - expected;
        r.statistic += diff * diff / expected;
    }
    r.df = static_cast<int>(observed_counts.size()) - 1;
    r.p_value = chi2_survival(r.statistic, r.df);
    r.significant = r.p_value < alpha;
    return r;
}

std::vector<long> counts_from_proportions(std::span<const double> props, long total) {
    if (total < 0) throw std::invalid_argument("counts_from_proportions: negative total");
    std::vector<long> counts(props.size());
    std::vector<double> remainder(props.size());
    long assigned = 0;
    for (std::size_t i = 0; i < props.size(); ++i) {
        double raw = std::max(0.0, props[i]) * static_cast<double>(total);
        counts[i] = static_cast<long>(std::floor(raw));
        remainder[i] = raw - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(props.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size()) {
        ++counts[order[k]];
        ++assigned;
    }
    // proportions summing above 1 overshoot; take back from the smallest remainders
    for (std::size_t k = order.size(); assigned > total;) {
        k = (k == 0 ? order.size() : k) - 1;
        if (counts[order[k]] > 0) {
            --counts[order[k]];
            --assigned;
        }
    }
    return counts;
}

}  // namespace mcqprobe
