#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace debias {

/// Linear-interpolation quantile (the "type 7" definition) of an unsorted sample.
double quantile(std::vector<double> values, double p);

double mean(std::span<const double> values);

/// Fisher-Pearson coefficient of skewness, m3 / m2^(3/2). Zero for constant samples.
double skewness(std::span<const double> values);

/// |Pearson r|; zero when either side is constant.
double abs_pearson(std::span<const double> x, std::span<const double> y);

/// Cramér's V over two coded categorical columns. Levels that never occur are
/// dropped before computing the degrees-of-freedom term.
double cramers_v(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// Correlation ratio (eta) of a numeric column grouped by a coded categorical column.
double correlation_ratio(std::span<const std::size_t> groups, std::span<const double> values);

/// Wilson score interval for a binomial proportion.
struct ProportionInterval {
    double lower = 0.0;
    double upper = 1.0;
};
ProportionInterval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

}  // namespace debias
