#include "debias/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "debias/error.hpp"

namespace debias {

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

double mean(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double skewness(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    const double mu = mean(values);
    double m2 = 0.0;
    double m3 = 0.0;
    for (double v : values) {
        const double d = v - mu;
        m2 += d * d;
        m3 += d * d * d;
    }
    const double n = static_cast<double>(values.size());
    m2 /= n;
    m3 /= n;
    if (m2 <= 1e-300) return 0.0;
    return m3 / std::pow(m2, 1.5);
}

double abs_pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = std::min(x.size(), y.size());
    if (n < 2) return 0.0;
    const double mx = mean(x.first(n));
    const double my = mean(y.first(n));
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return std::min(1.0, std::abs(sxy) / std::sqrt(sxx * syy));
}

double cramers_v(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    const std::size_t n = std::min(a.size(), b.size());
    if (n == 0) return 0.0;
    std::map<std::size_t, std::size_t> rows, cols;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> cells;
    for (std::size_t i = 0; i < n; ++i) {
        ++rows[a[i]];
        ++cols[b[i]];
        ++cells[{a[i], b[i]}];
    }
    const std::size_t dof = std::min(rows.size(), cols.size());
    if (dof < 2) return 0.0;
    const double total = static_cast<double>(n);
    double chi2 = 0.0;
    for (const auto& [ra, rc] : rows) {
        for (const auto& [cb, cc] : cols) {
            const double expected = static_cast<double>(rc) * static_cast<double>(cc) / total;
            auto it = cells.find({ra, cb});
            const double observed = it == cells.end() ? 0.0 : static_cast<double>(it->second);
            chi2 += (observed - expected) * (observed - expected) / expected;
        }
    }
    return std::min(1.0, std::sqrt(chi2 / (total * static_cast<double>(dof - 1))));
}

double correlation_ratio(std::span<const std::size_t> groups, std::span<const double> values) {
    const std::size_t n = std::min(groups.size(), values.size());
    if (n < 2) return 0.0;
    const double mu = mean(values.first(n));
    std::map<std::size_t, std::pair<double, std::size_t>> sums;
    double ss_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto& [sum, count] = sums[groups[i]];
        sum += values[i];
        ++count;
        ss_total += (values[i] - mu) * (values[i] - mu);
    }
    if (ss_total <= 0.0) return 0.0;
    double ss_between = 0.0;
    for (const auto& [g, sc] : sums) {
        const double gm = sc.first / static_cast<double>(sc.second);
        ss_between += static_cast<double>(sc.second) * (gm - mu) * (gm - mu);
    }
    return std::min(1.0, std::sqrt(ss_between / ss_total));
}

ProportionInterval wilson_interval(std::size_t successes, std::size_t trials, double z) {
    if (trials == 0) return {};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
    const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

}  // namespace debias
