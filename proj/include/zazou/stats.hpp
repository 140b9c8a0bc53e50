#pragma once

#include <vector>

namespace zazou {

// Standard normal CDF, accurate over the full double range.
double normal_cdf(double x);

// Standard normal quantile (inverse CDF), Wichura's AS241 rational
// approximation. Requires p in (0, 1).
double normal_quantile(double p);

// Benjamini-Hochberg step-up adjusted p-values.
std::vector<double> bh_adjust(const std::vector<double>& p);

// Benjamini-Yekutieli: BH multiplied by the harmonic sum H_m, capped at 1.
std::vector<double> by_adjust(const std::vector<double>& p);

// Two-sided Wilcoxon-Mann-Whitney p-value via the normal approximation
// with tie correction and 0.5 continuity correction.
double wilcoxon_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace zazou
