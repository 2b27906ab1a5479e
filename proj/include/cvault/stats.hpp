#pragma once

#include <utility>
#include <vector>

namespace cvault {

// Empirical CDF points (sorted value, i/n), one per sample.
std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> samples);

// Same, thinned to at most `max_points` evenly spaced points (last point
// always kept).
std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> samples, std::size_t max_points);

// Nearest-rank percentile, q in [0, 1]. Returns 0 for empty input.
double percentile(std::vector<double> samples, double q);

double mean(const std::vector<double>& samples);

}  // namespace cvault
