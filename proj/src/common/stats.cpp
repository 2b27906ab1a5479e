#include "cvault/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cvault {

std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> samples) {
  return empirical_cdf(std::move(samples), 0);
}

std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> samples, std::size_t max_points) {
  std::sort(samples.begin(), samples.end());
  std::vector<std::pair<double, double>> out;
  const std::size_t n = samples.size();
  if (n == 0) return out;
  std::size_t stride = (max_points == 0 || n <= max_points) ? 1 : (n + max_points - 1) / max_points;
  for (std::size_t i = stride - 1; i < n; i += stride)
    out.emplace_back(samples[i], static_cast<double>(i + 1) / static_cast<double>(n));
  if (out.back().second != 1.0) out.emplace_back(samples.back(), 1.0);
  return out;
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) return 0.0;
  q = std::clamp(q, 0.0, 1.0);
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
  std::size_t idx = rank == 0 ? 0 : rank - 1;
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(idx), samples.end());
  return samples[idx];
}

double mean(const std::vector<double>& samples) {
  if (samples.empty()) return 0.0;
  return std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
}

}  // namespace cvault
