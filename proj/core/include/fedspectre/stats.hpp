#pragma once

#include <cmath>
#include <span>

#include "fedspectre/errors.hpp"

namespace fedspectre {

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population (divide by n)
};

// Mean and population standard deviation. Every statistical filter in the
// pipeline (outlier removal, anomaly threshold, threshold filter) divides
// by n, not n-1; the worked examples in the tests pin this down.
inline MeanStd mean_population_std(std::span<const double> values) {
  if (values.empty()) throw ShapeError("mean_population_std: empty input");
  double sum = 0.0;
  for (const double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (const double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

}  // namespace fedspectre
