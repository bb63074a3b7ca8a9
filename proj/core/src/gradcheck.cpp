#include "pkgcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "pkgcn/errors.hpp"

namespace pkgcn {

FiniteDifferenceReport finite_difference_check(const std::function<double()>& loss, std::span<double> params,
                                               std::span<const double> analytic,
                                               const FiniteDifferenceOptions& options) {
  if (params.size() != analytic.size()) {
    throw ShapeError("finite_difference_check: " + std::to_string(params.size()) + " parameters vs " +
                     std::to_string(analytic.size()) + " gradient entries");
  }
  if (!(options.epsilon > 0.0)) throw ConfigError("finite_difference_check: epsilon must be positive");

  std::vector<std::size_t> coords(params.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_probes != 0 && options.max_probes < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_probes);
    std::sort(coords.begin(), coords.end());
  }

  FiniteDifferenceReport report;
  for (std::size_t i : coords) {
    const double saved = params[i];
    params[i] = saved + options.epsilon;
    const double up = loss();
    params[i] = saved - options.epsilon;
    const double down = loss();
    params[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(analytic[i])) {
      throw NumericError("finite_difference_check: non-finite value at coordinate " + std::to_string(i));
    }
    const double fd = (up - down) / (2.0 * options.epsilon);
    const double err = std::abs(fd - analytic[i]) / std::max(1.0, std::abs(analytic[i]));
    if (report.probes == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
    ++report.probes;
  }
  return report;
}

}  // namespace pkgcn
