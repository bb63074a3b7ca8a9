#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace pkgcn {

struct FiniteDifferenceOptions {
  double epsilon = 1e-5;
  /// Probe at most this many coordinates (0 = all). Coordinates are chosen
  /// by a seeded draw so repeated checks probe the same set.
  std::size_t max_probes = 0;
  std::uint64_t seed = 0;
};

struct FiniteDifferenceReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
};

/// Compares `analytic` against central differences of `loss` taken by
/// perturbing `params` in place (each coordinate is restored afterwards).
/// Relative error is |fd - analytic| / max(1, |analytic|).
/// Throws NumericError if the loss turns non-finite while probing.
FiniteDifferenceReport finite_difference_check(const std::function<double()>& loss, std::span<double> params,
                                               std::span<const double> analytic,
                                               const FiniteDifferenceOptions& options = {});

}  // namespace pkgcn
