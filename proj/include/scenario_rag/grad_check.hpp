#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace scenario_rag {

// A scalar function of a flat parameter vector with its analytic gradient.
// `regime`, when set, returns a signature of the piecewise-linear region the
// point lies in (e.g. ReLU sign patterns); coordinates whose +-step probes
// leave the region are skipped since central differences straddle a kink there.
struct Objective {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
  std::function<std::uint64_t(std::span<const double>)> regime;
};

struct GradCheckOptions {
  double step = 1e-3;
  std::size_t coordinates = 200;  // checked coordinates; all of them if the dimension is smaller
  std::uint64_t seed = 1;
  // Sorted start offsets of parameter groups. Sampling cycles through groups so
  // small tensors are covered; empty means one group.
  std::vector<std::size_t> groups;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes that crossed a regime boundary
  std::size_t worst_index = 0;
};

// |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|) with central differences.
double relative_error(double analytic, double numeric);

GradCheckReport grad_check(const Objective& f, std::span<const double> point, const GradCheckOptions& opt = {});

}  // namespace scenario_rag
