#include "scenario_rag/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "scenario_rag/error.hpp"
#include "scenario_rag/random.hpp"

namespace scenario_rag {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const Objective& f, std::span<const double> point, const GradCheckOptions& opt) {
  if (!f.value || !f.gradient) throw Error(ErrorCode::kValidation, "objective needs value and gradient");
  if (!(opt.step > 0.0)) throw Error(ErrorCode::kValidation, "finite-difference step must be positive");
  const std::size_t n = point.size();
  GradCheckReport report;
  if (n == 0) return report;

  const std::vector<double> analytic = f.gradient(point);
  if (analytic.size() != n) throw Error(ErrorCode::kShapeMismatch, "gradient size differs from the point");

  std::vector<std::size_t> groups = opt.groups.empty() ? std::vector<std::size_t>{0} : opt.groups;
  if (!std::is_sorted(groups.begin(), groups.end()) || groups.front() != 0 || groups.back() >= n)
    throw Error(ErrorCode::kValidation, "parameter groups must be sorted offsets starting at 0");
  groups.push_back(n);

  const std::uint64_t base_regime = f.regime ? f.regime(point) : 0;
  std::vector<double> x(point.begin(), point.end());
  auto probe = [&](std::size_t i, double& numeric) {
    const double orig = x[i];
    x[i] = orig + opt.step;
    const double up = f.value(x);
    const bool up_same = !f.regime || f.regime(x) == base_regime;
    x[i] = orig - opt.step;
    const double down = f.value(x);
    const bool down_same = !f.regime || f.regime(x) == base_regime;
    x[i] = orig;
    numeric = (up - down) / (2.0 * opt.step);
    return up_same && down_same;
  };
  auto check = [&](std::size_t i) {
    double numeric = 0.0;
    if (!probe(i, numeric)) {
      ++report.skipped;
      return false;
    }
    const double err = relative_error(analytic[i], numeric);
    if (report.checked == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
    ++report.checked;
    return true;
  };

  if (n <= opt.coordinates) {
    for (std::size_t i = 0; i < n; ++i) check(i);
    return report;
  }

  Rng rng(opt.seed);
  std::unordered_set<std::size_t> seen;
  const std::size_t group_count = groups.size() - 1;
  // Bounded so that a point sitting on many kinks cannot loop forever.
  const std::size_t max_attempts = opt.coordinates * 20;
  for (std::size_t attempt = 0; report.checked < opt.coordinates && attempt < max_attempts && seen.size() < n;
       ++attempt) {
    const std::size_t g = attempt % group_count;
    const auto lo = static_cast<std::int64_t>(groups[g]);
    const auto hi = static_cast<std::int64_t>(groups[g + 1]) - 1;
    if (hi < lo) continue;
    const auto i = static_cast<std::size_t>(rng.uniform_int(lo, hi));
    if (!seen.insert(i).second) continue;
    check(i);
  }
  return report;
}

}  // namespace scenario_rag
