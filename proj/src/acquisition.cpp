#include "prefopt/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "prefopt/error.hpp"
#include "prefopt/normal.hpp"

namespace prefopt {

std::string_view to_string(ComparisonMode mode) {
  switch (mode) {
    case ComparisonMode::TwoNew: return "two_new";
    case ComparisonMode::CompareToBest: return "best";
    case ComparisonMode::CompareToLast: return "last";
  }
  return "?";
}

ComparisonMode comparison_mode_from_string(std::string_view name) {
  if (name == "two_new" || name == "two-new" || name == "TwoNew") return ComparisonMode::TwoNew;
  if (name == "best" || name == "compare_to_best" || name == "CompareToBest") return ComparisonMode::CompareToBest;
  if (name == "last" || name == "compare_to_last" || name == "CompareToLast") return ComparisonMode::CompareToLast;
  fail(ErrorKind::Input, "unknown comparison mode '" + std::string(name) + "'");
}

void AcquisitionConfig::validate() const {
  if (restarts < 1) fail(ErrorKind::Input, "acquisition restarts must be >= 1");
  if (local_steps < 1) fail(ErrorKind::Input, "acquisition local_steps must be >= 1");
}

double expected_max(double mean_a, double mean_b, double var_a, double var_b, double cov_ab) {
  const double s2 = var_a + var_b - 2.0 * cov_ab;
  const double s = s2 > 0.0 ? std::sqrt(s2) : 0.0;
  if (s < 1e-9) return std::max(mean_a, mean_b);
  const double delta = (mean_a - mean_b) / s;
  return mean_a * normal::cdf(delta) + mean_b * normal::cdf(-delta) + s * normal::pdf(delta);
}

namespace {

double eubo_projected(const LaplacePosterior& posterior, const QueryProjection& a, const QueryProjection& b) {
  return expected_max(a.mean, b.mean, posterior.variance(a), posterior.variance(b), posterior.covariance(a, b));
}

void check_domain(const Point& x, std::size_t dim, const char* what) {
  if (static_cast<std::size_t>(x.size()) != dim) {
    fail(ErrorKind::Input, std::string(what) + " has dimension " + std::to_string(x.size()) + ", expected " +
                               std::to_string(dim));
  }
  if (!in_unit_cube(x)) fail(ErrorKind::Input, std::string(what) + " lies outside the unit cube");
}

struct Candidate {
  Eigen::VectorXd z;  // search variables: x_a, or (x_a, x_b) stacked
  double value = -std::numeric_limits<double>::infinity();
  bool valid = false;
};

}  // namespace

double eubo_value(const LaplacePosterior& posterior, const Point& x_a, const Point& x_b) {
  check_domain(x_a, posterior.dimension(), "x_a");
  check_domain(x_b, posterior.dimension(), "x_b");
  return eubo_projected(posterior, posterior.project(x_a), posterior.project(x_b));
}

DuelProposal maximize_eubo(const LaplacePosterior& posterior, ComparisonMode mode, const std::optional<Point>& anchor,
                           const AcquisitionConfig& config) {
  config.validate();
  const std::size_t d = posterior.dimension();
  const bool anchored = uses_anchor(mode);
  std::optional<QueryProjection> anchor_proj;
  if (anchored) {
    if (!anchor) fail(ErrorKind::Input, "comparison mode '" + std::string(to_string(mode)) + "' needs an anchor point");
    check_domain(*anchor, d, "anchor");
    anchor_proj = posterior.project(*anchor);
  }
  const auto n = static_cast<Eigen::Index>(anchored ? d : 2 * d);
  const auto di = static_cast<Eigen::Index>(d);

  // Returns -inf for degenerate duels so they never win.
  auto objective = [&](const Eigen::VectorXd& z) {
    if (anchored) {
      if (same_point(z, *anchor)) return -std::numeric_limits<double>::infinity();
      return eubo_projected(posterior, posterior.project(z), *anchor_proj);
    }
    Point a = z.head(di);
    Point b = z.tail(di);
    if (same_point(a, b)) return -std::numeric_limits<double>::infinity();
    return eubo_projected(posterior, posterior.project(a), posterior.project(b));
  };

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Eigen::VectorXd> starts(static_cast<std::size_t>(config.restarts));
  for (auto& s : starts) {
    s.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = unit(rng);
  }

  constexpr double kInitialStep = 0.25;
  constexpr double kMinStep = 1e-6;
  Candidate best;
  for (const auto& start : starts) {
    Candidate c{start, objective(start), true};
    double step = kInitialStep;
    for (int sweep = 0; sweep < config.local_steps && step >= kMinStep; ++sweep) {
      bool moved = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (double dir : {1.0, -1.0}) {
          Eigen::VectorXd trial = c.z;
          trial[i] = std::clamp(trial[i] + dir * step, 0.0, 1.0);
          if (trial[i] == c.z[i]) continue;
          const double v = objective(trial);
          if (v > c.value) {
            c.z = std::move(trial);
            c.value = v;
            moved = true;
            break;
          }
        }
      }
      if (!moved) step *= 0.5;
    }
    if (std::isfinite(c.value) && (!best.valid || c.value > best.value)) best = std::move(c);
  }
  if (!best.valid) {
    fail(ErrorKind::Numerical, "acquisition search produced no admissible duel");
  }

  DuelProposal out;
  if (anchored) {
    out.x_a = best.z;
    out.x_b = *anchor;
  } else {
    out.x_a = best.z.head(di);
    out.x_b = best.z.tail(di);
  }
  out.value = best.value;
  return out;
}

Point recommend_incumbent(const LaplacePosterior& posterior, const FeedbackLedger& ledger) {
  if (ledger.feasible().empty()) fail(ErrorKind::State, "no feasible point has been evaluated yet");
  std::size_t best = 0;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ledger.feasible().size(); ++i) {
    const double m = posterior.mean(ledger.feasible()[i]);
    if (m > best_mean) {
      best_mean = m;
      best = i;
    }
  }
  return ledger.feasible()[best];
}

Point recommend_incumbent_by_wins(const ComparisonDataset& data, const FeedbackLedger& ledger) {
  if (ledger.feasible().empty()) fail(ErrorKind::State, "no feasible point has been evaluated yet");
  std::vector<long> wins(data.points().size(), 0);
  for (const auto& duel : data.duels()) {
    if (!duel.is_virtual) ++wins[duel.winner()];
  }
  std::size_t best = 0;
  long best_wins = -1;
  for (std::size_t i = 0; i < ledger.feasible().size(); ++i) {
    const auto idx = data.find(ledger.feasible()[i]);
    const long w = idx ? wins[*idx] : 0;
    if (w > best_wins) {
      best_wins = w;
      best = i;
    }
  }
  return ledger.feasible()[best];
}

}  // namespace prefopt
