#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "prefopt/crash_feedback.hpp"
#include "prefopt/pairwise_gp.hpp"

namespace prefopt {

enum class ComparisonMode { TwoNew, CompareToBest, CompareToLast };

std::string_view to_string(ComparisonMode mode);
ComparisonMode comparison_mode_from_string(std::string_view name);

/// True for modes that propose one new point against an existing anchor.
inline bool uses_anchor(ComparisonMode mode) { return mode != ComparisonMode::TwoNew; }

struct AcquisitionConfig {
  int restarts = 32;
  int local_steps = 60;
  std::uint64_t seed = 0;

  void validate() const;
};

/// E[max(a, b)] for jointly Gaussian (a, b).
double expected_max(double mean_a, double mean_b, double var_a, double var_b, double cov_ab);

/// Expected utility of the best option for the duel (x_a, x_b).
double eubo_value(const LaplacePosterior& posterior, const Point& x_a, const Point& x_b);

struct DuelProposal {
  Point x_a;
  Point x_b;
  double value = 0.0;
};

/// Multistart coordinate pattern search over the unit cube. In anchored modes
/// x_b is the anchor and only x_a is searched. Candidates that coincide with
/// the other duel member are discarded.
DuelProposal maximize_eubo(const LaplacePosterior& posterior, ComparisonMode mode,
                           const std::optional<Point>& anchor, const AcquisitionConfig& config);

/// Feasible evaluated point with the highest posterior mean; earliest wins ties.
Point recommend_incumbent(const LaplacePosterior& posterior, const FeedbackLedger& ledger);

/// Alternative incumbent: feasible point with most wins in decision-maker
/// (non-virtual) duels; earliest wins ties.
Point recommend_incumbent_by_wins(const ComparisonDataset& data, const FeedbackLedger& ledger);

}  // namespace prefopt
