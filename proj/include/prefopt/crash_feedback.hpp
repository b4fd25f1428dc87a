#pragma once

// Crash-aware dataset augmentation. A crashed experiment is ranked below
// every non-crashed one through virtual comparisons.

#include <optional>
#include <span>
#include <vector>

#include "prefopt/types.hpp"

namespace prefopt {

/// Ordered feasible (non-crashed) and crashed point sets.
class FeedbackLedger {
 public:
  const std::vector<Point>& feasible() const { return feasible_; }
  const std::vector<Point>& crashed() const { return crashed_; }

  bool is_feasible(const Point& x) const;
  bool is_crashed(const Point& x) const;
  bool known(const Point& x) const { return is_feasible(x) || is_crashed(x); }

  // Raw insertion; used by deserialization and by the augmentation rules.
  void add_feasible(Point x) { feasible_.push_back(std::move(x)); }
  void add_crashed(Point x) { crashed_.push_back(std::move(x)); }

  friend bool operator==(const FeedbackLedger& a, const FeedbackLedger& b);

 private:
  std::vector<Point> feasible_;
  std::vector<Point> crashed_;
};

/// Decision-maker feedback on one duel.
struct DuelFeedback {
  Point x_a;
  Point x_b;
  bool s_a = true;  // satisfaction of x_a: false means the experiment crashed
  bool s_b = true;
  std::optional<Preference> pi;  // present iff both experiments succeeded

  /// Builds feedback, dropping `pi` unless both points are feasible.
  static DuelFeedback make(Point x_a, Point x_b, bool s_a, bool s_b, std::optional<Preference> pi);

  bool both_feasible() const { return s_a && s_b; }
  /// Throws Input when the pi/satisfaction invariant is broken.
  void validate() const;
};

struct Augmentation {
  std::vector<DuelRecord> added;  // D_add, in rule order
  FeedbackLedger ledger;          // ledger after processing
};

/// Processes x_a then x_b:
///  - a crashed point is ranked below every current feasible point, then joins the crashed set;
///  - a feasible point is ranked above every current crashed point, then joins the feasible set;
///  - if both are feasible the direct comparison is appended last.
/// A re-evaluated point emits its virtual duels again but keeps its single
/// ledger entry. Re-reporting a point with the opposite satisfaction is a
/// Consistency error; a duel with two crashes and an empty feasible set is
/// rejected as uninformative.
Augmentation augment(const FeedbackLedger& ledger, const DuelFeedback& feedback);

/// Plain preference semantics used when crash feedback is disabled: the
/// ledger still records satisfactions (with the same consistency checks) but
/// no virtual duels are produced. The direct duel uses `pi` when given,
/// otherwise the crashed point loses; two crashes without `pi` add nothing.
Augmentation record_without_virtuals(const FeedbackLedger& ledger, const DuelFeedback& feedback);

/// Same rules without the uninformative-duel check, for replaying an initial
/// dataset; requires at least one feasible point overall.
Augmentation initialize_ledger(std::span<const DuelFeedback> initial);

/// Variant over an existing dataset and per-point satisfactions (indexed like
/// `initial.points()`). Direct duels between two feasible points are kept with
/// their recorded preference.
Augmentation initialize_ledger(const ComparisonDataset& initial, const std::vector<bool>& satisfactions);

}  // namespace prefopt
