#include "prefopt/crash_feedback.hpp"

#include <algorithm>
#include <string>

#include "prefopt/error.hpp"

namespace prefopt {

namespace {

bool contains(const std::vector<Point>& set, const Point& x) {
  return std::any_of(set.begin(), set.end(), [&](const Point& p) { return same_point(p, x); });
}

std::string describe(const Point& x) {
  std::string out = "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(x[i]);
  }
  return out + ")";
}

void process_point(const Point& x, bool satisfied, FeedbackLedger& ledger, std::vector<DuelRecord>& added) {
  if (satisfied) {
    if (ledger.is_crashed(x)) {
      fail(ErrorKind::Consistency, "point " + describe(x) + " was reported crashed before and feasible now");
    }
    for (const auto& c : ledger.crashed()) added.push_back({x, c, Preference::FirstPreferred, true});
    if (!ledger.is_feasible(x)) ledger.add_feasible(x);
  } else {
    if (ledger.is_feasible(x)) {
      fail(ErrorKind::Consistency, "point " + describe(x) + " was reported feasible before and crashed now");
    }
    for (const auto& s : ledger.feasible()) added.push_back({x, s, Preference::SecondPreferred, true});
    if (!ledger.is_crashed(x)) ledger.add_crashed(x);
  }
}

Augmentation apply_rules(const FeedbackLedger& ledger, const DuelFeedback& feedback) {
  feedback.validate();
  Augmentation out{{}, ledger};
  process_point(feedback.x_a, feedback.s_a, out.ledger, out.added);
  process_point(feedback.x_b, feedback.s_b, out.ledger, out.added);
  if (feedback.both_feasible()) out.added.push_back({feedback.x_a, feedback.x_b, *feedback.pi, false});
  return out;
}

}  // namespace

bool FeedbackLedger::is_feasible(const Point& x) const { return contains(feasible_, x); }
bool FeedbackLedger::is_crashed(const Point& x) const { return contains(crashed_, x); }

bool operator==(const FeedbackLedger& a, const FeedbackLedger& b) {
  auto eq = [](const std::vector<Point>& u, const std::vector<Point>& v) {
    return std::equal(u.begin(), u.end(), v.begin(), v.end(), [](const Point& p, const Point& q) { return same_point(p, q); });
  };
  return eq(a.feasible_, b.feasible_) && eq(a.crashed_, b.crashed_);
}

DuelFeedback DuelFeedback::make(Point x_a, Point x_b, bool s_a, bool s_b, std::optional<Preference> pi) {
  DuelFeedback f;
  f.x_a = std::move(x_a);
  f.x_b = std::move(x_b);
  f.s_a = s_a;
  f.s_b = s_b;
  if (s_a && s_b) f.pi = pi;
  return f;
}

void DuelFeedback::validate() const {
  if (x_a.size() == 0 || x_a.size() != x_b.size()) fail(ErrorKind::Input, "duel points must share a nonzero dimension");
  if (same_point(x_a, x_b)) fail(ErrorKind::Input, "a duel needs two distinct points");
  if (both_feasible() && !pi) fail(ErrorKind::Input, "a preference is required when both experiments succeeded");
  if (!both_feasible() && pi) fail(ErrorKind::Input, "a preference is only defined when both experiments succeeded");
}

Augmentation augment(const FeedbackLedger& ledger, const DuelFeedback& feedback) {
  if (!feedback.s_a && !feedback.s_b && ledger.feasible().empty()) {
    fail(ErrorKind::Initialization,
         "both experiments crashed and no feasible point is known yet; at least one feasible parameter vector is required");
  }
  return apply_rules(ledger, feedback);
}

Augmentation record_without_virtuals(const FeedbackLedger& ledger, const DuelFeedback& feedback) {
  if (feedback.x_a.size() == 0 || feedback.x_a.size() != feedback.x_b.size()) {
    fail(ErrorKind::Input, "duel points must share a nonzero dimension");
  }
  if (same_point(feedback.x_a, feedback.x_b)) fail(ErrorKind::Input, "a duel needs two distinct points");
  if (feedback.both_feasible() && !feedback.pi) {
    fail(ErrorKind::Input, "a preference is required when both experiments succeeded");
  }
  Augmentation out{{}, ledger};
  for (const auto& [x, s] : {std::pair{&feedback.x_a, feedback.s_a}, std::pair{&feedback.x_b, feedback.s_b}}) {
    if (s ? out.ledger.is_crashed(*x) : out.ledger.is_feasible(*x)) {
      fail(ErrorKind::Consistency, "point " + describe(*x) + " was re-reported with the opposite satisfaction");
    }
    if (out.ledger.known(*x)) continue;
    if (s) {
      out.ledger.add_feasible(*x);
    } else {
      out.ledger.add_crashed(*x);
    }
  }
  if (feedback.pi) {
    out.added.push_back({feedback.x_a, feedback.x_b, *feedback.pi, false});
  } else if (feedback.s_a != feedback.s_b) {
    out.added.push_back({feedback.x_a, feedback.x_b,
                         feedback.s_a ? Preference::FirstPreferred : Preference::SecondPreferred, false});
  }
  return out;
}

Augmentation initialize_ledger(std::span<const DuelFeedback> initial) {
  const bool any_feasible =
      std::any_of(initial.begin(), initial.end(), [](const DuelFeedback& f) { return f.s_a || f.s_b; });
  if (!any_feasible) {
    fail(ErrorKind::Initialization, "the initial comparison must contain at least one feasible parameter vector");
  }
  Augmentation out;
  for (const auto& f : initial) {
    auto step = apply_rules(out.ledger, f);
    out.ledger = std::move(step.ledger);
    out.added.insert(out.added.end(), step.added.begin(), step.added.end());
  }
  return out;
}

Augmentation initialize_ledger(const ComparisonDataset& initial, const std::vector<bool>& satisfactions) {
  if (satisfactions.size() != initial.points().size()) {
    fail(ErrorKind::Input, "one satisfaction flag per initial point is required");
  }
  std::vector<DuelFeedback> feedback;
  feedback.reserve(initial.size());
  for (const auto& d : initial.duels()) {
    feedback.push_back(DuelFeedback::make(initial.points()[d.first], initial.points()[d.second],
                                          satisfactions[d.first], satisfactions[d.second], d.pi));
  }
  if (feedback.empty()) fail(ErrorKind::Input, "initial dataset has no duels");
  return initialize_ledger(feedback);
}

}  // namespace prefopt
