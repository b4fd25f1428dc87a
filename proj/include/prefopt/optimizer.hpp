#pragma once

// The optimization loop as a propose/submit state machine so that the same
// engine serves simulated oracles and asynchronous human feedback.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "prefopt/acquisition.hpp"
#include "prefopt/crash_feedback.hpp"
#include "prefopt/pairwise_gp.hpp"

namespace prefopt {

enum class IncumbentRule { PosteriorMean, DuelWins };

struct OptimizerConfig {
  std::size_t dimension = 1;
  std::size_t budget = 1;  // number of propose/submit iterations
  ComparisonMode mode = ComparisonMode::CompareToBest;
  KernelConfig kernel;
  NoiseConfig noise;
  AcquisitionConfig acquisition;
  std::uint64_t seed = 0;
  /// false: plain preference ablation, crashes only make the crashed point lose its duel.
  bool crash_feedback = true;
  /// Choose the shared lengthscale from kDefaultLengthscaleGrid by Laplace evidence at every fit.
  bool lengthscale_search = false;
  IncumbentRule incumbent_rule = IncumbentRule::PosteriorMean;

  void validate() const;
};

struct HistoryEntry {
  std::size_t iteration = 0;  // 1-based loop index
  DuelFeedback feedback;
  std::size_t added = 0;      // size of the dataset delta
  std::optional<Point> incumbent;
  /// Set when crash feedback was folded into a plain comparison.
  bool ablation = false;
};

/// Plain-data view of the full optimizer state, used for persistence.
struct OptimizerSnapshot {
  OptimizerConfig config;
  DuelFeedback initial;
  std::size_t initial_added = 0;
  std::optional<Point> initial_incumbent;
  ComparisonDataset dataset;
  FeedbackLedger ledger;
  std::optional<std::pair<Point, Point>> pending;
  std::size_t iteration = 0;
  std::vector<HistoryEntry> history;
  Point last_evaluated;
};

class Optimizer {
 public:
  /// Builds the initial dataset from the first duel; the initial duel needs
  /// at least one feasible point. `initial.pi` is ignored unless both succeeded.
  static Optimizer create(OptimizerConfig config, DuelFeedback initial);

  /// Rebuilds state by folding the recorded feedback through create/submit.
  /// Proposals are not recomputed.
  static Optimizer replay(const OptimizerConfig& config, const DuelFeedback& initial,
                          const std::vector<HistoryEntry>& history);

  /// Restores a snapshot verbatim (no refitting, no validation of history).
  static Optimizer restore(OptimizerSnapshot snapshot);
  OptimizerSnapshot snapshot() const;

  /// Fits the model and picks the next duel. In anchored modes x_b is the anchor.
  std::pair<Point, Point> propose();
  /// Sets an externally chosen duel as pending (fallback when the model
  /// cannot be fitted). Same preconditions as propose().
  std::pair<Point, Point> propose_explicit(Point x_a, Point x_b);
  /// Applies feedback for the pending duel.
  void submit(const DuelFeedback& feedback);
  /// Returns the pending duel unchanged.
  std::pair<Point, Point> repeat_pending() const;

  /// Posterior over the current dataset (fitted on demand, cached).
  const LaplacePosterior& posterior() const;
  /// Current recommendation; nullopt only if the model cannot be fitted.
  std::optional<Point> incumbent() const;

  const OptimizerConfig& config() const { return config_; }
  const ComparisonDataset& dataset() const { return dataset_; }
  const FeedbackLedger& ledger() const { return ledger_; }
  const std::vector<HistoryEntry>& history() const { return history_; }
  const std::optional<std::pair<Point, Point>>& pending() const { return pending_; }
  const DuelFeedback& initial() const { return initial_; }
  std::size_t iteration() const { return iteration_; }
  bool finished() const { return iteration_ >= config_.budget && !pending_; }
  const Point& last_evaluated() const { return last_evaluated_; }

 private:
  Optimizer() = default;

  std::optional<Point> compute_incumbent() const;
  void refresh_model();

  OptimizerConfig config_;
  DuelFeedback initial_;
  std::size_t initial_added_ = 0;
  std::optional<Point> initial_incumbent_;
  ComparisonDataset dataset_;
  FeedbackLedger ledger_;
  std::optional<std::pair<Point, Point>> pending_;
  std::size_t iteration_ = 0;
  std::vector<HistoryEntry> history_;
  Point last_evaluated_;

  mutable std::shared_ptr<const LaplacePosterior> model_;
};

/// Per-iteration acquisition seed derived from the run seed.
std::uint64_t iteration_seed(std::uint64_t seed, std::size_t iteration);

struct ExploreResult {
  std::pair<Point, Point> duel;
  bool fell_back = false;  // the model could not be fitted
};

/// propose(), or a uniformly random duel when fitting fails. The anchored
/// modes keep their anchor: the most-winning feasible point or the last
/// evaluated point.
ExploreResult propose_or_explore(Optimizer& opt, std::mt19937_64& rng);

}  // namespace prefopt
