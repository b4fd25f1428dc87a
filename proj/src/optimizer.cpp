#include "prefopt/optimizer.hpp"

#include <string>

#include "prefopt/error.hpp"

namespace prefopt {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Augmentation apply_feedback(const OptimizerConfig& config, const FeedbackLedger& ledger, const DuelFeedback& f) {
  return config.crash_feedback ? augment(ledger, f) : record_without_virtuals(ledger, f);
}

void check_point(const Point& x, std::size_t dim) {
  if (static_cast<std::size_t>(x.size()) != dim) {
    fail(ErrorKind::Input, "point has dimension " + std::to_string(x.size()) + ", expected " + std::to_string(dim));
  }
  if (!in_unit_cube(x)) fail(ErrorKind::Input, "point lies outside the unit cube");
}

}  // namespace

std::uint64_t iteration_seed(std::uint64_t seed, std::size_t iteration) {
  return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(iteration));
}

void OptimizerConfig::validate() const {
  if (dimension < 1) fail(ErrorKind::Input, "dimension must be at least 1");
  if (budget < 1) fail(ErrorKind::Input, "budget must be at least 1");
  kernel.validate(dimension);
  if (!(noise.sigma > 0.0)) fail(ErrorKind::Input, "model noise sigma must be positive");
  acquisition.validate();
}

Optimizer Optimizer::create(OptimizerConfig config, DuelFeedback initial) {
  config.validate();
  check_point(initial.x_a, config.dimension);
  check_point(initial.x_b, config.dimension);
  if (config.crash_feedback && !initial.both_feasible()) initial.pi.reset();
  if (!initial.s_a && !initial.s_b) {
    fail(ErrorKind::Initialization, "the initial comparison must contain at least one feasible parameter vector");
  }

  Optimizer opt;
  opt.config_ = std::move(config);
  opt.dataset_ = ComparisonDataset(opt.config_.dimension);
  Augmentation aug = opt.config_.crash_feedback ? initialize_ledger(std::span<const DuelFeedback>(&initial, 1))
                                                : record_without_virtuals(FeedbackLedger{}, initial);
  for (const auto& rec : aug.added) opt.dataset_.add(rec);
  opt.ledger_ = std::move(aug.ledger);
  opt.initial_added_ = aug.added.size();
  opt.last_evaluated_ = initial.x_b;
  opt.initial_ = std::move(initial);
  opt.refresh_model();
  opt.initial_incumbent_ = opt.compute_incumbent();
  return opt;
}

Optimizer Optimizer::replay(const OptimizerConfig& config, const DuelFeedback& initial,
                            const std::vector<HistoryEntry>& history) {
  Optimizer opt = create(config, initial);
  for (const auto& entry : history) {
    if (opt.iteration_ >= opt.config_.budget) fail(ErrorKind::State, "history is longer than the budget");
    opt.pending_ = std::make_pair(entry.feedback.x_a, entry.feedback.x_b);
    opt.submit(entry.feedback);
  }
  return opt;
}

Optimizer Optimizer::restore(OptimizerSnapshot s) {
  s.config.validate();
  Optimizer opt;
  opt.config_ = std::move(s.config);
  opt.initial_ = std::move(s.initial);
  opt.initial_added_ = s.initial_added;
  opt.initial_incumbent_ = std::move(s.initial_incumbent);
  opt.dataset_ = std::move(s.dataset);
  opt.ledger_ = std::move(s.ledger);
  opt.pending_ = std::move(s.pending);
  opt.iteration_ = s.iteration;
  opt.history_ = std::move(s.history);
  opt.last_evaluated_ = std::move(s.last_evaluated);
  return opt;
}

OptimizerSnapshot Optimizer::snapshot() const {
  return OptimizerSnapshot{config_, initial_, initial_added_, initial_incumbent_, dataset_, ledger_,
                           pending_, iteration_, history_, last_evaluated_};
}

void Optimizer::refresh_model() {
  model_.reset();
  try {
    (void)posterior();
  } catch (const Error&) {
    // propose() surfaces the failure; the state itself stays consistent
  }
}

const LaplacePosterior& Optimizer::posterior() const {
  if (!model_) {
    if (config_.lengthscale_search) {
      model_ = std::make_shared<const LaplacePosterior>(
          fit_with_lengthscale_search(dataset_, config_.kernel, config_.noise, kDefaultLengthscaleGrid));
    } else {
      model_ = std::make_shared<const LaplacePosterior>(fit_laplace(dataset_, config_.kernel, config_.noise));
    }
  }
  return *model_;
}

std::optional<Point> Optimizer::compute_incumbent() const {
  if (config_.incumbent_rule == IncumbentRule::DuelWins) return recommend_incumbent_by_wins(dataset_, ledger_);
  try {
    return recommend_incumbent(posterior(), ledger_);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<Point> Optimizer::incumbent() const {
  if (!history_.empty()) return history_.back().incumbent;
  return initial_incumbent_ ? initial_incumbent_ : compute_incumbent();
}

std::pair<Point, Point> Optimizer::propose() {
  if (pending_) fail(ErrorKind::State, "a duel is already awaiting feedback");
  if (iteration_ >= config_.budget) fail(ErrorKind::State, "the iteration budget is exhausted");

  const LaplacePosterior& model = posterior();
  std::optional<Point> anchor;
  if (config_.mode == ComparisonMode::CompareToBest) {
    anchor = config_.incumbent_rule == IncumbentRule::DuelWins ? recommend_incumbent_by_wins(dataset_, ledger_)
                                                               : recommend_incumbent(model, ledger_);
  } else if (config_.mode == ComparisonMode::CompareToLast) {
    anchor = last_evaluated_;
  }
  AcquisitionConfig acq = config_.acquisition;
  acq.seed = iteration_seed(config_.seed, iteration_ + 1);
  DuelProposal p = maximize_eubo(model, config_.mode, anchor, acq);
  pending_ = std::make_pair(std::move(p.x_a), std::move(p.x_b));
  return *pending_;
}

std::pair<Point, Point> Optimizer::propose_explicit(Point x_a, Point x_b) {
  if (pending_) fail(ErrorKind::State, "a duel is already awaiting feedback");
  if (iteration_ >= config_.budget) fail(ErrorKind::State, "the iteration budget is exhausted");
  check_point(x_a, config_.dimension);
  check_point(x_b, config_.dimension);
  if (same_point(x_a, x_b)) fail(ErrorKind::Input, "a duel needs two distinct points");
  pending_ = std::make_pair(std::move(x_a), std::move(x_b));
  return *pending_;
}

void Optimizer::submit(const DuelFeedback& feedback) {
  if (!pending_) fail(ErrorKind::State, "no duel is awaiting feedback");
  if (!same_point(feedback.x_a, pending_->first) || !same_point(feedback.x_b, pending_->second)) {
    fail(ErrorKind::Input, "feedback does not refer to the pending duel");
  }
  Augmentation aug = apply_feedback(config_, ledger_, feedback);

  ComparisonDataset next = dataset_;
  for (const auto& rec : aug.added) next.add(rec);

  HistoryEntry entry;
  entry.iteration = iteration_ + 1;
  entry.feedback = feedback;
  entry.added = aug.added.size();
  entry.ablation = !config_.crash_feedback && !feedback.both_feasible();

  dataset_ = std::move(next);
  ledger_ = std::move(aug.ledger);
  last_evaluated_ = config_.mode == ComparisonMode::TwoNew ? feedback.x_b : feedback.x_a;
  pending_.reset();
  ++iteration_;
  refresh_model();
  entry.incumbent = compute_incumbent();
  history_.push_back(std::move(entry));
}

std::pair<Point, Point> Optimizer::repeat_pending() const {
  if (!pending_) fail(ErrorKind::State, "no duel is awaiting feedback");
  return *pending_;
}

ExploreResult propose_or_explore(Optimizer& opt, std::mt19937_64& rng) {
  try {
    return {opt.propose(), false};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Fit && e.kind() != ErrorKind::Numerical) throw;
  }
  const auto d = static_cast<Eigen::Index>(opt.config().dimension);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&] {
    Point x(d);
    for (Eigen::Index i = 0; i < d; ++i) x[i] = u(rng);
    return x;
  };
  Point a = draw();
  Point b;
  switch (opt.config().mode) {
    case ComparisonMode::TwoNew: b = draw(); break;
    case ComparisonMode::CompareToBest: b = recommend_incumbent_by_wins(opt.dataset(), opt.ledger()); break;
    case ComparisonMode::CompareToLast: b = opt.last_evaluated(); break;
  }
  return {opt.propose_explicit(std::move(a), std::move(b)), true};
}

}  // namespace prefopt
