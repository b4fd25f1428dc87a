#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace prefopt {

/// A parameter vector in the unit cube [0,1]^d.
using Point = Eigen::VectorXd;

/// Exact coordinate equality; near-duplicates are distinct points.
bool same_point(const Point& a, const Point& b);

bool in_unit_cube(const Point& x);

/// Binary preference outcome: 0 means the first element won.
enum class Preference : int { FirstPreferred = 0, SecondPreferred = 1 };

struct Duel {
  std::size_t first = 0;   // index into ComparisonDataset::points()
  std::size_t second = 0;
  Preference pi = Preference::FirstPreferred;
  bool is_virtual = false;  // produced by crash augmentation rather than by the decision maker

  std::size_t winner() const { return pi == Preference::FirstPreferred ? first : second; }
  std::size_t loser() const { return pi == Preference::FirstPreferred ? second : first; }

  friend bool operator==(const Duel&, const Duel&) = default;
};

/// Duel expressed by value, as produced by crash augmentation before insertion.
struct DuelRecord {
  Point first;
  Point second;
  Preference pi = Preference::FirstPreferred;
  bool is_virtual = false;
};

/// Pairwise comparison data with an exact-equality deduplicated point list.
class ComparisonDataset {
 public:
  ComparisonDataset() = default;
  explicit ComparisonDataset(std::size_t dimension) : dimension_(dimension) {}

  /// Inserts a duel; returns its index. Rejects identical endpoints.
  std::size_t add(const Point& first, const Point& second, Preference pi, bool is_virtual = false);
  std::size_t add(const DuelRecord& record) {
    return add(record.first, record.second, record.pi, record.is_virtual);
  }

  /// Index of a point, inserting it if new.
  std::size_t intern(const Point& x);
  std::optional<std::size_t> find(const Point& x) const;

  std::size_t dimension() const { return dimension_; }
  const std::vector<Point>& points() const { return points_; }
  const std::vector<Duel>& duels() const { return duels_; }
  std::size_t size() const { return duels_.size(); }
  bool empty() const { return duels_.empty(); }

  /// FNV-1a over the canonical binary layout of points and duels.
  std::uint64_t hash() const;

 private:
  std::size_t dimension_ = 0;
  std::vector<Point> points_;
  std::vector<Duel> duels_;
};

}  // namespace prefopt
