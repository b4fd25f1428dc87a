#include "prefopt/types.hpp"

#include <bit>
#include <cstring>

#include "prefopt/error.hpp"

namespace prefopt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Input: return "input_error";
    case ErrorKind::State: return "state_error";
    case ErrorKind::Fit: return "fit_error";
    case ErrorKind::Numerical: return "numerical_error";
    case ErrorKind::Consistency: return "consistency_error";
    case ErrorKind::Initialization: return "assumption1_violated";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Schema: return "schema_error";
    case ErrorKind::Io: return "io_error";
  }
  return "error";
}

bool same_point(const Point& a, const Point& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

bool in_unit_cube(const Point& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0 && x[i] <= 1.0)) return false;
  }
  return true;
}

std::optional<std::size_t> ComparisonDataset::find(const Point& x) const {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (same_point(points_[i], x)) return i;
  }
  return std::nullopt;
}

std::size_t ComparisonDataset::intern(const Point& x) {
  if (dimension_ == 0) dimension_ = static_cast<std::size_t>(x.size());
  if (static_cast<std::size_t>(x.size()) != dimension_ || dimension_ == 0) {
    fail(ErrorKind::Input, "point dimension " + std::to_string(x.size()) + " does not match dataset dimension " +
                               std::to_string(dimension_));
  }
  if (auto idx = find(x)) return *idx;
  points_.push_back(x);
  return points_.size() - 1;
}

std::size_t ComparisonDataset::add(const Point& first, const Point& second, Preference pi, bool is_virtual) {
  if (same_point(first, second)) fail(ErrorKind::Input, "a duel needs two distinct points");
  if (first.size() != second.size()) fail(ErrorKind::Input, "duel points differ in dimension");
  Duel duel;
  duel.first = intern(first);
  duel.second = intern(second);
  duel.pi = pi;
  duel.is_virtual = is_virtual;
  duels_.push_back(duel);
  return duels_.size() - 1;
}

namespace {

struct Fnv1a {
  std::uint64_t state = 0xcbf29ce484222325ULL;

  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state ^= p[i];
      state *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

}  // namespace

std::uint64_t ComparisonDataset::hash() const {
  Fnv1a h;
  h.u64(dimension_);
  h.u64(points_.size());
  for (const auto& p : points_) {
    for (Eigen::Index i = 0; i < p.size(); ++i) h.f64(p[i]);
  }
  h.u64(duels_.size());
  for (const auto& d : duels_) {
    h.u64(d.first);
    h.u64(d.second);
    h.u64(static_cast<std::uint64_t>(d.pi));
    h.u64(d.is_virtual ? 1 : 0);
  }
  return h.state;
}

}  // namespace prefopt
