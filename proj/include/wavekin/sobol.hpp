// Sobol low-discrepancy sequences (dimensions 1 and 2) and the affine
// interval maps that turn unit samples into the collision-integral and
// residual sample sets.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace wavekin {

/// One point of the 2-D unit-square sequence.
struct Point2 {
  double u1 = 0.0;
  double u2 = 0.0;
};

/// A unit sample together with its affine image.  The unit coordinate is
/// retained so derivatives with respect to the interval endpoints can be
/// chained through the sample positions.
struct MappedPoint {
  double unit = 0.0;
  double value = 0.0;
};

/// Sobol sequence generator over [0,1)^d for d in {1,2}.
///
/// Direction numbers follow the Joe--Kuo "new" tables: dimension 1 is the
/// van der Corput sequence in base 2; dimension 2 uses the primitive
/// polynomial x^2 + x + 1 (s = 1, a = 0, m_1 = 1).  Points are produced in
/// standard Sobol order, x_n = XOR of the direction numbers selected by the
/// bits of gray(n), so any index is directly addressable.  All coordinates
/// are dyadic rationals with 52 bits, exactly representable as doubles.
class SobolStream {
 public:
  static constexpr int kBits = 52;

  explicit SobolStream(int dimension, std::uint64_t start_index = 1)
      : dim_(dimension), index_(start_index) {
    if (dimension < 1 || dimension > 2)
      throw std::invalid_argument("SobolStream: dimension must be 1 or 2");
    // dim 1: m_k = 1 for all k.
    for (int k = 0; k < kBits; ++k)
      v_[0][k] = std::uint64_t{1} << (kBits - 1 - k);
    // dim 2: s = 1, a = 0, m_1 = 1, recurrence m_k = (2 m_{k-1}) xor m_{k-1}.
    std::uint64_t m = 1;
    for (int k = 0; k < kBits; ++k) {
      v_[1][k] = m << (kBits - 1 - k);
      m = (m << 1) ^ m;
    }
  }

  int dimension() const { return dim_; }
  std::uint64_t index() const { return index_; }

  /// Point at an arbitrary sequence index (index 0 is the origin).
  Point2 at(std::uint64_t n) const {
    const std::uint64_t gray = n ^ (n >> 1);
    std::uint64_t acc[2] = {0, 0};
    for (int k = 0; k < kBits; ++k) {
      if (gray >> k & 1) {
        acc[0] ^= v_[0][k];
        if (dim_ == 2) acc[1] ^= v_[1][k];
      }
    }
    constexpr double scale = 1.0 / (std::uint64_t{1} << kBits);
    return {static_cast<double>(acc[0]) * scale,
            static_cast<double>(acc[1]) * scale};
  }

  Point2 next() { return at(index_++); }

 private:
  int dim_;
  std::uint64_t index_;
  std::uint64_t v_[2][kBits];
};

/// First coordinates of `count` consecutive 1-D Sobol points starting at
/// `skip`.  skip = 1 omits the all-zeros point (the default convention used
/// throughout; see map_to_rect for the residual-domain rationale).
inline std::vector<double> sobol_points_1d(std::size_t count,
                                           std::uint64_t skip = 1) {
  SobolStream s(1, skip);
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(s.next().u1);
  return out;
}

inline std::vector<Point2> sobol_points_2d(std::size_t count,
                                           std::uint64_t skip = 1) {
  SobolStream s(2, skip);
  std::vector<Point2> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(s.next());
  return out;
}

/// lower + u * (upper - lower).  Exact affine form: d/d lower = 1 - u,
/// d/d upper = u, which the residual derivatives chain through.
inline double affine(double u, double lower, double upper) {
  return lower + u * (upper - lower);
}

/// Map unit-square points onto (0,T] x [0,R].  Time components that land on
/// zero are nudged to eps = T * 2^-30 so every residual sample has t > 0.
inline std::vector<Point2> map_to_rect(std::span<const Point2> points, double T,
                                       double R) {
  if (T <= 0.0 || R <= 0.0)
    throw std::invalid_argument("map_to_rect: T and R must be positive");
  const double eps = T * 0x1p-30;
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const Point2& p : points) {
    double t = affine(p.u1, 0.0, T);
    if (t == 0.0) t = eps;
    out.push_back({t, affine(p.u2, 0.0, R)});
  }
  return out;
}

/// Map unit samples onto [lower, upper), keeping the unit coordinates.
/// A reversed interval signals an inadmissible context pair.
inline std::vector<MappedPoint> map_nested(std::span<const double> units,
                                           double lower, double upper) {
  if (upper < lower)
    throw std::domain_error("map_nested: degenerate interval, upper < lower");
  std::vector<MappedPoint> out;
  out.reserve(units.size());
  for (double u : units) out.push_back({u, affine(u, lower, upper)});
  return out;
}

}  // namespace wavekin
