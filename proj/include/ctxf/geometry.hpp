#pragma once

#include <array>
#include <optional>

namespace ctxf {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// 3x3 affine matrix, row-major, last row fixed to (0, 0, 1).
///
/// Maps candidate (source) coordinates into probe (destination) coordinates.
struct AffineTransform {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static AffineTransform identity() { return {}; }
  static AffineTransform translation(double tx, double ty);
  static AffineTransform scaling(double sx, double sy);
  /// Rotation by `radians` about `center`.
  static AffineTransform rotation(double radians, Point2 center = {});
  static AffineTransform from_rows(double a, double b, double tx, double c, double d, double ty);

  double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }
  double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }

  [[nodiscard]] Point2 apply(Point2 p) const {
    return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
  }

  /// Determinant of the upper-left 2x2 block.
  [[nodiscard]] double linear_det() const { return m[0] * m[4] - m[1] * m[3]; }

  /// Affine inverse; empty when |linear_det| <= 1e-12.
  [[nodiscard]] std::optional<AffineTransform> inverse() const;

  /// this * other (apply `other` first).
  [[nodiscard]] AffineTransform compose(const AffineTransform& other) const;
};

inline constexpr double kSingularDet = 1e-12;

}  // namespace ctxf
