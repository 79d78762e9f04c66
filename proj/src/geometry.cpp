#include "ctxf/geometry.hpp"

#include <cmath>

namespace ctxf {

AffineTransform AffineTransform::translation(double tx, double ty) {
  return from_rows(1, 0, tx, 0, 1, ty);
}

AffineTransform AffineTransform::scaling(double sx, double sy) {
  return from_rows(sx, 0, 0, 0, sy, 0);
}

AffineTransform AffineTransform::rotation(double radians, Point2 center) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  // p' = R (p - center) + center
  return from_rows(c, -s, center.x - c * center.x + s * center.y, s, c,
                   center.y - s * center.x - c * center.y);
}

AffineTransform AffineTransform::from_rows(double a, double b, double tx, double c, double d,
                                           double ty) {
  AffineTransform t;
  t.m = {a, b, tx, c, d, ty, 0, 0, 1};
  return t;
}

std::optional<AffineTransform> AffineTransform::inverse() const {
  const double det = linear_det();
  if (!(std::abs(det) > kSingularDet)) return std::nullopt;
  const double a = m[4] / det;
  const double b = -m[1] / det;
  const double c = -m[3] / det;
  const double d = m[0] / det;
  return from_rows(a, b, -(a * m[2] + b * m[5]), c, d, -(c * m[2] + d * m[5]));
}

AffineTransform AffineTransform::compose(const AffineTransform& o) const {
  AffineTransform r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += (*this)(i, k) * o(k, j);
      r(i, j) = acc;
    }
  }
  r.m[6] = 0.0;
  r.m[7] = 0.0;
  r.m[8] = 1.0;
  return r;
}

}  // namespace ctxf
