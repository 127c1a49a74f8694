#include "tcdsg/geometry.hpp"

#include <cmath>

namespace tcdsg {

namespace {

double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  if (iw <= 0.0) return 0.0;
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ih <= 0.0) return 0.0;
  return iw * ih;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double giou(const Box& a, const Box& b) {
  const double base = iou(a, b);
  const Box enclosing = union_box(a, b);
  const double enclosing_area = enclosing.area();
  if (enclosing_area <= 0.0) return base;
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return base - (enclosing_area - uni) / enclosing_area;
}

Box union_box(const Box& a, const Box& b) {
  return Box{std::min(a.x1, b.x1), std::min(a.y1, b.y1),
             std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

double box_l1(const Box& a, const Box& b) {
  return std::abs(a.cx() - b.cx()) + std::abs(a.cy() - b.cy()) +
         std::abs(a.width() - b.width()) + std::abs(a.height() - b.height());
}

double temporal_iou(const Interval& a, const Interval& b) {
  const int inter_start = std::max(a.start, b.start);
  const int inter_end = std::min(a.end, b.end);
  const int inter = inter_end - inter_start + 1;
  if (inter <= 0) return 0.0;
  const int uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace tcdsg
