#pragma once

#include <algorithm>

namespace tcdsg {

// Axis-aligned box, xyxy, normalized to [0,1] fractions of the frame.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }

  bool valid() const { return x1 <= x2 && y1 <= y2; }

  friend bool operator==(const Box& a, const Box& b) = default;
};

// Inclusive integer frame interval: a one-frame tracklet has length 1.
struct Interval {
  int start = 0;
  int end = 0;

  int length() const { return end - start + 1; }
  bool valid() const { return start <= end; }
  bool contains(int frame) const { return start <= frame && frame <= end; }

  friend bool operator==(const Interval& a, const Interval& b) = default;
};

// Intersection over union. Zero-area pairs yield 0 (division guard).
double iou(const Box& a, const Box& b);

// Generalized IoU in [-1,1]: iou minus the enclosing-box slack. Falls back
// to iou when the enclosing box is degenerate.
double giou(const Box& a, const Box& b);

// Smallest box containing both arguments.
Box union_box(const Box& a, const Box& b);

// L1 distance in (cx, cy, w, h) representation.
double box_l1(const Box& a, const Box& b);

// IoU of two inclusive frame intervals, counting frames.
double temporal_iou(const Interval& a, const Interval& b);

}  // namespace tcdsg
