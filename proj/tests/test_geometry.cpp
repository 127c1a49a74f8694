#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "tcdsg/geometry.hpp"

using namespace tcdsg;

TEST_CASE("iou basics") {
  const Box a{0, 0, 0.5, 0.5};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(Box{0, 0, 0.2, 0.2}, Box{0.9, 0.9, 1, 1}) == 0.0);
  CHECK(iou(Box{0, 0, 0.2, 0.2}, Box{0.1, 0.1, 0.3, 0.3}) ==
        doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("iou degenerate boxes") {
  const Box point{0.5, 0.5, 0.5, 0.5};
  CHECK(iou(point, point) == 0.0);  // zero-area convention
  CHECK(iou(point, Box{0, 0, 1, 1}) == 0.0);
  const Box line{0.2, 0.0, 0.2, 1.0};
  CHECK(iou(line, Box{0, 0, 1, 1}) == 0.0);
}

TEST_CASE("giou basics") {
  const Box a{0.1, 0.2, 0.4, 0.5};
  CHECK(giou(a, a) == doctest::Approx(1.0));
  CHECK(giou(Box{0, 0, 0.1, 0.1}, Box{0.9, 0, 1, 0.1}) == doctest::Approx(-0.8).epsilon(1e-12));
  CHECK(giou(Box{0, 0, 0.2, 0.2}, Box{0.1, 0.1, 0.3, 0.3}) ==
        doctest::Approx(1.0 / 7.0 - 2.0 / 9.0).epsilon(1e-12));
  // degenerate enclosing region falls back to iou
  const Box point{0.3, 0.3, 0.3, 0.3};
  CHECK(giou(point, point) == 0.0);
}

TEST_CASE("union_box") {
  const Box a{0, 0, 0.2, 0.2};
  const Box b{0.5, 0.5, 0.7, 0.7};
  const Box u = union_box(a, b);
  CHECK(u == Box{0, 0, 0.7, 0.7});
  CHECK(union_box(a, a) == a);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const Box x = oracles::random_box(rng);
    const Box y = oracles::random_box(rng);
    CHECK(union_box(x, y) == union_box(y, x));
  }
}

TEST_CASE("box_l1 in cxcywh space") {
  const Box a{0, 0, 0.2, 0.2};
  CHECK(box_l1(a, a) == 0.0);
  CHECK(box_l1(a, Box{0.1, 0.1, 0.3, 0.3}) == doctest::Approx(0.2).epsilon(1e-12));
  // triangle inequality on random triples
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Box x = oracles::random_box(rng);
    const Box y = oracles::random_box(rng);
    const Box z = oracles::random_box(rng);
    CHECK(box_l1(x, z) <= box_l1(x, y) + box_l1(y, z) + 1e-12);
  }
}

TEST_CASE("temporal_iou") {
  CHECK(temporal_iou(Interval{3, 9}, Interval{3, 9}) == 1.0);
  CHECK(temporal_iou(Interval{0, 10}, Interval{5, 15}) == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(temporal_iou(Interval{0, 4}, Interval{5, 9}) == 0.0);
  // one-frame intervals count as length 1
  CHECK(temporal_iou(Interval{4, 4}, Interval{4, 4}) == 1.0);
  CHECK(temporal_iou(Interval{4, 4}, Interval{4, 5}) == doctest::Approx(0.5));
}

TEST_CASE("symmetry, ranges and giou <= iou on random pairs") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 500; ++i) {
    const Box a = oracles::random_box(rng);
    const Box b = oracles::random_box(rng);
    const double i1 = iou(a, b), i2 = iou(b, a);
    const double g1 = giou(a, b), g2 = giou(b, a);
    CHECK(i1 == i2);
    CHECK(g1 == doctest::Approx(g2).epsilon(1e-12));
    CHECK(i1 >= 0.0);
    CHECK(i1 <= 1.0);
    CHECK(g1 >= -1.0);
    CHECK(g1 <= 1.0 + 1e-12);
    CHECK(g1 <= i1 + 1e-12);
  }
}

TEST_CASE("raster oracle agreement") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 300; ++i) {
    const Box a = oracles::random_box(rng);
    const Box b = oracles::random_box(rng);
    const auto est = oracles::raster_iou_giou(a, b);
    CHECK(std::abs(iou(a, b) - est.iou) < 2e-3);
    CHECK(std::abs(giou(a, b) - est.giou) < 4e-3);
  }
  // grid-aligned pair is exact on the raster
  const auto exact = oracles::raster_iou_giou(Box{0, 0, 0.2, 0.2}, Box{0.1, 0.1, 0.3, 0.3});
  CHECK(exact.iou == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}
