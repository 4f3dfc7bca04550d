#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "fedhyp/metrics.hpp"

using namespace fedhyp;
using namespace fedhyp::metrics;

TEST_CASE("confusion: perfect predictions are diagonal, rows sum to counts") {
  const std::vector<int> labels{0, 1, 2, 1, 0, 2, 2};
  const Mat conf = confusion(labels, labels, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(conf(i, j) == (i == j ? (i == 0 ? 2.0 : i == 1 ? 2.0 : 3.0) : 0.0));

  const std::vector<int> preds{1, 1, 0, 2, 0, 2, 1};
  const Mat c2 = confusion(preds, labels, 3);
  std::vector<double> label_counts(3, 0.0);
  for (int l : labels) label_counts[std::size_t(l)] += 1.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 3; ++j) row += c2(i, j);
    CHECK(row == label_counts[i]);
  }

  CHECK_THROWS_AS(confusion({3}, {0}, 3), UsageError);
  CHECK_THROWS_AS(confusion({0}, {-1}, 3), UsageError);
  CHECK_THROWS_AS(confusion({0, 1}, {0}, 3), UsageError);
}

TEST_CASE("confusion matches a naive double-loop oracle") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n_cls = 2 + rng() % 5;
    const std::size_t n = 50 + rng() % 100;
    std::vector<int> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = int(rng() % n_cls);
      labels[i] = int(rng() % n_cls);
    }
    const Mat conf = confusion(preds, labels, n_cls);
    for (std::size_t l = 0; l < n_cls; ++l)
      for (std::size_t p = 0; p < n_cls; ++p) {
        double count = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          count += labels[i] == int(l) && preds[i] == int(p);
        CHECK(conf(l, p) == count);
      }
  }
}

TEST_CASE("confusion is invariant to permuting the pair order") {
  std::mt19937_64 rng(405);
  std::vector<int> preds(200), labels(200);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i] = int(rng() % 4);
    labels[i] = int(rng() % 4);
  }
  const Mat before = confusion(preds, labels, 4);
  std::vector<std::size_t> perm(preds.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> p2, l2;
  for (std::size_t i : perm) {
    p2.push_back(preds[i]);
    l2.push_back(labels[i]);
  }
  CHECK(confusion(p2, l2, 4).data == before.data);
}

TEST_CASE("iou and miou hand cases") {
  // perfect two-class prediction
  Mat perfect(2, 2);
  perfect(0, 0) = 5;
  perfect(1, 1) = 7;
  CHECK(miou(perfect).value() == doctest::Approx(1.0));

  // fully swapped predictions: zero intersection everywhere
  Mat swapped(2, 2);
  swapped(0, 1) = 5;
  swapped(1, 0) = 7;
  CHECK(miou(swapped).value() == doctest::Approx(0.0));

  // class 0: TP=4 FP=2 FN=1 -> 4/7; class 1: TP=3 FP=1 FN=2 -> 3/6
  Mat m(2, 2);
  m(0, 0) = 4;
  m(0, 1) = 1;
  m(1, 0) = 2;
  m(1, 1) = 3;
  CHECK(class_iou(m, 0).value() == doctest::Approx(4.0 / 7.0));
  CHECK(class_iou(m, 1).value() == doctest::Approx(3.0 / 6.0));
  CHECK(miou(m).value() == doctest::Approx(0.5 * (4.0 / 7.0 + 3.0 / 6.0)));

  // absent class is excluded, not counted as zero
  Mat absent(3, 3);
  absent(0, 0) = 4;
  absent(1, 1) = 4;
  CHECK(!class_iou(absent, 2).has_value());
  CHECK(miou(absent).value() == doctest::Approx(1.0));

  CHECK(!miou(Mat(3, 3)).has_value());
}

TEST_CASE("class remap is total over observed ids") {
  const std::vector<int> preds{0, 2, 1, 2};
  const std::vector<int> mapping{1, 0, 1};
  CHECK(class_remap(preds, mapping) == std::vector<int>{1, 1, 0, 1});
  CHECK_THROWS_AS(class_remap({0, 1}, {0, -1}), UsageError);
  CHECK_THROWS_AS(class_remap({5}, {0, 1}), UsageError);
}

TEST_CASE("combined score averages shared-class IoUs across agents") {
  // 3 car classes, 2 shared with drones (identity mapping), class 2 car-only
  Mat car(3, 3);
  car(0, 0) = 4; car(0, 1) = 1;   // IoU_0^car = 4/(4+1+1) with FP below
  car(1, 0) = 1; car(1, 1) = 4;   // IoU_1^car = 4/6
  car(2, 2) = 5;                  // IoU_2^car = 1
  Mat drone(2, 2);
  drone(0, 0) = 3;                // IoU_0^drone = 1
  drone(1, 1) = 2; drone(1, 0) = 2;  // IoU_1^drone = 2/(2+2+0)... FP on 0
  // recompute: drone class 0: TP=3, FP=2, FN=0 -> 3/5; class 1: TP=2, FN=2 -> 2/4

  const std::vector<int> c2d{0, 1, -1};
  const double iou_car0 = 4.0 / 6.0, iou_car1 = 4.0 / 6.0, iou_car2 = 1.0;
  const double iou_dr0 = 3.0 / 5.0, iou_dr1 = 2.0 / 4.0;
  const double want = ((iou_car0 + iou_dr0) / 2.0 + (iou_car1 + iou_dr1) / 2.0 +
                       iou_car2) / 3.0;
  CHECK(combined_score(car, drone, c2d) == doctest::Approx(want));

  // empty drone side: shared classes fall back to the car IoU
  const double car_only = (iou_car0 + iou_car1 + iou_car2) / 3.0;
  CHECK(combined_score(car, Mat(2, 2), c2d) == doctest::Approx(car_only));
}
