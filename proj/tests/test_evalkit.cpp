#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hifi/evalkit.hpp"

using namespace hifi;
using namespace hifi::eval;
using det::Box;
using det::Detection;

namespace {

EvalScene make_scene(double snr = 0.0) {
  EvalScene s;
  s.snr_db = snr;
  return s;
}

}  // namespace

TEST_CASE("AP: every gt matched by one high-score det gives 1.0") {
  std::vector<ScoredDet> dets;
  std::vector<GtRef> gts;
  for (int i = 0; i < 5; ++i) {
    Box b{0.1 + 0.15 * i, 0.5, 0.1, 0.1};
    dets.push_back({i, 0.9, b});
    gts.push_back({i, b});
  }
  CHECK(average_precision(dets, gts, 0.5) == doctest::Approx(1.0));
}

TEST_CASE("AP: no detections with nonzero gts gives 0.0") {
  std::vector<GtRef> gts = {{0, Box{0.5, 0.5, 0.1, 0.1}}};
  CHECK(average_precision({}, gts, 0.5) == doctest::Approx(0.0));
}

TEST_CASE("AP: empty gts and empty dets is NaN (excluded from means)") {
  CHECK(std::isnan(average_precision({}, {}, 0.5)));
}

TEST_CASE("AP: ranked TP/FP mix matches the brute-force PR oracle") {
  // 3 gts; 5 ranked dets: TP FP TP FP TP.
  Box g0{0.2, 0.2, 0.1, 0.1}, g1{0.5, 0.5, 0.1, 0.1}, g2{0.8, 0.8, 0.1, 0.1};
  Box far{0.1, 0.9, 0.05, 0.05};
  std::vector<GtRef> gts = {{0, g0}, {0, g1}, {0, g2}};
  std::vector<ScoredDet> dets = {
      {0, 0.95, g0}, {0, 0.9, far}, {0, 0.85, g1}, {0, 0.8, far}, {0, 0.75, g2},
  };
  // PR points: (1/1, 1/3) (1/2, 1/3) (2/3, 2/3) (2/4, 2/3) (3/5, 1)
  // envelope: rec<=1/3 -> 1.0; 1/3<rec<=2/3 -> 2/3; 2/3<rec<=1 -> 3/5
  // 101-point sum: r in [0, 0.33]: 34 pts of 1.0; r in [0.34, 0.66]: 33 pts
  // of 2/3; r in [0.67, 1.0]: 34 pts of 3/5.
  double want = (34 * 1.0 + 33 * (2.0 / 3.0) + 34 * 0.6) / 101.0;
  CHECK(average_precision(dets, gts, 0.5) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("AP: appending a zero-score false positive moves AP by at most 1/101") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GtRef> gts;
    std::vector<ScoredDet> dets;
    for (int i = 0; i < 6; ++i) {
      Box b{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.1, 0.1};
      gts.push_back({i, b});
      if (rng.coin()) dets.push_back({i, rng.uniform(0.3, 1.0), b});
      if (rng.coin())
        dets.push_back({i, rng.uniform(0.1, 0.9),
                        Box{rng.uniform(0, 1), rng.uniform(0, 1), 0.05, 0.05}});
    }
    double before = average_precision(dets, gts, 0.5);
    dets.push_back({0, 0.0, Box{0.05, 0.05, 0.02, 0.02}});
    double after = average_precision(dets, gts, 0.5);
    CHECK(std::abs(after - before) <= 1.0 / 101.0 + 1e-12);
  }
}

TEST_CASE("map_metrics: oracle detector scores 100 / F1 1.0") {
  std::vector<EvalScene> scenes;
  Rng rng(4);
  for (int i = 0; i < 6; ++i) {
    auto s = make_scene(i < 3 ? -5.0 : 5.0);
    for (int g = 0; g < 3; ++g) {
      Box b{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.2),
            rng.uniform(0.05, 0.2)};
      int cls = static_cast<int>(rng.uniform_int(0, 2));
      s.gts.emplace_back(cls, b);
      s.dets.push_back({b, cls, 1.0});
    }
    scenes.push_back(s);
  }
  auto rep = map_metrics(scenes, 3);
  CHECK(rep.map_50_95 == doctest::Approx(100.0));
  CHECK(rep.map_50 == doctest::Approx(100.0));
  CHECK(rep.f1 == doctest::Approx(1.0));
  CHECK(rep.fn == 0);
  CHECK(rep.fp == 0);
  REQUIRE(rep.per_snr.size() == 2);
  CHECK(rep.per_snr[0].snr_db == doctest::Approx(-5.0));
  CHECK(rep.per_snr[0].map_50 == doctest::Approx(100.0));
}

TEST_CASE("map_metrics: shuffling scene order leaves the report unchanged") {
  Rng rng(9);
  std::vector<EvalScene> scenes;
  for (int i = 0; i < 8; ++i) {
    auto s = make_scene(i % 2 ? 0.0 : 10.0);
    for (int g = 0; g < 2; ++g) {
      Box b{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.15, 0.15};
      int cls = static_cast<int>(rng.uniform_int(0, 1));
      s.gts.emplace_back(cls, b);
      if (rng.coin()) s.dets.push_back({b, cls, rng.uniform(0.3, 1.0)});
      if (rng.coin())
        s.dets.push_back(
            {Box{rng.uniform(0, 1), rng.uniform(0, 1), 0.1, 0.1}, cls, rng.uniform(0.1, 0.9)});
    }
    scenes.push_back(s);
  }
  auto rep1 = map_metrics(scenes, 2);
  std::vector<EvalScene> shuffled(scenes.rbegin(), scenes.rend());
  auto rep2 = map_metrics(shuffled, 2);
  CHECK(rep1.map_50_95 == rep2.map_50_95);
  CHECK(rep1.map_50 == rep2.map_50);
  CHECK(rep1.f1 == rep2.f1);
  CHECK(rep1.tp == rep2.tp);
}

TEST_CASE("map_metrics matches the handcrafted spreadsheet fixture exactly") {
  // 2 classes, 4 scenes; all hits are exact-overlap so every IoU threshold
  // behaves identically and the numbers can be enumerated by hand.
  Box a{0.3, 0.3, 0.2, 0.2}, b{0.7, 0.7, 0.2, 0.2};
  Box c{0.4, 0.4, 0.2, 0.2}, d{0.6, 0.6, 0.2, 0.2};
  Box far1{0.05, 0.9, 0.05, 0.05}, far2{0.9, 0.05, 0.05, 0.05};

  std::vector<EvalScene> scenes(4);
  // scene0: class0 gt A; det A 0.9 (TP), det far 0.8 (FP)
  scenes[0].gts.emplace_back(0, a);
  scenes[0].dets.push_back({a, 0, 0.9});
  scenes[0].dets.push_back({far1, 0, 0.8});
  // scene1: class0 gt B, no dets (FN)
  scenes[1].gts.emplace_back(0, b);
  // scene2: class1 gt C; det C 0.6 (TP), det far 0.5 (FP)
  scenes[2].gts.emplace_back(1, c);
  scenes[2].dets.push_back({c, 1, 0.6});
  scenes[2].dets.push_back({far2, 1, 0.5});
  // scene3: class1 gt D; det D 0.4 (TP)
  scenes[3].gts.emplace_back(1, d);
  scenes[3].dets.push_back({d, 1, 0.4});

  auto rep = map_metrics(scenes, 2);

  // class0: ranked TP,FP over 2 gts -> envelope 1.0 up to rec 0.5, then 0.
  double ap0 = 51.0 / 101.0;
  // class1: TP(0.6) FP(0.5) TP(0.4) over 2 gts -> 1.0 up to 0.5, 2/3 after.
  double ap1 = (51.0 + 50.0 * (2.0 / 3.0)) / 101.0;
  double want_map = (ap0 + ap1) / 2.0 * 100.0;
  CHECK(rep.map_50 == doctest::Approx(want_map).epsilon(1e-12));
  CHECK(rep.map_50_95 == doctest::Approx(want_map).epsilon(1e-12));

  // F1 sweep: best at conf 0.4 -> tp3 fp2 fn1 -> F1 = 6/9
  CHECK(rep.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(rep.f1_conf == doctest::Approx(0.4));
  CHECK(rep.tp == 3);
  CHECK(rep.fp == 2);
  CHECK(rep.fn == 1);
}

TEST_CASE("mAP50:95 never exceeds mAP50 on random data") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<EvalScene> scenes;
    for (int i = 0; i < 5; ++i) {
      auto s = make_scene();
      for (int g = 0; g < 4; ++g) {
        Box b{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.25),
              rng.uniform(0.05, 0.25)};
        int cls = static_cast<int>(rng.uniform_int(0, 1));
        s.gts.emplace_back(cls, b);
        // jittered detection: partial overlap
        Box jb = b;
        jb.cx += rng.uniform(-0.03, 0.03);
        jb.cy += rng.uniform(-0.03, 0.03);
        s.dets.push_back({jb, cls, rng.uniform(0.2, 1.0)});
      }
      scenes.push_back(s);
    }
    auto rep = map_metrics(scenes, 2);
    CHECK(rep.map_50_95 <= rep.map_50 + 1e-9);
  }
}

TEST_CASE("F1 at the reported operating point >= F1 at conf 0.25") {
  Rng rng(55);
  std::vector<EvalScene> scenes;
  for (int i = 0; i < 10; ++i) {
    auto s = make_scene();
    for (int g = 0; g < 3; ++g) {
      Box b{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.15, 0.15};
      s.gts.emplace_back(0, b);
      if (rng.uniform() < 0.7) s.dets.push_back({b, 0, rng.uniform(0.05, 1.0)});
      if (rng.uniform() < 0.5)
        s.dets.push_back(
            {Box{rng.uniform(0, 1), rng.uniform(0, 1), 0.1, 0.1}, 0, rng.uniform(0.05, 1.0)});
    }
    scenes.push_back(s);
  }
  auto rep = map_metrics(scenes, 1);
  double f1_default = f1_at_confidence(scenes, 1, 0.25);
  CHECK(rep.f1 >= f1_default - 1e-12);
}

TEST_CASE("report writers emit the headline fields") {
  std::vector<EvalScene> scenes(1);
  scenes[0].gts.emplace_back(0, Box{0.5, 0.5, 0.2, 0.2});
  scenes[0].dets.push_back({Box{0.5, 0.5, 0.2, 0.2}, 0, 0.9});
  auto rep = map_metrics(scenes, 1);
  auto table = report_table(rep);
  CHECK(table.find("mAP50:95") != std::string::npos);
  auto kv = report_kv(rep);
  CHECK(kv.find("map_50_95=") != std::string::npos);
  CHECK(kv.find("f1=") != std::string::npos);
}
