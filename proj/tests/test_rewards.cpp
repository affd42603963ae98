#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "taskwise/errors.hpp"
#include "taskwise/rewards.hpp"
#include "taskwise/scorer.hpp"

using namespace taskwise;

namespace {

constexpr double kTol = 1e-6;

GroundTruth gt_of(TaskAnswer value) { return GroundTruth{std::move(value), {}}; }

std::vector<Point> pts(std::initializer_list<Point> p) { return p; }

SegPrompt seg(Box box, std::vector<Point> pos, std::vector<Point> neg,
              std::optional<double> keyframe = std::nullopt) {
  return SegPrompt{box, std::move(pos), std::move(neg), keyframe};
}

const std::vector<Point> kGtPos = {{0, 0}, {10, 0}, {0, 10}};
const std::vector<Point> kGtNeg = {{100, 100}, {120, 90}, {80, 140}};

}  // namespace

TEST_SUITE("rewards") {

TEST_CASE("rule-based QA equivalence") {
  CHECK(rule_qa_reward(Choice{"B"}, gt_of(Choice{"B"}), TaskKind::MultiChoiceQA) == 1.0);
  CHECK(rule_qa_reward(Choice{"(b)."}, gt_of(Choice{"B"}), TaskKind::MultiChoiceQA) == 1.0);
  CHECK(rule_qa_reward(Choice{"C"}, gt_of(Choice{"B"}), TaskKind::MultiChoiceQA) == 0.0);
  CHECK(rule_qa_reward(Number{3.14}, gt_of(Number{2.71}), TaskKind::NumericQA) == 0.0);

  const auto half = ground_truth_from_json(Json("1/2"), TaskKind::MathQA);
  REQUIRE(half);
  CHECK(rule_qa_reward(Number{0.5}, *half, TaskKind::MathQA) == 1.0);
  CHECK(rule_qa_reward(Number{1000.0000001}, gt_of(Number{1000.0}), TaskKind::NumericQA) == 1.0);
  CHECK(rule_qa_reward(Number{1000.01}, gt_of(Number{1000.0}), TaskKind::NumericQA) == 0.0);
  CHECK(rule_qa_reward(std::nullopt, gt_of(Choice{"B"}), TaskKind::MultiChoiceQA) == 0.0);
  CHECK(rule_qa_reward(Text{"B"}, gt_of(Choice{"B"}), TaskKind::MultiChoiceQA) == 0.0);
}

TEST_CASE("mean relative accuracy") {
  CHECK(mra_reward(7.0, 7.0) == 1.0);
  CHECK(mra_reward(13.0, 10.0) == 0.4);
  CHECK(mra_reward(16.0, 10.0) == 0.0);
  CHECK(mra_reward(-13.0, -10.0) == 0.4);
  CHECK_THROWS_AS(mra_reward(1.0, 0.0), DegenerateReference);

  for (double pred : {9.0, 10.4, 11.7, 12.2, 14.9, 3.0, 0.0}) {
    CAPTURE(pred);
    CHECK(mra_reward(pred, 10.0) == oracle::mra(pred, 10.0));
  }
}

TEST_CASE("word error rate reward") {
  CHECK(wer_reward("the cat sat", "the cat sat") == 1.0);
  CHECK(wer_reward("a x c", "a b c") == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(wer_reward("one two three four five six seven", "alpha beta") == 0.0);
  CHECK(wer_reward("", "a b") == 0.0);
  CHECK_THROWS_AS(wer_reward("a", "   "), DegenerateReference);

  std::mt19937 gen(5);
  std::uniform_int_distribution<int> word(0, 4), len(0, 7);
  auto sentence = [&] {
    std::string s;
    const int n = len(gen);
    for (int i = 0; i < n; ++i) s += "w" + std::to_string(word(gen)) + " ";
    return s;
  };
  for (int i = 0; i < 300; ++i) {
    const auto a = sentence(), b = sentence();
    CHECK(word_edit_distance(a, b) == oracle::edit_distance(a, b));
  }
}

TEST_CASE("temporal IoU") {
  CHECK(temporal_iou({2, 5}, {2, 5}) == 1.0);
  CHECK(temporal_iou({0, 1}, {2, 3}) == 0.0);
  CHECK(temporal_iou({0, 10}, {5, 15}) == doctest::Approx(1.0 / 3.0).epsilon(kTol));
  CHECK(temporal_iou({3, 3}, {3, 3}) == 0.0);
  CHECK(temporal_iou({5, 2}, {2, 5}) == 0.0);
  CHECK(temporal_iou({0, NAN}, {2, 5}) == 0.0);

  std::mt19937 gen(11);
  std::uniform_int_distribution<int> t(0, 30);
  for (int i = 0; i < 500; ++i) {
    int as = t(gen), ae = t(gen), bs = t(gen), be = t(gen);
    if (as > ae) std::swap(as, ae);
    if (bs > be) std::swap(bs, be);
    CHECK(temporal_iou({double(as), double(ae)}, {double(bs), double(be)}) ==
          doctest::Approx(oracle::grid_tiou(as, ae, bs, be)).epsilon(1e-12));
  }
}

TEST_CASE("spatial IoU") {
  CHECK(spatial_iou({1, 2, 30, 40}, {1, 2, 30, 40}) == 1.0);
  CHECK(spatial_iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0).epsilon(kTol));
  CHECK(spatial_iou({0, 0, 1, 1}, {5, 5, 6, 6}) == 0.0);
  CHECK(spatial_iou({0, 0, 0, 5}, {0, 0, 0, 5}) == 0.0);
  CHECK(spatial_iou({3, 0, 1, 1}, {0, 0, 2, 2}) == 0.0);

  std::mt19937 gen(12);
  std::uniform_int_distribution<int> c(0, 12);
  for (int i = 0; i < 500; ++i) {
    int a[4], b[4];
    for (int& v : a) v = c(gen);
    for (int& v : b) v = c(gen);
    if (a[0] > a[2]) std::swap(a[0], a[2]);
    if (a[1] > a[3]) std::swap(a[1], a[3]);
    if (b[0] > b[2]) std::swap(b[0], b[2]);
    if (b[1] > b[3]) std::swap(b[1], b[3]);
    const Box ba{double(a[0]), double(a[1]), double(a[2]), double(a[3])};
    const Box bb{double(b[0]), double(b[1]), double(b[2]), double(b[3])};
    CHECK(spatial_iou(ba, bb) ==
          doctest::Approx(oracle::grid_iou(a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3])).epsilon(1e-12));
    CHECK(spatial_iou(ba, bb) == spatial_iou(bb, ba));
  }
}

TEST_CASE("spatio-temporal grounding and tracking") {
  const BoxTrack perfect{{{0, {0, 0, 2, 2}}, {1, {0, 0, 2, 2}}}};
  const SpatioTemporal gt{{0, 10}, perfect};
  CHECK(st_grounding_reward(gt, gt) == 2.0);
  CHECK(st_grounding_reward(SpatioTemporal{{20, 30}, perfect}, gt) == 1.0);

  const BoxTrack shifted{{{0, {1, 1, 3, 3}}, {1, {1, 1, 3, 3}}}};
  CHECK(st_grounding_reward(SpatioTemporal{{5, 15}, shifted}, gt) ==
        doctest::Approx(1.0 / 3.0 + 1.0 / 7.0).epsilon(kTol));

  CHECK(tracking_reward(perfect, perfect) == 1.0);
  const BoxTrack four{{{0, {0, 0, 2, 2}}, {1, {0, 0, 2, 2}}, {2, {0, 0, 2, 2}}, {3, {0, 0, 2, 2}}}};
  CHECK(tracking_reward(perfect, four) == 0.5);

  const BoxTrack three_gt{{{0, {0, 0, 2, 2}}, {1, {0, 0, 2, 2}}, {2, {0, 0, 2, 2}}}};
  const BoxTrack three_pred{{{0, {0, 0, 2, 2}}, {1, {1, 1, 3, 3}}, {2, {5, 5, 6, 6}}, {9, {0, 0, 2, 2}}}};
  CHECK(tracking_reward(three_pred, three_gt) == doctest::Approx((1.0 + 1.0 / 7.0) / 3.0).epsilon(kTol));
  CHECK(tracking_reward(three_pred, BoxTrack{}) == 0.0);
}

TEST_CASE("gaussian kernel") {
  CHECK(gaussian_kernel(0.0, 50.0) == 1.0);
  CHECK(gaussian_kernel(50.0, 50.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(gaussian_kernel(2.0, 1.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(gaussian_kernel(1.0, 0.0), ParameterError);
  CHECK_THROWS_AS(gaussian_kernel(1.0, -2.0), ParameterError);
  CHECK_THROWS_AS(gaussian_kernel(-1.0, 1.0), ParameterError);

  double prev = 2.0;
  for (double d = 0.0; d < 30.0; d += 0.25) {
    const double g = gaussian_kernel(d, 10.0);
    CHECK(g < prev);
    prev = g;
  }
}

TEST_CASE("optimal three-point matching") {
  CHECK(point_set_distance(kGtPos, kGtPos) == 0.0);
  CHECK(point_set_distance(pts({{0, 10}, {0, 0}, {10, 0}}), kGtPos) == 0.0);
  CHECK(point_set_distance(pts({{3, 4}, {10, 0}, {0, 10}}), kGtPos) ==
        doctest::Approx(5.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(point_set_distance(pts({{0, 0}, {1, 1}}), kGtPos), CardinalityError);
}

TEST_CASE("image segmentation reward") {
  const auto gt = seg({0, 0, 100, 100}, kGtPos, kGtNeg);
  CHECK(image_seg_reward(gt, gt) == 3.0);

  // Every point displaced by (30, 40): optimal matching keeps identity at distance 50.
  auto shift = [](std::vector<Point> p) {
    for (auto& q : p) q = {q.x + 30, q.y + 40};
    return p;
  };
  CHECK(image_seg_reward(seg(gt.box, shift(kGtPos), shift(kGtNeg)), gt) ==
        doctest::Approx(1.0 + 2.0 * std::exp(-0.5)).epsilon(1e-12));

  const auto gt_small = seg({0, 0, 2, 2}, kGtPos, kGtNeg);
  const auto pred = seg({1, 1, 3, 3}, pts({{3, 4}, {10, 0}, {0, 10}}), kGtNeg);
  CHECK(image_seg_reward(pred, gt_small) == doctest::Approx(2.142301741594001).epsilon(kTol));

  // A malformed point set zeroes only its own term.
  const auto bad = seg(gt.box, pts({{0, 0}}), kGtNeg);
  CHECK(image_seg_reward(bad, gt) == 2.0);
}

TEST_CASE("video segmentation reward") {
  const auto gt = seg({0, 0, 100, 100}, kGtPos, kGtNeg, 4.0);
  CHECK(video_seg_reward(gt, gt) == 4.0);
  CHECK(video_seg_reward(seg(gt.box, kGtPos, kGtNeg, 5.0), gt) ==
        doctest::Approx(3.0 + std::exp(-0.5)).epsilon(1e-12));
  CHECK(video_seg_reward(seg(gt.box, kGtPos, kGtNeg, 1.0), gt) ==
        doctest::Approx(3.0 + std::exp(-4.5)).epsilon(1e-12));
  CHECK(video_seg_reward(seg(gt.box, kGtPos, kGtNeg), gt) == 3.0);
}

TEST_CASE("total reward composition") {
  const auto gt = gt_of(Choice{"B"});
  const auto right = parse_response("<think>t</think><answer>B</answer>", TaskKind::MultiChoiceQA);
  const auto wrong = parse_response("<think>t</think><answer>C</answer>", TaskKind::MultiChoiceQA);
  const auto broken = parse_response("B", TaskKind::MultiChoiceQA);
  CHECK(total_reward(right, gt, TaskKind::MultiChoiceQA).r_total == 2.0);
  CHECK(total_reward(wrong, gt, TaskKind::MultiChoiceQA).r_total == 1.0);
  CHECK(total_reward(broken, gt, TaskKind::MultiChoiceQA).r_total == 0.0);

  RewardConfig half;
  half.format_weight = 0.5;
  const auto rec = total_reward(right, gt, TaskKind::MultiChoiceQA, half);
  CHECK(rec.r_acc == 1.0);
  CHECK(rec.r_format == 0.5);
  CHECK(rec.r_total == 1.5);
}

TEST_CASE("reward-model tasks go through the scorer") {
  const ScorerClient mock(std::make_shared<MockScorerBackend>());
  GroundTruth gt{Text{"a b c d"}, "describe the video"};
  const auto parsed = parse_response("<think>t</think><answer>a b</answer>", TaskKind::Caption);
  const auto rec = total_reward(parsed, gt, TaskKind::Caption, {}, &mock);
  CHECK(rec.r_acc == 0.5);
  CHECK(rec.r_total == 1.5);
  CHECK_THROWS_AS(total_reward(parsed, gt, TaskKind::Caption), ScoringUnavailable);
}

TEST_CASE("mismatched ground truth is a parameter error") {
  const auto parsed = parse_response(R"(<think>t</think><answer>{"bbox":[0,0,1,1]}</answer>)",
                                     TaskKind::SpatialGrounding);
  CHECK_THROWS_AS(total_reward(parsed, gt_of(Interval{0, 1}), TaskKind::SpatialGrounding), ParameterError);
}

TEST_CASE("bounds, identity maximality and decomposition (property)") {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> c(0.0, 400.0);
  std::uniform_real_distribution<double> t(0.0, 60.0);
  auto box = [&] {
    double a = c(gen), b = c(gen), x = c(gen), y = c(gen);
    return Box{std::min(a, b), std::min(x, y), std::max(a, b), std::max(x, y)};
  };
  auto interval = [&] {
    double a = t(gen), b = t(gen);
    return Interval{std::min(a, b), std::max(a, b)};
  };
  auto points = [&] { return std::vector<Point>{{c(gen), c(gen)}, {c(gen), c(gen)}, {c(gen), c(gen)}}; };
  auto track = [&] {
    BoxTrack tr;
    for (int f = 0; f < 4; ++f) {
      if (gen() % 3 != 0) tr.frames.push_back({f, box()});
    }
    return tr;
  };

  for (int i = 0; i < 10000; ++i) {
    const Interval ia = interval(), ib = interval();
    const Box ba = box(), bb = box();
    const double tiou = temporal_iou(ia, ib);
    const double siou = spatial_iou(ba, bb);
    REQUIRE((tiou >= 0.0 && tiou <= 1.0));
    REQUIRE((siou >= 0.0 && siou <= 1.0));
    REQUIRE(tiou == temporal_iou(ib, ia));
    REQUIRE(siou == spatial_iou(bb, ba));

    const SpatioTemporal sa{ia, track()}, sb{ib, track()};
    const double st = st_grounding_reward(sa, sb);
    REQUIRE((st >= 0.0 && st <= 2.0));
    const double tr = tracking_reward(sa.boxes, sb.boxes);
    REQUIRE((tr >= 0.0 && tr <= 1.0));

    const auto pa = seg(ba, points(), points(), t(gen));
    const auto pb = seg(bb, points(), points(), t(gen));
    const double img = image_seg_reward(pa, pb);
    const double vid = video_seg_reward(pa, pb);
    REQUIRE((img > 0.0 && img <= 3.0));
    REQUIRE((vid > 0.0 && vid <= 4.0));

    const double pred = c(gen) - 200.0, ref = c(gen) + 1.0;
    const double mra = mra_reward(pred, ref);
    REQUIRE((mra >= 0.0 && mra <= 1.0));

    if (i % 100 == 0) {
      if (ia.end > ia.start) REQUIRE(temporal_iou(ia, ia) == 1.0);
      if (ba.x2 > ba.x1 && ba.y2 > ba.y1) {
        REQUIRE(spatial_iou(ba, ba) == 1.0);
        REQUIRE(image_seg_reward(pa, pa) == 3.0);
        REQUIRE(video_seg_reward(pa, pa) == 4.0);
      }
      REQUIRE(mra_reward(ref, ref) == 1.0);
    }

    // Reward decomposition on a rendered response.
    const auto parsed = parse_response(render_response("t", bb), TaskKind::SpatialGrounding);
    const auto rec = total_reward(parsed, gt_of(ba), TaskKind::SpatialGrounding);
    REQUIRE(rec.r_total == rec.r_acc + rec.r_format);
    REQUIRE(std::abs((rec.r_total - rec.r_format) - rec.r_acc) <=
            std::nextafter(rec.r_total, INFINITY) - rec.r_total);
  }
}

}  // TEST_SUITE
