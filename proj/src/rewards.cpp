#include "taskwise/rewards.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "taskwise/errors.hpp"
#include "taskwise/scorer.hpp"

namespace taskwise {

namespace {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream ss{std::string(text)};
  std::string word;
  while (ss >> word) words.push_back(word);
  return words;
}

std::string normalize_choice(std::string_view label) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  label = trim(label);
  if (!label.empty() && label.back() == '.') label = trim(label.substr(0, label.size() - 1));
  if (label.size() >= 2 && label.front() == '(' && label.back() == ')') {
    label = trim(label.substr(1, label.size() - 2));
  }
  std::string out(label);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

template <typename T>
const T& expect_gt(const GroundTruth& gt, TaskKind task) {
  if (const auto* v = std::get_if<T>(&gt.value)) return *v;
  throw ParameterError("ground truth shape does not match task " + std::string(to_string(task)));
}

// Kernel term that collapses to 0 when either point set is malformed.
double point_term(const std::vector<Point>& pred, const std::vector<Point>& gt, double sigma) {
  try {
    return gaussian_kernel(point_set_distance(pred, gt), sigma);
  } catch (const CardinalityError&) {
    return 0.0;
  }
}

}  // namespace

std::optional<GroundTruth> ground_truth_from_json(const Json& value, TaskKind task,
                                                  std::string query) {
  auto answer = answer_from_json(value, task);
  if (!answer) return std::nullopt;
  return GroundTruth{std::move(*answer), std::move(query)};
}

double rule_qa_reward(const std::optional<TaskAnswer>& pred, const GroundTruth& gt, TaskKind task,
                      double rel_tol) {
  if (!pred) return 0.0;
  switch (task) {
    case TaskKind::MultiChoiceQA: {
      const auto& ref = expect_gt<Choice>(gt, task);
      const auto* p = std::get_if<Choice>(&*pred);
      return p && normalize_choice(p->label) == normalize_choice(ref.label) ? 1.0 : 0.0;
    }
    case TaskKind::NumericQA:
    case TaskKind::MathQA: {
      const double ref = expect_gt<Number>(gt, task).value;
      const auto* p = std::get_if<Number>(&*pred);
      if (!p || !std::isfinite(p->value)) return 0.0;
      if (p->value == ref) return 1.0;
      const double scale = std::max(std::abs(p->value), std::abs(ref));
      return std::abs(p->value - ref) <= rel_tol * scale ? 1.0 : 0.0;
    }
    default:
      throw ParameterError("rule_qa_reward does not handle task " + std::string(to_string(task)));
  }
}

double mra_reward(double pred, double gt, std::span<const double> tolerances) {
  if (gt == 0.0 || !std::isfinite(gt)) throw DegenerateReference("MRA reference must be finite and non-zero");
  if (tolerances.empty()) throw ParameterError("MRA needs at least one tolerance level");
  if (!std::isfinite(pred)) return 0.0;
  const double rel = std::abs(pred - gt) / std::abs(gt);
  const auto hits = std::count_if(tolerances.begin(), tolerances.end(),
                                  [rel](double tol) { return rel < tol; });
  return static_cast<double>(hits) / static_cast<double>(tolerances.size());
}

std::size_t word_edit_distance(std::string_view hyp, std::string_view ref) {
  const auto h = split_words(hyp);
  const auto r = split_words(ref);
  // Single-row Levenshtein over words.
  std::vector<std::size_t> row(r.size() + 1);
  for (std::size_t j = 0; j <= r.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= h.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= r.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (h[i - 1] == r[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[r.size()];
}

double wer_reward(std::string_view pred, std::string_view gt) {
  const std::size_t ref_words = split_words(gt).size();
  if (ref_words == 0) throw DegenerateReference("WER reference has no words");
  const double wer = static_cast<double>(word_edit_distance(pred, gt)) / static_cast<double>(ref_words);
  return 1.0 - std::min(1.0, wer);
}

double temporal_iou(const Interval& pred, const Interval& gt) noexcept {
  if (!is_valid(pred) || !is_valid(gt)) return 0.0;
  const double len_p = pred.end - pred.start;
  const double len_g = gt.end - gt.start;
  if (len_p <= 0.0 || len_g <= 0.0) return 0.0;
  const double inter = std::max(0.0, std::min(pred.end, gt.end) - std::max(pred.start, gt.start));
  const double uni = len_p + len_g - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double spatial_iou(const Box& pred, const Box& gt) noexcept {
  if (!is_valid(pred) || !is_valid(gt)) return 0.0;
  const double area_p = (pred.x2 - pred.x1) * (pred.y2 - pred.y1);
  const double area_g = (gt.x2 - gt.x1) * (gt.y2 - gt.y1);
  if (area_p <= 0.0 || area_g <= 0.0) return 0.0;
  const double iw = std::max(0.0, std::min(pred.x2, gt.x2) - std::max(pred.x1, gt.x1));
  const double ih = std::max(0.0, std::min(pred.y2, gt.y2) - std::max(pred.y1, gt.y1));
  const double inter = iw * ih;
  const double uni = area_p + area_g - inter;
  if (!(uni > 0.0) || !std::isfinite(uni)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double mean_frame_iou(const BoxTrack& pred, const BoxTrack& gt) noexcept {
  if (gt.frames.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& ref : gt.frames) {
    if (const Box* box = pred.find(ref.frame)) sum += spatial_iou(*box, ref.box);
  }
  return sum / static_cast<double>(gt.frames.size());
}

double st_grounding_reward(const SpatioTemporal& pred, const SpatioTemporal& gt) noexcept {
  return temporal_iou(pred.interval, gt.interval) + mean_frame_iou(pred.boxes, gt.boxes);
}

double tracking_reward(const BoxTrack& pred, const BoxTrack& gt) noexcept {
  return mean_frame_iou(pred, gt);
}

double gaussian_kernel(double d, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("kernel sigma must be positive");
  if (!(d >= 0.0)) throw ParameterError("kernel distance must be non-negative");
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

double point_set_distance(std::span<const Point> pred, std::span<const Point> gt) {
  if (pred.size() != kSegPointCount || gt.size() != kSegPointCount) {
    throw CardinalityError("point sets must hold exactly 3 points");
  }
  std::array<std::size_t, kSegPointCount> perm{0, 1, 2};
  double best = std::numeric_limits<double>::infinity();
  do {
    double sum = 0.0;
    for (std::size_t i = 0; i < kSegPointCount; ++i) {
      sum += std::hypot(pred[i].x - gt[perm[i]].x, pred[i].y - gt[perm[i]].y);
    }
    best = std::min(best, sum / 3.0);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double image_seg_reward(const SegPrompt& pred, const SegPrompt& gt, const KernelParams& k) {
  return spatial_iou(pred.box, gt.box) + point_term(pred.pos, gt.pos, k.sigma_spatial) +
         point_term(pred.neg, gt.neg, k.sigma_spatial);
}

double video_seg_reward(const SegPrompt& pred, const SegPrompt& gt, const KernelParams& k) {
  double temporal = 0.0;
  if (pred.keyframe && gt.keyframe && std::isfinite(*pred.keyframe) && std::isfinite(*gt.keyframe)) {
    temporal = gaussian_kernel(std::abs(*pred.keyframe - *gt.keyframe), k.sigma_temporal);
  }
  return image_seg_reward(pred, gt, k) + temporal;
}

double accuracy_reward(const ParsedResponse& parsed, const GroundTruth& gt, TaskKind task,
                       const RewardConfig& config, const ScorerClient* scorer) {
  if (!parsed.answer) return 0.0;
  const TaskAnswer& answer = *parsed.answer;
  switch (task) {
    case TaskKind::MultiChoiceQA:
    case TaskKind::NumericQA:
    case TaskKind::MathQA:
      return rule_qa_reward(answer, gt, task, config.numeric_rel_tol);
    case TaskKind::RegressionQA: {
      const double ref = expect_gt<Number>(gt, task).value;
      const auto* p = std::get_if<Number>(&answer);
      return p ? mra_reward(p->value, ref, config.mra_tolerances) : 0.0;
    }
    case TaskKind::OcrQA: {
      const auto& ref = expect_gt<Text>(gt, task);
      const auto* p = std::get_if<Text>(&answer);
      return p ? wer_reward(p->value, ref.value) : 0.0;
    }
    case TaskKind::OpenEndedQA:
    case TaskKind::Caption: {
      const auto& ref = expect_gt<Text>(gt, task);
      const auto* p = std::get_if<Text>(&answer);
      if (!p) return 0.0;
      if (scorer == nullptr) throw ScoringUnavailable("no reward-model backend configured", false, 0);
      return scorer->score({gt.query, p->value, ref.value}).score;
    }
    case TaskKind::TemporalGrounding: {
      const auto* p = std::get_if<Interval>(&answer);
      return p ? temporal_iou(*p, expect_gt<Interval>(gt, task)) : 0.0;
    }
    case TaskKind::SpatialGrounding: {
      const auto* p = std::get_if<Box>(&answer);
      return p ? spatial_iou(*p, expect_gt<Box>(gt, task)) : 0.0;
    }
    case TaskKind::SpatioTemporalGrounding: {
      const auto* p = std::get_if<SpatioTemporal>(&answer);
      return p ? st_grounding_reward(*p, expect_gt<SpatioTemporal>(gt, task)) : 0.0;
    }
    case TaskKind::Tracking: {
      const auto* p = std::get_if<BoxTrack>(&answer);
      return p ? tracking_reward(*p, expect_gt<BoxTrack>(gt, task)) : 0.0;
    }
    case TaskKind::ImageSegmentation: {
      const auto* p = std::get_if<SegPrompt>(&answer);
      return p ? image_seg_reward(*p, expect_gt<SegPrompt>(gt, task), config.kernel) : 0.0;
    }
    case TaskKind::VideoSegmentation: {
      const auto* p = std::get_if<SegPrompt>(&answer);
      return p ? video_seg_reward(*p, expect_gt<SegPrompt>(gt, task), config.kernel) : 0.0;
    }
  }
  return 0.0;
}

RewardRecord total_reward(const ParsedResponse& parsed, const GroundTruth& gt, TaskKind task,
                          const RewardConfig& config, const ScorerClient* scorer) {
  RewardRecord record;
  record.task = task;
  record.r_acc = accuracy_reward(parsed, gt, task, config, scorer);
  record.r_format = format_reward(parsed, config.format_weight);
  record.r_total = record.r_acc + record.r_format;
  return record;
}

}  // namespace taskwise
