#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "taskwise/protocol.hpp"
#include "taskwise/task_kind.hpp"

namespace taskwise {

class ScorerClient;

/// Reference answer for one prompt. Uses the same structured shapes as predictions;
/// segmentation references carry the annotated box, 3 positive and 3 negative
/// points and, for video, the keyframe time.
struct GroundTruth {
  TaskAnswer value;
  /// Question text; only consulted by reward-model tasks (open-ended QA, caption).
  std::string query;
};

/// Parse a ground-truth JSON value for `task`; nullopt when it violates the schema.
std::optional<GroundTruth> ground_truth_from_json(const Json& value, TaskKind task,
                                                  std::string query = {});

struct RewardRecord {
  TaskKind task = TaskKind::MultiChoiceQA;
  double r_acc = 0.0;
  double r_format = 0.0;
  double r_total = 0.0;
};

struct KernelParams {
  double sigma_spatial = 50.0;  // pixels
  double sigma_temporal = 1.0;  // seconds
};

/// Tolerance levels 1 - theta for theta in {0.50, 0.55, ..., 0.95}, written out
/// directly so that boundary comparisons are not disturbed by 1 - theta rounding.
inline const std::vector<double> kDefaultMraTolerances = {0.50, 0.45, 0.40, 0.35, 0.30,
                                                          0.25, 0.20, 0.15, 0.10, 0.05};

struct RewardConfig {
  double format_weight = 1.0;
  KernelParams kernel;
  std::vector<double> mra_tolerances = kDefaultMraTolerances;
  double numeric_rel_tol = 1e-6;
};

/// Exact-match reward for multiple-choice, numeric and math answers.
/// Missing or mistyped predictions score 0.
double rule_qa_reward(const std::optional<TaskAnswer>& pred, const GroundTruth& gt, TaskKind task,
                      double rel_tol = 1e-6);

/// Mean relative accuracy over the tolerance levels.
/// Throws DegenerateReference when gt == 0.
double mra_reward(double pred, double gt,
                  std::span<const double> tolerances = kDefaultMraTolerances);

/// Word-level Levenshtein distance between whitespace-tokenized strings.
std::size_t word_edit_distance(std::string_view hyp, std::string_view ref);

/// 1 - min(1, WER). Throws DegenerateReference when the reference has no words.
double wer_reward(std::string_view pred, std::string_view gt);

double temporal_iou(const Interval& pred, const Interval& gt) noexcept;
double spatial_iou(const Box& pred, const Box& gt) noexcept;

/// Mean IoU over ground-truth frames; frames missing from the prediction score 0
/// and extra predicted frames are ignored.
double mean_frame_iou(const BoxTrack& pred, const BoxTrack& gt) noexcept;

double st_grounding_reward(const SpatioTemporal& pred, const SpatioTemporal& gt) noexcept;
double tracking_reward(const BoxTrack& pred, const BoxTrack& gt) noexcept;

/// exp(-d^2 / (2 sigma^2)). Throws ParameterError for sigma <= 0 or d < 0.
double gaussian_kernel(double d, double sigma);

/// Minimum mean Euclidean distance over all bijections between two 3-point sets.
/// Throws CardinalityError unless both sets have exactly 3 points.
double point_set_distance(std::span<const Point> pred, std::span<const Point> gt);

double image_seg_reward(const SegPrompt& pred, const SegPrompt& gt, const KernelParams& k = {});
double video_seg_reward(const SegPrompt& pred, const SegPrompt& gt, const KernelParams& k = {});

/// Accuracy reward for a parsed prediction. Reward-model tasks are delegated to
/// `scorer`; a null scorer for such a task raises ScoringUnavailable.
double accuracy_reward(const ParsedResponse& parsed, const GroundTruth& gt, TaskKind task,
                       const RewardConfig& config, const ScorerClient* scorer);

/// R = R_acc + R_format.
RewardRecord total_reward(const ParsedResponse& parsed, const GroundTruth& gt, TaskKind task,
                          const RewardConfig& config = {}, const ScorerClient* scorer = nullptr);

}  // namespace taskwise
