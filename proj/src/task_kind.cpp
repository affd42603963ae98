#include "taskwise/task_kind.hpp"

namespace taskwise {

std::string_view to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::MultiChoiceQA: return "multi_choice_qa";
    case TaskKind::NumericQA: return "numeric_qa";
    case TaskKind::RegressionQA: return "regression_qa";
    case TaskKind::MathQA: return "math_qa";
    case TaskKind::OcrQA: return "ocr_qa";
    case TaskKind::OpenEndedQA: return "open_ended_qa";
    case TaskKind::Caption: return "caption";
    case TaskKind::TemporalGrounding: return "temporal_grounding";
    case TaskKind::SpatialGrounding: return "spatial_grounding";
    case TaskKind::SpatioTemporalGrounding: return "spatio_temporal_grounding";
    case TaskKind::Tracking: return "tracking";
    case TaskKind::ImageSegmentation: return "image_segmentation";
    case TaskKind::VideoSegmentation: return "video_segmentation";
  }
  return "unknown";
}

std::optional<TaskKind> task_kind_from_string(std::string_view name) noexcept {
  for (TaskKind kind : kAllTaskKinds) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

bool is_perception(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::TemporalGrounding:
    case TaskKind::SpatialGrounding:
    case TaskKind::SpatioTemporalGrounding:
    case TaskKind::Tracking:
    case TaskKind::ImageSegmentation:
    case TaskKind::VideoSegmentation:
      return true;
    default:
      return false;
  }
}

double max_accuracy_reward(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::SpatioTemporalGrounding: return 2.0;
    case TaskKind::ImageSegmentation: return 3.0;
    case TaskKind::VideoSegmentation: return 4.0;
    default: return 1.0;
  }
}

}  // namespace taskwise
