#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace taskwise {

enum class TaskKind {
  MultiChoiceQA,
  NumericQA,
  RegressionQA,
  MathQA,
  OcrQA,
  OpenEndedQA,
  Caption,
  TemporalGrounding,
  SpatialGrounding,
  SpatioTemporalGrounding,
  Tracking,
  ImageSegmentation,
  VideoSegmentation,
};

inline constexpr std::array<TaskKind, 13> kAllTaskKinds = {
    TaskKind::MultiChoiceQA,     TaskKind::NumericQA,
    TaskKind::RegressionQA,      TaskKind::MathQA,
    TaskKind::OcrQA,             TaskKind::OpenEndedQA,
    TaskKind::Caption,           TaskKind::TemporalGrounding,
    TaskKind::SpatialGrounding,  TaskKind::SpatioTemporalGrounding,
    TaskKind::Tracking,          TaskKind::ImageSegmentation,
    TaskKind::VideoSegmentation,
};

/// Stable snake_case identifier used in JSON files ("math_qa", "tracking", ...).
std::string_view to_string(TaskKind kind) noexcept;
std::optional<TaskKind> task_kind_from_string(std::string_view name) noexcept;

/// Tasks whose answer is a JSON payload checked against a fixed schema.
bool is_perception(TaskKind kind) noexcept;

/// Upper bound of the accuracy reward for the task.
double max_accuracy_reward(TaskKind kind) noexcept;

}  // namespace taskwise
