#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "taskwise/task_kind.hpp"

namespace taskwise {

using Json = nlohmann::ordered_json;

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Time span in seconds. Valid when start <= end.
struct Interval {
  double start = 0.0;
  double end = 0.0;
  bool operator==(const Interval&) const = default;
};

/// Axis-aligned box (x1, y1, x2, y2) in absolute pixels. Valid when x1 <= x2 and y1 <= y2.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  bool operator==(const Box&) const = default;
};

struct FrameBox {
  std::int64_t frame = 0;
  Box box;
  bool operator==(const FrameBox&) const = default;
};

struct BoxTrack {
  std::vector<FrameBox> frames;
  bool operator==(const BoxTrack&) const = default;

  /// Box annotated for `frame`, if any.
  const Box* find(std::int64_t frame) const noexcept;
};

struct SpatioTemporal {
  Interval interval;
  BoxTrack boxes;
  bool operator==(const SpatioTemporal&) const = default;
};

/// Promptable-segmenter input: a box, positive and negative clicks, and for video
/// the keyframe time (seconds) at which the prompt applies.
struct SegPrompt {
  Box box;
  std::vector<Point> pos;
  std::vector<Point> neg;
  std::optional<double> keyframe;
  bool operator==(const SegPrompt&) const = default;
};

struct Choice {
  std::string label;
  bool operator==(const Choice&) const = default;
};

struct Number {
  double value = 0.0;
  bool operator==(const Number&) const = default;
};

struct Text {
  std::string value;
  bool operator==(const Text&) const = default;
};

using TaskAnswer =
    std::variant<Choice, Number, Text, Interval, Box, BoxTrack, SpatioTemporal, SegPrompt>;

inline constexpr std::size_t kSegPointCount = 3;

struct ParsedResponse {
  std::string think_text;
  std::string answer_raw;
  std::optional<TaskAnswer> answer;
  bool format_ok = false;
};

bool is_valid(const Interval& interval) noexcept;
bool is_valid(const Box& box) noexcept;

/// Plain numeral ("3", "-0.25", "1e3") or simple fraction "a/b". Surrounding
/// whitespace is ignored; anything else yields nullopt.
std::optional<double> parse_number(std::string_view text) noexcept;

/// Decompose a raw rollout into think text and a task answer.
///
/// The response must consist of exactly one `<think>...</think>` block followed
/// by exactly one `<answer>...</answer>` block, with only whitespace outside them.
/// Perception tasks additionally require the answer to satisfy the task's JSON
/// schema for `format_ok`. Never throws on malformed input.
ParsedResponse parse_response(std::string_view raw, TaskKind task);

/// Schema-validated answer payload (the text between the answer tags).
std::optional<TaskAnswer> parse_answer(std::string_view payload, TaskKind task);

/// Build a typed answer from an already-decoded JSON value. Also used for ground
/// truth records. For perception tasks the value must be an object matching the
/// schema; for QA tasks a string (or number for numeric tasks).
std::optional<TaskAnswer> answer_from_json(const Json& value, TaskKind task);

/// Canonical JSON for perception answers; QA answers map to a JSON string or number.
Json answer_to_json(const TaskAnswer& answer);

/// Canonical payload text placed between the answer tags.
std::string render_answer(const TaskAnswer& answer);

/// Full response text `<think>think</think><answer>payload</answer>`.
std::string render_response(std::string_view think, const TaskAnswer& answer);

/// w_fmt when the response is well formed, 0 otherwise.
double format_reward(const ParsedResponse& parsed, double weight = 1.0) noexcept;

}  // namespace taskwise
