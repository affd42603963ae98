#include "taskwise/protocol.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <initializer_list>
#include <set>

namespace taskwise {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool all_space(std::string_view s) noexcept {
  return std::all_of(s.begin(), s.end(), is_space);
}

// Position of the only occurrence of `tag`, or npos if it occurs zero or several times.
std::size_t find_unique(std::string_view text, std::string_view tag) noexcept {
  const std::size_t first = text.find(tag);
  if (first == std::string_view::npos) return first;
  if (text.find(tag, first + 1) != std::string_view::npos) return std::string_view::npos;
  return first;
}

std::optional<double> parse_plain(std::string_view s) noexcept {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') {
    s.remove_prefix(1);
    if (s.empty() || s.front() == '-') return std::nullopt;
  }
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

std::optional<double> json_number(const Json& value) {
  if (!value.is_number()) return std::nullopt;
  const double v = value.get<double>();
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

bool has_exact_keys(const Json& obj, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object() || obj.size() != keys.size()) return false;
  for (std::string_view key : keys) {
    if (!obj.contains(key)) return false;
  }
  return true;
}

std::optional<Box> json_box(const Json& value) {
  if (!value.is_array() || value.size() != 4) return std::nullopt;
  std::array<double, 4> c{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto v = json_number(value[i]);
    if (!v) return std::nullopt;
    c[i] = *v;
  }
  Box box{c[0], c[1], c[2], c[3]};
  if (!is_valid(box)) return std::nullopt;
  return box;
}

std::optional<std::vector<Point>> json_points(const Json& value) {
  if (!value.is_array() || value.size() != kSegPointCount) return std::nullopt;
  std::vector<Point> points;
  points.reserve(kSegPointCount);
  for (const auto& p : value) {
    if (!p.is_array() || p.size() != 2) return std::nullopt;
    const auto x = json_number(p[0]);
    const auto y = json_number(p[1]);
    if (!x || !y) return std::nullopt;
    points.push_back({*x, *y});
  }
  return points;
}

std::optional<Interval> json_interval(const Json& obj) {
  const auto start = json_number(obj.at("start"));
  const auto end = json_number(obj.at("end"));
  if (!start || !end) return std::nullopt;
  Interval interval{*start, *end};
  if (!is_valid(interval)) return std::nullopt;
  return interval;
}

std::optional<BoxTrack> json_track(const Json& value) {
  if (!value.is_array()) return std::nullopt;
  BoxTrack track;
  std::set<std::int64_t> seen;
  for (const auto& entry : value) {
    if (!has_exact_keys(entry, {"frame", "bbox"})) return std::nullopt;
    const auto& frame = entry.at("frame");
    if (!frame.is_number_integer()) return std::nullopt;
    if (frame.is_number_unsigned() &&
        frame.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
      return std::nullopt;
    }
    const auto index = frame.get<std::int64_t>();
    if (index < 0 || !seen.insert(index).second) return std::nullopt;
    const auto box = json_box(entry.at("bbox"));
    if (!box) return std::nullopt;
    track.frames.push_back({index, *box});
  }
  return track;
}

std::optional<TaskAnswer> perception_from_json(const Json& obj, TaskKind task) {
  switch (task) {
    case TaskKind::TemporalGrounding: {
      if (!has_exact_keys(obj, {"start", "end"})) return std::nullopt;
      if (auto interval = json_interval(obj)) return TaskAnswer{*interval};
      return std::nullopt;
    }
    case TaskKind::SpatialGrounding: {
      if (!has_exact_keys(obj, {"bbox"})) return std::nullopt;
      if (auto box = json_box(obj.at("bbox"))) return TaskAnswer{*box};
      return std::nullopt;
    }
    case TaskKind::SpatioTemporalGrounding: {
      if (!has_exact_keys(obj, {"start", "end", "boxes"})) return std::nullopt;
      auto interval = json_interval(obj);
      auto track = json_track(obj.at("boxes"));
      if (!interval || !track) return std::nullopt;
      return TaskAnswer{SpatioTemporal{*interval, std::move(*track)}};
    }
    case TaskKind::Tracking: {
      if (!has_exact_keys(obj, {"boxes"})) return std::nullopt;
      if (auto track = json_track(obj.at("boxes"))) return TaskAnswer{std::move(*track)};
      return std::nullopt;
    }
    case TaskKind::ImageSegmentation:
    case TaskKind::VideoSegmentation: {
      const bool video = task == TaskKind::VideoSegmentation;
      const bool keys_ok = video ? has_exact_keys(obj, {"bbox", "pos_points", "neg_points", "keyframe"})
                                 : has_exact_keys(obj, {"bbox", "pos_points", "neg_points"});
      if (!keys_ok) return std::nullopt;
      auto box = json_box(obj.at("bbox"));
      auto pos = json_points(obj.at("pos_points"));
      auto neg = json_points(obj.at("neg_points"));
      if (!box || !pos || !neg) return std::nullopt;
      SegPrompt prompt{*box, std::move(*pos), std::move(*neg), std::nullopt};
      if (video) {
        prompt.keyframe = json_number(obj.at("keyframe"));
        if (!prompt.keyframe) return std::nullopt;
      }
      return TaskAnswer{std::move(prompt)};
    }
    default:
      return std::nullopt;
  }
}

Json box_json(const Box& b) { return Json::array({b.x1, b.y1, b.x2, b.y2}); }

Json track_json(const BoxTrack& track) {
  Json out = Json::array();
  for (const auto& fb : track.frames) {
    Json entry = Json::object();
    entry["frame"] = fb.frame;
    entry["bbox"] = box_json(fb.box);
    out.push_back(std::move(entry));
  }
  return out;
}

Json points_json(const std::vector<Point>& points) {
  Json out = Json::array();
  for (const auto& p : points) out.push_back(Json::array({p.x, p.y}));
  return out;
}

std::string shortest_repr(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

}  // namespace

const Box* BoxTrack::find(std::int64_t frame) const noexcept {
  for (const auto& fb : frames) {
    if (fb.frame == frame) return &fb.box;
  }
  return nullptr;
}

bool is_valid(const Interval& interval) noexcept {
  return std::isfinite(interval.start) && std::isfinite(interval.end) &&
         interval.start <= interval.end;
}

bool is_valid(const Box& box) noexcept {
  return std::isfinite(box.x1) && std::isfinite(box.y1) && std::isfinite(box.x2) &&
         std::isfinite(box.y2) && box.x1 <= box.x2 && box.y1 <= box.y2;
}

std::optional<double> parse_number(std::string_view text) noexcept {
  text = trim(text);
  const std::size_t slash = text.find('/');
  if (slash == std::string_view::npos) return parse_plain(text);
  const auto num = parse_plain(trim(text.substr(0, slash)));
  const auto den = parse_plain(trim(text.substr(slash + 1)));
  if (!num || !den || *den == 0.0) return std::nullopt;
  const double value = *num / *den;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

std::optional<TaskAnswer> answer_from_json(const Json& value, TaskKind task) {
  switch (task) {
    case TaskKind::MultiChoiceQA: {
      if (!value.is_string()) return std::nullopt;
      const auto label = trim(value.get_ref<const std::string&>());
      if (label.empty()) return std::nullopt;
      return TaskAnswer{Choice{std::string(label)}};
    }
    case TaskKind::NumericQA:
    case TaskKind::RegressionQA:
    case TaskKind::MathQA: {
      if (value.is_string()) {
        if (auto v = parse_number(value.get_ref<const std::string&>())) return TaskAnswer{Number{*v}};
        return std::nullopt;
      }
      if (auto v = json_number(value)) return TaskAnswer{Number{*v}};
      return std::nullopt;
    }
    case TaskKind::OcrQA:
    case TaskKind::OpenEndedQA:
    case TaskKind::Caption: {
      if (!value.is_string()) return std::nullopt;
      const auto text = trim(value.get_ref<const std::string&>());
      if (text.empty()) return std::nullopt;
      return TaskAnswer{Text{std::string(text)}};
    }
    default:
      return perception_from_json(value, task);
  }
}

std::optional<TaskAnswer> parse_answer(std::string_view payload, TaskKind task) {
  payload = trim(payload);
  if (is_perception(task)) {
    Json doc = Json::parse(payload.begin(), payload.end(), nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) return std::nullopt;
    return perception_from_json(doc, task);
  }
  return answer_from_json(Json(std::string(payload)), task);
}

ParsedResponse parse_response(std::string_view raw, TaskKind task) {
  ParsedResponse out;
  const std::size_t t_open = find_unique(raw, kThinkOpen);
  const std::size_t t_close = find_unique(raw, kThinkClose);
  const std::size_t a_open = find_unique(raw, kAnswerOpen);
  const std::size_t a_close = find_unique(raw, kAnswerClose);
  constexpr auto npos = std::string_view::npos;
  if (t_open == npos || t_close == npos || a_open == npos || a_close == npos) return out;

  const std::size_t think_begin = t_open + kThinkOpen.size();
  const std::size_t answer_begin = a_open + kAnswerOpen.size();
  if (!(think_begin <= t_close && t_close + kThinkClose.size() <= a_open &&
        answer_begin <= a_close)) {
    return out;
  }
  if (!all_space(raw.substr(0, t_open)) ||
      !all_space(raw.substr(t_close + kThinkClose.size(), a_open - t_close - kThinkClose.size())) ||
      !all_space(raw.substr(a_close + kAnswerClose.size()))) {
    return out;
  }

  out.think_text = std::string(raw.substr(think_begin, t_close - think_begin));
  out.answer_raw = std::string(raw.substr(answer_begin, a_close - answer_begin));
  try {
    out.answer = parse_answer(out.answer_raw, task);
  } catch (const std::exception&) {
    out.answer.reset();
  }
  out.format_ok = !is_perception(task) || out.answer.has_value();
  return out;
}

Json answer_to_json(const TaskAnswer& answer) {
  return std::visit(
      [](const auto& a) -> Json {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Choice>) {
          return a.label;
        } else if constexpr (std::is_same_v<T, Number>) {
          return a.value;
        } else if constexpr (std::is_same_v<T, Text>) {
          return a.value;
        } else if constexpr (std::is_same_v<T, Interval>) {
          Json out = Json::object();
          out["start"] = a.start;
          out["end"] = a.end;
          return out;
        } else if constexpr (std::is_same_v<T, Box>) {
          Json out = Json::object();
          out["bbox"] = box_json(a);
          return out;
        } else if constexpr (std::is_same_v<T, BoxTrack>) {
          Json out = Json::object();
          out["boxes"] = track_json(a);
          return out;
        } else if constexpr (std::is_same_v<T, SpatioTemporal>) {
          Json out = Json::object();
          out["start"] = a.interval.start;
          out["end"] = a.interval.end;
          out["boxes"] = track_json(a.boxes);
          return out;
        } else {
          Json out = Json::object();
          out["bbox"] = box_json(a.box);
          out["pos_points"] = points_json(a.pos);
          out["neg_points"] = points_json(a.neg);
          if (a.keyframe) out["keyframe"] = *a.keyframe;
          return out;
        }
      },
      answer);
}

std::string render_answer(const TaskAnswer& answer) {
  if (const auto* c = std::get_if<Choice>(&answer)) return c->label;
  if (const auto* n = std::get_if<Number>(&answer)) return shortest_repr(n->value);
  if (const auto* t = std::get_if<Text>(&answer)) return t->value;
  return answer_to_json(answer).dump();
}

std::string render_response(std::string_view think, const TaskAnswer& answer) {
  std::string out;
  out.append(kThinkOpen).append(think).append(kThinkClose);
  out.append(kAnswerOpen).append(render_answer(answer)).append(kAnswerClose);
  return out;
}

double format_reward(const ParsedResponse& parsed, double weight) noexcept {
  return parsed.format_ok ? weight : 0.0;
}

}  // namespace taskwise
