#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cinefly/core.hpp"

// Shot-description language.
//
//   plan      := stmt (';' stmt)* [';']
//   stmt      := 'target' '(' number ',' number ',' number ')'
//              | 'blend' '(' number ['s'] ')'
//              | primitive 'for' number ['s']
//   primitive := name [ '(' [ key '=' value (',' key '=' value)* ] ')' ]
//   name      := orbit | dolly | pan_orbit | reveal | hold
//   value     := number [unit] | identifier
//   unit      := m | s | m/s | deg | rad | deg/s | rad/s
//
// Keys per primitive:
//   orbit     radius, speed (angular), dir (cw|ccw), climb (m/s, default 0)
//   dolly     speed (m/s), stop (m, default 1)
//   pan_orbit radius, speed (angular), dir, pan (angle, default 0)
//   reveal    speed (m/s), climb (m/s, default 0)
//   hold      (none)
//
// Bare numbers take the canonical unit (m, s, m/s, rad, rad/s).

namespace cinefly::grammar {

enum class Direction { kCw, kCcw };

/// +1 for counterclockwise (seen from above), -1 for clockwise.
inline double sign(Direction d) { return d == Direction::kCcw ? 1.0 : -1.0; }

struct Orbit {
  double radius = 3.0;         // m
  double angular_speed = 0.5;  // rad/s
  Direction direction = Direction::kCcw;
  double climb_rate = 0.0;     // m/s
  bool operator==(const Orbit&) const = default;
};

struct DollyToward {
  double speed = 1.0;          // m/s
  double stop_distance = 1.0;  // m
  bool operator==(const DollyToward&) const = default;
};

struct PanOrbit {
  double radius = 3.0;
  double angular_speed = 0.5;
  Direction direction = Direction::kCcw;
  double pan_offset = 0.0;  // rad
  bool operator==(const PanOrbit&) const = default;
};

struct Reveal {
  double retreat_speed = 1.0;  // m/s
  double climb_rate = 0.0;     // m/s
  bool operator==(const Reveal&) const = default;
};

struct Hold {
  bool operator==(const Hold&) const = default;
};

using Primitive = std::variant<Orbit, DollyToward, PanOrbit, Reveal, Hold>;

struct Segment {
  Primitive primitive;
  double duration = 0.0;  // s
  bool operator==(const Segment&) const = default;
};

inline constexpr double kDefaultBlend = 0.5;
inline constexpr double kMinStandoff = 0.5;

struct ShotPlan {
  std::vector<Segment> segments;
  Vec3 target = Vec3::Zero();
  double blend_duration = kDefaultBlend;

  double total_duration() const;
  bool operator==(const ShotPlan& o) const {
    return segments == o.segments && target == o.target &&
           blend_duration == o.blend_duration;
  }
};

/// Malformed input. `position` is a byte offset into the parsed text.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, std::vector<std::string> expected,
              const std::string& found);

  std::size_t position() const noexcept { return position_; }
  const std::vector<std::string>& expected() const noexcept {
    return expected_;
  }

 private:
  std::size_t position_;
  std::vector<std::string> expected_;
};

/// Well-formed input that violates a plan invariant; `field()` names it.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error("ValidationError", field + ": " + what),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

ShotPlan parse(std::string_view text);

/// Canonical text form; parse(serialize(p)) == p and the output is stable.
std::string serialize(const ShotPlan& plan);

/// Throws ValidationError on the first violated invariant.
void validate(const ShotPlan& plan);

std::string primitive_name(const Primitive& p);

nlohmann::json to_json(const ShotPlan& plan);
ShotPlan plan_from_json(const nlohmann::json& doc);

}  // namespace cinefly::grammar
