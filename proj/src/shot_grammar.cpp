#include "cinefly/shot_grammar.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace cinefly::grammar {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += i + 1 == items.size() ? " or " : ", ";
    out += items[i];
  }
  return out;
}

enum class Tok { kIdent, kNumber, kPunct, kEnd };

struct Token {
  Tok kind = Tok::kEnd;
  std::string_view text;
  std::size_t pos = 0;
};

std::string describe(const Token& t) {
  if (t.kind == Tok::kEnd) return "end of input";
  return "'" + std::string(t.text) + "'";
}

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' ||
            src_[pos_] == '\r'))
      ++pos_;
    Token t;
    t.pos = pos_;
    if (pos_ >= src_.size()) return t;
    const char c = src_[pos_];
    std::size_t end = pos_;
    if (is_ident_start(c)) {
      while (end < src_.size() && is_ident_char(src_[end])) ++end;
      t.kind = Tok::kIdent;
    } else if (is_digit(c) || c == '.' ||
               ((c == '-' || c == '+') && end + 1 < src_.size() &&
                (is_digit(src_[end + 1]) || src_[end + 1] == '.'))) {
      end = scan_number(end);
      t.kind = Tok::kNumber;
    } else if (c == '(' || c == ')' || c == ',' || c == ';' || c == '=' ||
               c == '/') {
      end = pos_ + 1;
      t.kind = Tok::kPunct;
    } else {
      throw SyntaxError(pos_, {"identifier", "number", "punctuation"},
                        "unexpected character");
    }
    t.text = src_.substr(pos_, end - pos_);
    pos_ = end;
    return t;
  }

 private:
  std::size_t scan_number(std::size_t i) const {
    if (src_[i] == '-' || src_[i] == '+') ++i;
    while (i < src_.size() && is_digit(src_[i])) ++i;
    if (i < src_.size() && src_[i] == '.') {
      ++i;
      while (i < src_.size() && is_digit(src_[i])) ++i;
    }
    if (i < src_.size() && (src_[i] == 'e' || src_[i] == 'E')) {
      std::size_t j = i + 1;
      if (j < src_.size() && (src_[j] == '-' || src_[j] == '+')) ++j;
      if (j < src_.size() && is_digit(src_[j])) {
        while (j < src_.size() && is_digit(src_[j])) ++j;
        i = j;
      }
    }
    return i;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

enum class Unit { kNone, kMeter, kSecond, kMeterPerSecond, kDeg, kRad, kDegPerSecond, kRadPerSecond };

enum class Quantity { kLength, kDuration, kSpeed, kAngle, kAngularRate };

struct Value {
  bool is_number = false;
  double number = 0.0;
  Unit unit = Unit::kNone;
  std::string ident;
  std::size_t pos = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { advance(); }

  ShotPlan run() {
    ShotPlan plan;
    bool have_target = false;
    std::optional<double> blend;
    if (cur_.kind == Tok::kEnd)
      throw SyntaxError(cur_.pos, {"statement"}, describe(cur_));
    while (true) {
      statement(plan, have_target, blend);
      if (is_punct(";")) {
        advance();
        if (cur_.kind == Tok::kEnd) break;
        continue;
      }
      if (cur_.kind == Tok::kEnd) break;
      throw SyntaxError(cur_.pos, {"';'", "end of input"}, describe(cur_));
    }
    if (!have_target)
      throw ValidationError("target", "plan requires a target(x, y, z) statement");
    if (plan.segments.empty())
      throw ValidationError("segments", "plan has no segments");
    if (blend) {
      plan.blend_duration = *blend;
    } else {
      double shortest = std::numeric_limits<double>::infinity();
      for (const auto& s : plan.segments) shortest = std::min(shortest, s.duration);
      plan.blend_duration = std::min(kDefaultBlend, 0.5 * shortest);
    }
    validate(plan);
    return plan;
  }

 private:
  void advance() { cur_ = lexer_.next(); }

  bool is_punct(std::string_view p) const {
    return cur_.kind == Tok::kPunct && cur_.text == p;
  }

  void expect_punct(std::string_view p) {
    if (!is_punct(p))
      throw SyntaxError(cur_.pos, {"'" + std::string(p) + "'"}, describe(cur_));
    advance();
  }

  double number() {
    if (cur_.kind != Tok::kNumber)
      throw SyntaxError(cur_.pos, {"number"}, describe(cur_));
    std::string_view s = cur_.text;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
      throw SyntaxError(cur_.pos, {"finite number"}, describe(cur_));
    advance();
    return v;
  }

  Unit unit() {
    if (cur_.kind != Tok::kIdent) return Unit::kNone;
    const auto pos = cur_.pos;
    Unit base;
    if (cur_.text == "m") base = Unit::kMeter;
    else if (cur_.text == "s") base = Unit::kSecond;
    else if (cur_.text == "deg") base = Unit::kDeg;
    else if (cur_.text == "rad") base = Unit::kRad;
    else
      throw SyntaxError(pos, {"m", "s", "deg", "rad", "m/s", "deg/s", "rad/s"},
                        describe(cur_));
    advance();
    if (!is_punct("/")) return base;
    advance();
    if (cur_.kind != Tok::kIdent || cur_.text != "s" || base == Unit::kSecond)
      throw SyntaxError(cur_.pos, {"s"}, describe(cur_));
    advance();
    switch (base) {
      case Unit::kMeter: return Unit::kMeterPerSecond;
      case Unit::kDeg: return Unit::kDegPerSecond;
      default: return Unit::kRadPerSecond;
    }
  }

  double quantity(double v, Unit u, Quantity q, std::size_t pos) {
    switch (q) {
      case Quantity::kLength:
        if (u == Unit::kNone || u == Unit::kMeter) return v;
        throw SyntaxError(pos, {"m"}, "incompatible unit");
      case Quantity::kDuration:
        if (u == Unit::kNone || u == Unit::kSecond) return v;
        throw SyntaxError(pos, {"s"}, "incompatible unit");
      case Quantity::kSpeed:
        if (u == Unit::kNone || u == Unit::kMeterPerSecond) return v;
        throw SyntaxError(pos, {"m/s"}, "incompatible unit");
      case Quantity::kAngle:
        if (u == Unit::kNone || u == Unit::kRad) return v;
        if (u == Unit::kDeg) return deg_to_rad(v);
        throw SyntaxError(pos, {"deg", "rad"}, "incompatible unit");
      case Quantity::kAngularRate:
        if (u == Unit::kNone || u == Unit::kRadPerSecond) return v;
        if (u == Unit::kDegPerSecond) return deg_to_rad(v);
        throw SyntaxError(pos, {"deg/s", "rad/s"}, "incompatible unit");
    }
    return v;
  }

  double measured(Quantity q) {
    const auto pos = cur_.pos;
    const double v = number();
    return quantity(v, unit(), q, pos);
  }

  void statement(ShotPlan& plan, bool& have_target, std::optional<double>& blend) {
    if (cur_.kind != Tok::kIdent)
      throw SyntaxError(cur_.pos, statement_keywords(), describe(cur_));
    const std::string word(cur_.text);
    const auto pos = cur_.pos;
    if (word == "target") {
      advance();
      expect_punct("(");
      Vec3 t;
      t.x() = measured(Quantity::kLength);
      expect_punct(",");
      t.y() = measured(Quantity::kLength);
      expect_punct(",");
      t.z() = measured(Quantity::kLength);
      expect_punct(")");
      if (have_target) throw ValidationError("target", "target given more than once");
      plan.target = t;
      have_target = true;
      return;
    }
    if (word == "blend") {
      advance();
      expect_punct("(");
      const double b = measured(Quantity::kDuration);
      expect_punct(")");
      if (blend) throw ValidationError("blend_duration", "blend given more than once");
      blend = b;
      return;
    }
    Segment seg{primitive(word, pos), 0.0};
    if (cur_.kind != Tok::kIdent || cur_.text != "for")
      throw SyntaxError(cur_.pos, {"'for'"}, describe(cur_));
    advance();
    seg.duration = measured(Quantity::kDuration);
    plan.segments.push_back(std::move(seg));
  }

  static std::vector<std::string> statement_keywords() {
    return {"target", "blend", "orbit", "dolly", "pan_orbit", "reveal", "hold"};
  }

  using Args = std::map<std::string, Value>;

  Args arguments(const std::vector<std::string>& allowed) {
    Args args;
    if (!is_punct("(")) return args;
    advance();
    if (is_punct(")")) {
      advance();
      return args;
    }
    while (true) {
      if (cur_.kind != Tok::kIdent)
        throw SyntaxError(cur_.pos, allowed.empty() ? std::vector<std::string>{"')'"} : allowed,
                          describe(cur_));
      const std::string key(cur_.text);
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw SyntaxError(cur_.pos, allowed.empty() ? std::vector<std::string>{"')'"} : allowed,
                          "unknown key '" + key + "'");
      const auto key_pos = cur_.pos;
      advance();
      expect_punct("=");
      Value v;
      v.pos = cur_.pos;
      if (cur_.kind == Tok::kIdent) {
        v.ident = std::string(cur_.text);
        advance();
      } else {
        v.is_number = true;
        v.number = number();
        v.unit = unit();
      }
      if (args.count(key))
        throw ValidationError(key, "key given more than once at offset " +
                                       std::to_string(key_pos));
      args.emplace(key, std::move(v));
      if (is_punct(",")) {
        advance();
        continue;
      }
      expect_punct(")");
      return args;
    }
  }

  double num_arg(const Args& args, const std::string& key, const std::string& field,
                 Quantity q, std::optional<double> fallback) {
    auto it = args.find(key);
    if (it == args.end()) {
      if (fallback) return *fallback;
      throw ValidationError(field, "missing required key '" + key + "'");
    }
    if (!it->second.is_number)
      throw SyntaxError(it->second.pos, {"number"}, "'" + it->second.ident + "'");
    return quantity(it->second.number, it->second.unit, q, it->second.pos);
  }

  Direction dir_arg(const Args& args) {
    auto it = args.find("dir");
    if (it == args.end()) throw ValidationError("direction", "missing required key 'dir'");
    if (it->second.is_number || (it->second.ident != "cw" && it->second.ident != "ccw"))
      throw SyntaxError(it->second.pos, {"cw", "ccw"},
                        it->second.is_number ? "number" : "'" + it->second.ident + "'");
    return it->second.ident == "cw" ? Direction::kCw : Direction::kCcw;
  }

  Primitive primitive(const std::string& name, std::size_t pos) {
    if (name == "orbit") {
      advance();
      auto a = arguments({"radius", "speed", "dir", "climb"});
      Orbit o;
      o.radius = num_arg(a, "radius", "radius", Quantity::kLength, std::nullopt);
      o.angular_speed = num_arg(a, "speed", "angular_speed", Quantity::kAngularRate, std::nullopt);
      o.direction = dir_arg(a);
      o.climb_rate = num_arg(a, "climb", "climb_rate", Quantity::kSpeed, 0.0);
      return o;
    }
    if (name == "dolly") {
      advance();
      auto a = arguments({"speed", "stop"});
      DollyToward d;
      d.speed = num_arg(a, "speed", "speed", Quantity::kSpeed, std::nullopt);
      d.stop_distance = num_arg(a, "stop", "stop_distance", Quantity::kLength, 1.0);
      return d;
    }
    if (name == "pan_orbit") {
      advance();
      auto a = arguments({"radius", "speed", "dir", "pan"});
      PanOrbit p;
      p.radius = num_arg(a, "radius", "radius", Quantity::kLength, std::nullopt);
      p.angular_speed = num_arg(a, "speed", "angular_speed", Quantity::kAngularRate, std::nullopt);
      p.direction = dir_arg(a);
      p.pan_offset = num_arg(a, "pan", "pan_offset", Quantity::kAngle, 0.0);
      return p;
    }
    if (name == "reveal") {
      advance();
      auto a = arguments({"speed", "climb"});
      Reveal r;
      r.retreat_speed = num_arg(a, "speed", "retreat_speed", Quantity::kSpeed, std::nullopt);
      r.climb_rate = num_arg(a, "climb", "climb_rate", Quantity::kSpeed, 0.0);
      return r;
    }
    if (name == "hold") {
      advance();
      arguments({});
      return Hold{};
    }
    throw SyntaxError(pos, statement_keywords(), "'" + name + "'");
  }

  Lexer lexer_;
  Token cur_;
};

std::string fmt(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

const char* dir_name(Direction d) { return d == Direction::kCw ? "cw" : "ccw"; }

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ValidationError(field, what);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

SyntaxError::SyntaxError(std::size_t position, std::vector<std::string> expected,
                         const std::string& found)
    : Error("SyntaxError", "at offset " + std::to_string(position) + ": expected " +
                               join(expected) + ", found " + found),
      position_(position),
      expected_(std::move(expected)) {}

double ShotPlan::total_duration() const {
  double total = 0.0;
  for (const auto& s : segments) total += s.duration;
  return total;
}

void validate(const ShotPlan& plan) {
  require(plan.target.allFinite(), "target", "must be finite");
  require(!plan.segments.empty(), "segments", "plan has no segments");
  double shortest = std::numeric_limits<double>::infinity();
  for (const auto& seg : plan.segments) {
    require(finite(seg.duration) && seg.duration > 0.0, "duration", "must be > 0");
    shortest = std::min(shortest, seg.duration);
    std::visit(
        [](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Orbit> || std::is_same_v<T, PanOrbit>) {
            require(finite(p.radius) && p.radius >= kMinStandoff, "radius",
                    "must be >= 0.5 m");
            require(finite(p.angular_speed) && p.angular_speed > 0.0, "angular_speed",
                    "must be > 0");
          }
          if constexpr (std::is_same_v<T, Orbit>) {
            require(finite(p.climb_rate), "climb_rate", "must be finite");
          } else if constexpr (std::is_same_v<T, PanOrbit>) {
            require(finite(p.pan_offset) && std::abs(p.pan_offset) <= kPi, "pan_offset",
                    "must satisfy |pan_offset| <= pi");
          } else if constexpr (std::is_same_v<T, DollyToward>) {
            require(finite(p.speed) && p.speed > 0.0, "speed", "must be > 0");
            require(finite(p.stop_distance) && p.stop_distance >= kMinStandoff,
                    "stop_distance", "must be >= 0.5 m");
          } else if constexpr (std::is_same_v<T, Reveal>) {
            require(finite(p.retreat_speed) && p.retreat_speed > 0.0, "retreat_speed",
                    "must be > 0");
            require(finite(p.climb_rate) && p.climb_rate >= 0.0, "climb_rate",
                    "must be >= 0");
          }
        },
        seg.primitive);
  }
  require(finite(plan.total_duration()), "duration", "total duration overflows");
  require(finite(plan.blend_duration) && plan.blend_duration >= 0.0, "blend_duration",
          "must be >= 0");
  require(plan.blend_duration <= 0.5 * shortest, "blend_duration",
          "must not exceed half the shortest segment duration");
}

ShotPlan parse(std::string_view text) { return Parser(text).run(); }

std::string primitive_name(const Primitive& p) {
  static constexpr std::array<const char*, 5> names = {"orbit", "dolly", "pan_orbit",
                                                       "reveal", "hold"};
  return names[p.index()];
}

std::string serialize(const ShotPlan& plan) {
  std::ostringstream out;
  out << "target(" << fmt(plan.target.x()) << ", " << fmt(plan.target.y()) << ", "
      << fmt(plan.target.z()) << "); blend(" << fmt(plan.blend_duration) << "s)";
  for (const auto& seg : plan.segments) {
    out << "; " << primitive_name(seg.primitive);
    std::visit(
        [&out](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Orbit>) {
            out << "(radius=" << fmt(p.radius) << ", speed=" << fmt(p.angular_speed)
                << "rad/s, dir=" << dir_name(p.direction) << ", climb=" << fmt(p.climb_rate)
                << ")";
          } else if constexpr (std::is_same_v<T, DollyToward>) {
            out << "(speed=" << fmt(p.speed) << ", stop=" << fmt(p.stop_distance) << ")";
          } else if constexpr (std::is_same_v<T, PanOrbit>) {
            out << "(radius=" << fmt(p.radius) << ", speed=" << fmt(p.angular_speed)
                << "rad/s, dir=" << dir_name(p.direction) << ", pan=" << fmt(p.pan_offset)
                << "rad)";
          } else if constexpr (std::is_same_v<T, Reveal>) {
            out << "(speed=" << fmt(p.retreat_speed) << ", climb=" << fmt(p.climb_rate) << ")";
          }
        },
        seg.primitive);
    out << " for " << fmt(seg.duration) << "s";
  }
  return out.str();
}

nlohmann::json to_json(const ShotPlan& plan) {
  using nlohmann::json;
  json segs = json::array();
  for (const auto& seg : plan.segments) {
    json s = {{"primitive", primitive_name(seg.primitive)}, {"duration", seg.duration}};
    std::visit(
        [&s](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Orbit>) {
            s["radius"] = p.radius;
            s["angular_speed"] = p.angular_speed;
            s["direction"] = dir_name(p.direction);
            s["climb_rate"] = p.climb_rate;
          } else if constexpr (std::is_same_v<T, DollyToward>) {
            s["speed"] = p.speed;
            s["stop_distance"] = p.stop_distance;
          } else if constexpr (std::is_same_v<T, PanOrbit>) {
            s["radius"] = p.radius;
            s["angular_speed"] = p.angular_speed;
            s["direction"] = dir_name(p.direction);
            s["pan_offset"] = p.pan_offset;
          } else if constexpr (std::is_same_v<T, Reveal>) {
            s["retreat_speed"] = p.retreat_speed;
            s["climb_rate"] = p.climb_rate;
          }
        },
        seg.primitive);
    segs.push_back(std::move(s));
  }
  return {{"target", {plan.target.x(), plan.target.y(), plan.target.z()}},
          {"blend_duration", plan.blend_duration},
          {"segments", std::move(segs)},
          {"text", serialize(plan)}};
}

ShotPlan plan_from_json(const nlohmann::json& doc) {
  ShotPlan plan;
  try {
    const auto& t = doc.at("target");
    plan.target = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
    plan.blend_duration = doc.at("blend_duration").get<double>();
    for (const auto& s : doc.at("segments")) {
      const auto name = s.at("primitive").get<std::string>();
      Segment seg{Hold{}, s.at("duration").get<double>()};
      auto dir = [&s]() {
        const auto d = s.at("direction").get<std::string>();
        if (d != "cw" && d != "ccw") throw ValidationError("direction", "must be cw or ccw");
        return d == "cw" ? Direction::kCw : Direction::kCcw;
      };
      if (name == "orbit") {
        seg.primitive = Orbit{s.at("radius").get<double>(), s.at("angular_speed").get<double>(),
                              dir(), s.at("climb_rate").get<double>()};
      } else if (name == "dolly") {
        seg.primitive = DollyToward{s.at("speed").get<double>(),
                                    s.at("stop_distance").get<double>()};
      } else if (name == "pan_orbit") {
        seg.primitive = PanOrbit{s.at("radius").get<double>(),
                                 s.at("angular_speed").get<double>(), dir(),
                                 s.at("pan_offset").get<double>()};
      } else if (name == "reveal") {
        seg.primitive = Reveal{s.at("retreat_speed").get<double>(),
                               s.at("climb_rate").get<double>()};
      } else if (name != "hold") {
        throw ValidationError("primitive", "unknown primitive '" + name + "'");
      }
      plan.segments.push_back(std::move(seg));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("plan.json", e.what());
  }
  validate(plan);
  return plan;
}

}  // namespace cinefly::grammar
