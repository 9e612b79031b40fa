#include <doctest.h>

#include "cinefly/shot_grammar.hpp"
#include "support.hpp"

using namespace cinefly;
using namespace cinefly::grammar;

namespace {

template <typename F>
SyntaxError syntax_error_of(F&& f) {
  try {
    f();
  } catch (const SyntaxError& e) {
    return e;
  }
  FAIL("expected SyntaxError");
  throw;
}

std::string validation_field(std::string_view text) {
  try {
    parse(text);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST_CASE("orbit prompt parses to canonical units") {
  const ShotPlan p = parse(testsupport::kOrbitPrompt);
  CHECK(p.target == Vec3(0, 0, 1));
  REQUIRE(p.segments.size() == 1);
  const auto& o = std::get<Orbit>(p.segments[0].primitive);
  CHECK(o.radius == 3.0);
  CHECK(o.angular_speed == doctest::Approx(kPi / 6).epsilon(1e-15));
  CHECK(o.direction == Direction::kCcw);
  CHECK(p.segments[0].duration == 12.0);
  CHECK(p.total_duration() == 12.0);
}

TEST_CASE("default blend is half the shortest segment when that is below 0.5 s") {
  CHECK(parse("target(0,0,0); hold for 3s; hold for 0.4s").blend_duration == 0.2);
  CHECK(parse("target(0,0,0); hold for 3s; hold for 2s").blend_duration == kDefaultBlend);
  CHECK(parse("target(0,0,0); blend(0.1s); hold for 3s").blend_duration == 0.1);
}

TEST_CASE("all primitives and defaults") {
  const ShotPlan p = parse(
      "target(1, -2, 0.5);"
      "dolly(speed=2 m/s) for 1s;"
      "pan_orbit(radius=4, speed=0.2 rad/s, dir=cw, pan=90deg) for 2;"
      "reveal(speed=1, climb=0.5) for 3s;"
      "hold for 1s;");
  REQUIRE(p.segments.size() == 4);
  CHECK(std::get<DollyToward>(p.segments[0].primitive).stop_distance == 1.0);
  const auto& po = std::get<PanOrbit>(p.segments[1].primitive);
  CHECK(po.direction == Direction::kCw);
  CHECK(po.pan_offset == doctest::Approx(kPi / 2));
  CHECK(std::get<Reveal>(p.segments[2].primitive).climb_rate == 0.5);
  CHECK(std::holds_alternative<Hold>(p.segments[3].primitive));
}

TEST_CASE("syntax errors report offset, expectations and the found token") {
  const auto e = syntax_error_of([] { parse("target(0,0,1); orbit(radius=3 speed=1) for 2s"); });
  CHECK(e.position() == 30);
  CHECK(e.kind() == "SyntaxError");
  CHECK(std::string(e.what()).find("found") != std::string::npos);
  CHECK_FALSE(e.expected().empty());

  const auto unknown = syntax_error_of([] { parse("target(0,0,1); spin for 2s"); });
  CHECK(unknown.position() == 15);

  const auto bad_key = syntax_error_of([] { parse("target(0,0,1); orbit(size=3) for 2s"); });
  CHECK(std::find(bad_key.expected().begin(), bad_key.expected().end(), "radius") !=
        bad_key.expected().end());

  CHECK_THROWS_AS(parse(""), SyntaxError);
  CHECK_THROWS_AS(parse("target(0,0,1); hold"), SyntaxError);
}

TEST_CASE("validation names the offending field") {
  CHECK(validation_field("hold for 2s") == "target");
  CHECK(validation_field("target(0,0,0)") == "segments");
  CHECK(validation_field("target(0,0,0); orbit(radius=0.1, speed=1, dir=cw) for 1s") == "radius");
  CHECK(validation_field("target(0,0,0); orbit(radius=1, speed=0, dir=cw) for 1s") != "<none>");
  CHECK(validation_field("target(0,0,0); orbit(radius=1, radius=2, speed=1, dir=cw) for 1s") == "radius");
  CHECK(validation_field("target(0,0,0); pan_orbit(radius=1, speed=1, pan=4) for 1s") != "<none>");
  CHECK(validation_field("target(0,0,0); dolly(speed=1, stop=0.1) for 1s") != "<none>");
  CHECK(validation_field("target(0,0,0); reveal(speed=1, climb=-1) for 1s") != "<none>");
  CHECK(validation_field("target(0,0,0); blend(2s); hold for 1s; hold for 3s") != "<none>");
  CHECK(validation_field("target(0,0,0); hold for 0s") != "<none>");
  CHECK(validation_field("target(0,0,0); orbit(radius=1, speed=1) for 1s") == "direction");
}

TEST_CASE("serialize is canonical and round-trips") {
  const ShotPlan p = parse(testsupport::kOrbitPrompt);
  const std::string s = serialize(p);
  CHECK(parse(s) == p);
  CHECK(serialize(parse(s)) == s);
}

TEST_CASE("random plans round-trip through text and json") {
  Rng rng(42);
  for (int i = 0; i < 300; ++i) {
    const ShotPlan p = testsupport::random_plan(rng);
    CHECK_NOTHROW(validate(p));
    const std::string s = serialize(p);
    CHECK(parse(s) == p);
    CHECK(plan_from_json(to_json(p)) == p);
  }
}

TEST_CASE("mutated inputs throw only library errors") {
  Rng rng(5);
  const std::string alphabet = "target()orbitdollyholdrevealpan_=,;.0123456789-+e sm/degradccw\n\t\"{}";
  for (int i = 0; i < 3000; ++i) {
    std::string s = serialize(testsupport::random_plan(rng));
    const int edits = 1 + static_cast<int>(rng.uniform() * 4);
    for (int k = 0; k < edits && !s.empty(); ++k) {
      const auto pos = static_cast<std::size_t>(rng.uniform() * s.size());
      const char c = alphabet[static_cast<std::size_t>(rng.uniform() * alphabet.size())];
      switch (static_cast<int>(rng.uniform() * 3)) {
        case 0: s[pos] = c; break;
        case 1: s.erase(pos, 1); break;
        default: s.insert(pos, 1, c);
      }
    }
    try {
      parse(s);
    } catch (const Error&) {
    }
  }
}

TEST_CASE("deg/s and rad/s normalize to the same value") {
  const auto deg = parse("target(0,0,0); orbit(radius=2, speed=180deg/s, dir=cw) for 1s");
  const auto rad = parse("target(0,0,0); orbit(radius=2, speed=3.141592653589793rad/s, dir=cw) for 1s");
  const auto bare = parse("target(0,0,0); orbit(radius=2, speed=3.141592653589793, dir=cw) for 1s");
  CHECK(deg == rad);
  CHECK(rad == bare);
  const auto pan = parse("target(0,0,0); pan_orbit(radius=2, speed=1, dir=cw, pan=90deg) for 1s");
  CHECK(std::get<PanOrbit>(pan.segments[0].primitive).pan_offset == kPi / 2);
}
