#include "gamessl/games.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "gamessl/error.hpp"

namespace gamessl::games {

namespace fs = std::filesystem;

Env parse_env(const std::string& name) {
  if (name == "pitch") return Env::Pitch;
  if (name == "corridor") return Env::Corridor;
  throw ConfigError("unknown env \"" + name + "\" (expected pitch or corridor)");
}

std::string env_name(Env env) { return env == Env::Pitch ? "pitch" : "corridor"; }

// ---- pitch -------------------------------------------------------------------

std::size_t defenders_per_team(std::size_t players_per_team) {
  const auto d = static_cast<std::size_t>(std::lround(5.0 * static_cast<double>(players_per_team) / 11.0));
  return std::clamp<std::size_t>(d, 1, players_per_team);
}

namespace {

double clamp_x(double x) { return std::clamp(x, -kFieldHalfLength, kFieldHalfLength); }
double clamp_y(double y) { return std::clamp(y, -kFieldHalfWidth, kFieldHalfWidth); }

void random_heading(Rng& rng, double& dx, double& dy) {
  const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
  dx = std::cos(a);
  dy = std::sin(a);
}

}  // namespace

PitchState sample_pitch(std::size_t players_per_team, Rng& rng) {
  if (players_per_team == 0) throw ConfigError("pitch needs at least one player per team");
  PitchState s;
  const std::size_t nd = defenders_per_team(players_per_team);
  for (int team = 0; team < 2; ++team) {
    const double own_goal = team == 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < players_per_team; ++i) {
      PitchPlayer p;
      p.team = team;
      p.defender = i < nd;
      if (p.defender) {
        p.x = clamp_x(0.75 * own_goal + 0.12 * rng.normal());
        p.y = clamp_y(0.12 * rng.normal());
      } else {
        p.x = rng.uniform(-kFieldHalfLength, kFieldHalfLength);
        p.y = rng.uniform(-kFieldHalfWidth, kFieldHalfWidth);
      }
      random_heading(rng, p.dx, p.dy);
      s.players.push_back(p);
    }
  }
  s.ball_x = rng.uniform(-kFieldHalfLength, kFieldHalfLength);
  s.ball_y = rng.uniform(-kFieldHalfWidth, kFieldHalfWidth);
  s.ball_z = rng.uniform(0.0, 0.5);
  double n2 = 0.0;
  while (n2 < 1e-12) {
    s.ball_dx = rng.normal();
    s.ball_dy = rng.normal();
    s.ball_dz = rng.normal();
    n2 = s.ball_dx * s.ball_dx + s.ball_dy * s.ball_dy + s.ball_dz * s.ball_dz;
  }
  const double n = std::sqrt(n2);
  s.ball_dx /= n;
  s.ball_dy /= n;
  s.ball_dz /= n;
  return s;
}

std::vector<std::string> pitch_variable_names(std::size_t total_players) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < total_players; ++i) {
    const auto p = "p" + std::to_string(i) + "_";
    for (const char* f : {"x", "y", "dx", "dy"}) names.push_back(p + f);
  }
  for (const char* f : {"ball_x", "ball_y", "ball_z", "ball_dx", "ball_dy", "ball_dz"}) names.emplace_back(f);
  return names;
}

StateVector pitch_state_vector(const PitchState& state) {
  StateVector v;
  for (const auto& p : state.players) v.values.insert(v.values.end(), {p.x, p.y, p.dx, p.dy});
  v.values.insert(v.values.end(), {state.ball_x, state.ball_y, state.ball_z, state.ball_dx, state.ball_dy, state.ball_dz});
  v.valid.assign(v.values.size(), true);
  return v;
}

PitchGeometry PitchGeometry::for_size(std::size_t height, std::size_t width) {
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  return {std::min(w / (2.0 * kFieldHalfLength), h / (2.0 * kFieldHalfWidth)), w / 2.0, h / 2.0};
}

// ---- corridor ------------------------------------------------------------------

CorridorState sample_corridor(Rng& rng, std::size_t height, std::size_t width) {
  CorridorState s;
  const std::size_t count = rng.below(5);
  const double aspect = static_cast<double>(height) / static_cast<double>(width);
  for (std::size_t i = 0; i < count; ++i) {
    CorridorEnemy e;
    e.region = static_cast<int>(rng.below(3));
    e.depth = rng.uniform(1.0, 4.0);
    e.h = 0.5 / e.depth;
    e.w = 0.35 * e.h * aspect;
    const double lo = kRegionEdges[e.region] + e.w / 2, hi = kRegionEdges[e.region + 1] - e.w / 2;
    e.x = rng.uniform(lo, hi);
    e.y = 0.5 + 0.2 / e.depth + rng.uniform(-0.03, 0.03);
    s.enemies.push_back(e);
  }
  return s;
}

std::vector<std::string> corridor_variable_names() {
  std::vector<std::string> names;
  for (const char* r : {"left", "middle", "right"}) {
    for (const char* f : {"x", "y", "w", "h"}) names.push_back(std::string(r) + "_" + f);
  }
  return names;
}

StateVector corridor_state_vector(const CorridorState& state) {
  StateVector v;
  v.values.assign(12, std::numeric_limits<double>::quiet_NaN());
  v.valid.assign(12, false);
  for (int r = 0; r < 3; ++r) {
    const CorridorEnemy* nearest = nullptr;
    for (const auto& e : state.enemies) {
      if (e.region == r && (nearest == nullptr || e.depth < nearest->depth)) nearest = &e;
    }
    if (nearest == nullptr) continue;
    const double vals[4] = {nearest->x, nearest->y, nearest->w, nearest->h};
    for (int f = 0; f < 4; ++f) {
      v.values[static_cast<std::size_t>(4 * r + f)] = vals[f];
      v.valid[static_cast<std::size_t>(4 * r + f)] = true;
    }
  }
  return v;
}

// ---- rendering -----------------------------------------------------------------

NuisanceParams NuisanceParams::sample(Rng& rng) {
  NuisanceParams n;
  n.ambient_brightness = rng.uniform(0.6, 1.0);
  n.background_texture_id = static_cast<int>(rng.below(4));
  n.banner_pattern = static_cast<int>(rng.below(4));
  return n;
}

namespace {

struct Rgb {
  float r, g, b;
};

constexpr int kSuper = 4;

Rgb scaled(const float* c, float k) { return {c[0] * k, c[1] * k, c[2] * k}; }

// Squared distance from p to segment a-b.
double segment_dist2(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return dx * dx + dy * dy;
}

const Rgb kBannerPalette[4][3] = {
    {{0.85f, 0.85f, 0.85f}, {0.2f, 0.2f, 0.25f}, {0.95f, 0.6f, 0.1f}},
    {{0.1f, 0.6f, 0.8f}, {0.95f, 0.95f, 0.7f}, {0.4f, 0.1f, 0.5f}},
    {{0.8f, 0.2f, 0.6f}, {0.3f, 0.3f, 0.3f}, {0.6f, 0.9f, 0.3f}},
    {{0.05f, 0.05f, 0.05f}, {0.9f, 0.45f, 0.45f}, {0.5f, 0.75f, 0.95f}},
};

Rgb banner_color(int pattern, double sx, double sy, double width) {
  const double block = width / (4.0 + 2.0 * pattern);
  const auto idx = static_cast<long>(std::floor(sx / block + (pattern % 2 ? 0.5 * std::floor(sy / 3.0) : 0.0)));
  return kBannerPalette[pattern & 3][static_cast<std::size_t>(((idx % 3) + 3) % 3)];
}

template <class Shade>
Frame supersample(std::size_t height, std::size_t width, double brightness, Shade shade) {
  Frame f(height, width);
  constexpr float inv = 1.0f / (kSuper * kSuper);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      float acc[3] = {0, 0, 0};
      for (int a = 0; a < kSuper; ++a) {
        for (int b = 0; b < kSuper; ++b) {
          const double sx = static_cast<double>(j) + (b + 0.5) / kSuper;
          const double sy = static_cast<double>(i) + (a + 0.5) / kSuper;
          const Rgb c = shade(sx, sy);
          acc[0] += c.r;
          acc[1] += c.g;
          acc[2] += c.b;
        }
      }
      for (int c = 0; c < 3; ++c) {
        f.at(i, j, c) = std::clamp(acc[c] * inv * static_cast<float>(brightness), 0.0f, 1.0f);
      }
    }
  }
  return f;
}

}  // namespace

Frame render_pitch(const PitchState& state, const NuisanceParams& nuisance, std::size_t height, std::size_t width) {
  const auto g = PitchGeometry::for_size(height, width);
  const double left = g.px(-kFieldHalfLength), right = g.px(kFieldHalfLength);
  const double top = g.py(-kFieldHalfWidth), bottom = g.py(kFieldHalfWidth);
  const double radius = 0.075 * g.scale;
  const double tick = 2.6 * radius, tick_half_width = 0.9;
  const double ball_r = 0.05 * g.scale * (1.0 + state.ball_z);
  const double stripe = g.scale * std::array<double, 4>{0.25, 0.2, 0.125, 0.1}[nuisance.background_texture_id & 3];
  const bool diagonal = nuisance.background_texture_id % 2 == 1;
  const float ball_tick = static_cast<float>(0.5 + 0.45 * state.ball_dz);

  // Slot k of a team's n players is drawn at brightness 1 - 0.45 k / (n - 1)
  // so individual players stay identifiable.
  std::size_t team_size[2] = {0, 0};
  for (const auto& p : state.players) ++team_size[p.team & 1];
  std::vector<float> slot_shade;
  {
    std::size_t seen[2] = {0, 0};
    for (const auto& p : state.players) {
      const std::size_t n = team_size[p.team & 1], k = seen[p.team & 1]++;
      slot_shade.push_back(n > 1 ? static_cast<float>(1.0 - 0.45 * static_cast<double>(k) / static_cast<double>(n - 1))
                                 : 1.0f);
    }
  }
  const double line = 0.5;
  const double circle_r = kCentreCircleRadius * g.scale;
  const double box_depth = kPenaltyBoxDepth * g.scale, box_half = kPenaltyBoxHalfWidth * g.scale;
  auto on_marking = [&](double sx, double sy) {
    const double dx = sx - g.px(0.0), dy = sy - g.py(0.0);
    if (std::abs(dx) <= line) return true;
    if (std::abs(std::sqrt(dx * dx + dy * dy) - circle_r) <= line) return true;
    for (const double goal_x : {left, right}) {
      const double inner = goal_x == left ? left + box_depth : right - box_depth;
      const double lo = std::min(goal_x, inner), hi = std::max(goal_x, inner);
      if (std::abs(sx - inner) <= line && std::abs(dy) <= box_half + line) return true;
      if (sx >= lo && sx <= hi && std::abs(std::abs(dy) - box_half) <= line) return true;
    }
    return false;
  };

  auto shade = [&](double sx, double sy) -> Rgb {
    Rgb c;
    if (sx >= left && sx <= right && sy >= top && sy <= bottom) {
      const double u = diagonal ? (sx - left) + 0.5 * (sy - top) : (sx - left);
      const bool dark = static_cast<long>(std::floor(u / stripe)) % 2 == 1;
      c = dark ? Rgb{0.15f, 0.45f, 0.17f} : Rgb{0.19f, 0.53f, 0.21f};
      if (on_marking(sx, sy)) c = {kLineColor[0], kLineColor[1], kLineColor[2]};
    } else {
      c = banner_color(nuisance.banner_pattern, sx, sy, static_cast<double>(width));
    }
    for (std::size_t k = 0; k < state.players.size(); ++k) {
      const auto& p = state.players[k];
      const double cx = g.px(p.x), cy = g.py(p.y);
      const double ex = cx + p.dx * tick, ey = cy + p.dy * tick;
      if (segment_dist2(sx, sy, cx, cy, ex, ey) <= tick_half_width * tick_half_width) c = scaled(kTeamColor[p.team], 0.7f * slot_shade[k]);
      if ((sx - cx) * (sx - cx) + (sy - cy) * (sy - cy) <= radius * radius) c = scaled(kTeamColor[p.team], slot_shade[k]);
    }
    const double bx = g.px(state.ball_x), by = g.py(state.ball_y);
    const double tx = bx + state.ball_dx * 2.2 * ball_r, ty = by + state.ball_dy * 2.2 * ball_r;
    if (segment_dist2(sx, sy, bx, by, tx, ty) <= tick_half_width * tick_half_width) c = {ball_tick, ball_tick, ball_tick};
    if ((sx - bx) * (sx - bx) + (sy - by) * (sy - by) <= ball_r * ball_r) c = scaled(kBallColor, 1.0f);
    return c;
  };
  return supersample(height, width, nuisance.ambient_brightness, shade);
}

Frame render_corridor(const CorridorState& state, const NuisanceParams& nuisance, std::size_t height,
                      std::size_t width) {
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  std::vector<const CorridorEnemy*> order;
  for (const auto& e : state.enemies) order.push_back(&e);
  // Far to near, so nearer enemies occlude farther ones.
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->depth > b->depth; });
  const int tex = nuisance.background_texture_id & 3;
  const double panel = w / (3.0 + tex);

  auto shade = [&](double sx, double sy) -> Rgb {
    const double u = sx / w, v = sy / h;
    Rgb c;
    if (v < 0.5) {
      const auto k = static_cast<float>(0.35 + 0.3 * v);
      const bool seam = std::fmod(sx, panel) < 0.6;
      c = seam ? Rgb{0.2f, 0.2f, 0.22f} : Rgb{k, k, k + 0.04f};
      if (v > 0.36 && v < 0.46) {
        const Rgb poster = banner_color(nuisance.banner_pattern, sx, sy, w);
        if (!seam) c = {0.5f * c.r + 0.5f * poster.r, 0.5f * c.g + 0.5f * poster.g, 0.5f * c.b + 0.5f * poster.b};
      }
    } else {
      const auto k = static_cast<float>(0.2 + 0.35 * (v - 0.5));
      const bool tile = (static_cast<long>(std::floor(sx / (panel * 0.5))) + static_cast<long>(std::floor(sy / 4.0))) % 2;
      c = {k + 0.12f + (tile ? 0.03f * tex : 0.0f), k + 0.08f, k};
    }
    for (const auto* e : order) {
      if (std::abs(u - e->x) <= e->w / 2 && std::abs(v - e->y) <= e->h / 2) {
        const auto k = static_cast<float>(1.1 - 0.15 * e->depth);
        const bool head = v < e->y - e->h / 4;
        c = scaled(kEnemyColor, head ? 0.6f * k : k);
      }
    }
    return c;
  };
  return supersample(height, width, nuisance.ambient_brightness, shade);
}

// ---- datasets -------------------------------------------------------------------

fs::path generate_dataset(const GenerateOptions& o) {
  if (o.count == 0) throw ConfigError("generate_dataset: count must be positive");
  const std::uint64_t split_tag = o.split == Split::Train ? stream::kTrainSplit : stream::kEvalSplit;
  std::error_code ec;
  fs::create_directories(o.out_dir / "frames", ec);
  if (ec) throw IoError("cannot create " + (o.out_dir / "frames").string() + ": " + ec.message());

  Manifest m;
  m.env = env_name(o.env);
  m.variable_names = o.env == Env::Pitch ? pitch_variable_names(2 * o.players_per_team) : corridor_variable_names();
  m.base_dir = o.out_dir;
  for (std::size_t i = 0; i < o.count; ++i) {
    auto rng = Rng::substream(o.seed, {split_tag, i});
    ManifestEntry entry;
    Frame frame;
    if (o.env == Env::Pitch) {
      const auto state = sample_pitch(o.players_per_team, rng);
      frame = render_pitch(state, NuisanceParams::sample(rng), o.height, o.width);
      entry.state = pitch_state_vector(state);
    } else {
      const auto state = sample_corridor(rng, o.height, o.width);
      frame = render_corridor(state, NuisanceParams::sample(rng), o.height, o.width);
      entry.state = corridor_state_vector(state);
    }
    char name[32];
    std::snprintf(name, sizeof name, "frames/%06zu.png", i);
    entry.image = name;
    write_png(o.out_dir / name, frame);
    m.entries.push_back(std::move(entry));
  }
  const auto path = o.out_dir / "manifest.json";
  write_manifest(path, m);
  return path;
}

}  // namespace gamessl::games
