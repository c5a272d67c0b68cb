#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gamessl/dataset.hpp"
#include "gamessl/image.hpp"
#include "gamessl/random.hpp"

// Procedural stand-in games rendered from a known internal state.
namespace gamessl::games {

enum class Env { Pitch, Corridor };

Env parse_env(const std::string& name);  // "pitch" | "corridor", else ConfigError
std::string env_name(Env env);

// ---- pitch: top-down football field -------------------------------------

inline constexpr double kFieldHalfLength = 1.0;   // x in [-1, 1]
inline constexpr double kFieldHalfWidth = 0.42;   // y in [-0.42, 0.42]

struct PitchPlayer {
  double x = 0, y = 0;    // field coordinates
  double dx = 1, dy = 0;  // unit heading
  int team = 0;           // team 0 defends x = -1, team 1 defends x = +1
  bool defender = false;
};

struct PitchState {
  std::vector<PitchPlayer> players;  // team 0 first, defenders before attackers
  double ball_x = 0, ball_y = 0, ball_z = 0;
  double ball_dx = 1, ball_dy = 0, ball_dz = 0;
};

// max(1, round(5 n / 11)) of each team's n players are defenders.
std::size_t defenders_per_team(std::size_t players_per_team);

// Defenders: x ~ N(-+0.75, 0.12) near their own goal, y ~ N(0, 0.12), both
// clamped to the field. Attackers: uniform over the field. Headings are
// uniform angles. Ball: uniform (x, y), z in [0, 0.5], uniform 3D heading.
PitchState sample_pitch(std::size_t players_per_team, Rng& rng);

// p{i}_x, p{i}_y, p{i}_dx, p{i}_dy for each of the P players, then
// ball_x, ball_y, ball_z, ball_dx, ball_dy, ball_dz: 4P + 6 names.
std::vector<std::string> pitch_variable_names(std::size_t total_players);
StateVector pitch_state_vector(const PitchState& state);

// Field -> pixel map for an H x W frame, pixel (i, j) centred at (j + 0.5, i + 0.5):
//   s  = min(W / 2, H / (2 * 0.42))
//   px = W / 2 + x * s,  py = H / 2 + y * s
// so the field is letterboxed; the bands outside it carry sideline banners.
struct PitchGeometry {
  double scale, cx, cy;
  static PitchGeometry for_size(std::size_t height, std::size_t width);
  double px(double x) const { return cx + x * scale; }
  double py(double y) const { return cy + y * scale; }
};

// ---- corridor: first-person shooter view ---------------------------------

struct CorridorEnemy {
  // Normalized screen coordinates in [0, 1]: box centre, width and height.
  double x = 0, y = 0, w = 0, h = 0;
  double depth = 1;  // in [1, 4]; smaller is nearer
  int region = 0;    // 0 left [0, 0.4), 1 middle [0.4, 0.6), 2 right [0.6, 1]
};

struct CorridorState {
  std::vector<CorridorEnemy> enemies;
};

inline constexpr double kRegionEdges[4] = {0.0, 0.4, 0.6, 1.0};

// 0-4 enemies, each fully inside a uniformly chosen region, with h = 0.5 / depth
// and w = 0.35 h (H/W) so boxes keep a fixed pixel aspect.
CorridorState sample_corridor(Rng& rng, std::size_t height = 64, std::size_t width = 64);

// {left,middle,right}_{x,y,w,h} of the nearest enemy per region; a region
// without enemies is invalid.
std::vector<std::string> corridor_variable_names();
StateVector corridor_state_vector(const CorridorState& state);

// ---- rendering -------------------------------------------------------------

struct NuisanceParams {
  double ambient_brightness = 1.0;  // [0.6, 1] multiplies every pixel
  int background_texture_id = 0;    // [0, 3]
  int banner_pattern = 0;           // [0, 3]

  static NuisanceParams neutral() { return {}; }
  static NuisanceParams sample(Rng& rng);
};

// Anti-aliased (4x4 supersampled) renders; deterministic in their arguments.
// Pitch: striped grass with halfway line, centre circle and penalty boxes;
// players are team-coloured discs with a heading tail, slot k of a team's n
// players shaded 1 - 0.45 k / (n - 1); the ball is a yellow disc growing
// with z whose tail grey level encodes dz.
Frame render_pitch(const PitchState& state, const NuisanceParams& nuisance, std::size_t height, std::size_t width);
Frame render_corridor(const CorridorState& state, const NuisanceParams& nuisance, std::size_t height,
                      std::size_t width);

// Flat colours, exposed for render oracles.
inline constexpr float kTeamColor[2][3] = {{0.92f, 0.16f, 0.12f}, {0.14f, 0.32f, 0.96f}};
inline constexpr float kBallColor[3] = {1.0f, 0.95f, 0.25f};
inline constexpr float kLineColor[3] = {0.88f, 0.93f, 0.88f};
// Field markings in field units: halfway line, centre circle and one
// penalty box at each end.
inline constexpr double kCentreCircleRadius = 0.17;
inline constexpr double kPenaltyBoxDepth = 0.17;
inline constexpr double kPenaltyBoxHalfWidth = 0.22;
inline constexpr float kEnemyColor[3] = {0.75f, 0.3f, 0.2f};

// ---- datasets --------------------------------------------------------------

enum class Split { Train, Eval };

struct GenerateOptions {
  Env env = Env::Pitch;
  std::size_t count = 100;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t players_per_team = 2;
};

// Writes out_dir/frames/NNNNNN.png and out_dir/manifest.json; returns the
// manifest path. Frame i uses the substream (seed, split tag, i), so train
// and eval never share draws and any frame can be regenerated alone.
std::filesystem::path generate_dataset(const GenerateOptions& options);

}  // namespace gamessl::games
