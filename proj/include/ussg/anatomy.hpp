#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ussg/core.hpp"

namespace ussg::anatomy {

// Cross-section of one structure: an axis-aligned ellipse in pixels.
struct Ellipse {
  EntityClass cls = EntityClass::kCCA;
  double cx = 0.0;
  double cy = 0.0;
  double rx = 1.0;
  double ry = 1.0;

  double max_radius() const { return rx > ry ? rx : ry; }
  // <1 inside, 1 on the boundary, >1 outside.
  double implicit(double x, double y) const;
  BBox bounds() const { return {cx - rx, cy - ry, 2.0 * rx, 2.0 * ry}; }

  friend bool operator==(const Ellipse&, const Ellipse&) = default;
};

// Longitudinal track of one structure, expressed for a left-side scan at
// u = 0. Right-side scans are produced by mirroring.
struct EllipseTrack {
  double x0 = 0.0;       // centre x at z = 0
  double x_slope = 0.0;  // px per unit z
  double y0 = 0.0;
  double y_slope = 0.0;
  double rx0 = 1.0;
  double rx_slope = 0.0;
  double ry0 = 1.0;
  double ry_slope = 0.0;
  double z_lo = 0.0;
  double z_hi = 1.0;

  friend bool operator==(const EllipseTrack&, const EllipseTrack&) = default;
};

struct RuleThresholds {
  double contiguity_gap_px = 10.0;
  double encase_min_deg = 120.0;
  double superior_margin_px = 40.0;
  // Encasement rays reach this multiple of the encased structure's largest
  // radius.
  double encase_reach = 1.5;
  int encase_rays = 360;

  friend bool operator==(const RuleThresholds&, const RuleThresholds&) = default;
};

struct NeckModel {
  double width = 829.0;
  double height = 770.0;
  double depth_mm = 45.0;
  double focus_mm = 20.0;
  // Image shift per unit of lateral offset u.
  double lateral_gain_px = 300.0;
  std::array<EllipseTrack, 5> tracks{};
  RuleThresholds rules;

  // Left-side layout at 829x770.
  static NeckModel default_model();

  const EllipseTrack& track(EntityClass cls) const { return tracks[index_of(cls)]; }
  EllipseTrack& track(EntityClass cls) { return tracks[index_of(cls)]; }

  // Throws BAD_CONFIG.
  void check() const;

  friend bool operator==(const NeckModel&, const NeckModel&) = default;
};

// Model file: JSON object with the fields above; every field optional and
// defaulting to default_model(). Throws SYNTAX/SCHEMA/BAD_CONFIG.
NeckModel parse_model(std::string_view text);
std::string write_model(const NeckModel& model);
NeckModel read_model_file(const std::string& path);

// Ellipses of the structures present at `pose` (before clipping), in the
// pose's own image frame.
std::vector<Ellipse> visible_ellipses(const NeckModel& model, const ProbePose& pose);

SceneGraph cross_section(const NeckModel& model, const ProbePose& pose,
                         std::string image_id = "");

// Predicate rules applied to every ordered pair; see RuleThresholds.
// Returned triplets index into `ellipses`.
std::vector<Triplet> derive_relations(const std::vector<Ellipse>& ellipses,
                                      const RuleThresholds& rules = {});

// Degrees of the encased ellipse's surroundings covered by `outer`.
double encasement_coverage_deg(const std::vector<Ellipse>& ellipses, std::size_t outer,
                            std::size_t inner, const RuleThresholds& rules);

// Signed boundary distance: negative when the ellipses overlap.
double boundary_distance(const Ellipse& a, const Ellipse& b);

// ---------------------------------------------------------------------------
// Noisy predictor
// ---------------------------------------------------------------------------

struct NoiseConfig {
  std::uint64_t seed = 0;
  double box_jitter_px = 0.0;
  double drop_probability = 0.0;
  double score_noise = 0.0;
  double spurious_triplet_probability = 0.0;

  bool is_zero() const {
    return box_jitter_px == 0.0 && drop_probability == 0.0 && score_noise == 0.0 &&
           spurious_triplet_probability == 0.0;
  }
  // Throws BAD_CONFIG.
  void check() const;
};

// Perturbs the cross-section deterministically from (seed, pose). The random
// stream is re-derived on every call, so equal poses always yield equal
// graphs.
class SimulatorPredictor final : public Predictor {
 public:
  SimulatorPredictor(NeckModel model, NoiseConfig noise);

  std::string_view name() const override { return "simulator"; }
  // Requires frame.pose.
  SceneGraph predict(const FrameRef& frame) override;

  const NeckModel& model() const { return model_; }
  const NoiseConfig& noise() const { return noise_; }

 private:
  NeckModel model_;
  NoiseConfig noise_;
};

// ---------------------------------------------------------------------------
// Guidance oracle
// ---------------------------------------------------------------------------

enum class GuidanceDirection : std::uint8_t { kCranial, kCaudal, kMedial, kLateral };

std::string_view direction_name(GuidanceDirection dir);  // "cranial", ...
std::optional<GuidanceDirection> direction_from_name(std::string_view name);

inline constexpr double kDefaultStep = 0.05;

struct Guidance {
  bool already_visible = false;
  GuidanceDirection direction = GuidanceDirection::kCranial;
  int steps = 0;
  // Set when a second single-axis leg is needed after this one.
  std::optional<GuidanceDirection> then_direction;
  int then_steps = 0;

  int total_steps() const { return steps + then_steps; }

  friend bool operator==(const Guidance&, const Guidance&) = default;
};

// One quantised probe step; z and u are clamped to their ranges. Every pose
// change made on behalf of guidance goes through here.
ProbePose step_pose(const ProbePose& pose, GuidanceDirection dir, double step);

// Change in u that moves the probe medially/laterally on `side`.
double lateral_sign(LateralSide side);

bool target_visible(const NeckModel& model, const ProbePose& pose, EntityClass target);

// Minimal single-axis move revealing `target`, preferring z moves over u
// moves. Throws UNREACHABLE.
Guidance oracle_guidance(const NeckModel& model, const ProbePose& pose,
                         EntityClass target, double step = kDefaultStep);

}  // namespace ussg::anatomy
