#include "ussg/anatomy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "ussg/error.hpp"

namespace ussg::anatomy {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr double kPi = std::numbers::pi;

double robust_length(double a, double b) {
  return std::hypot(a, b);
}

// Distance from (y0, y1) >= 0 to the ellipse (x/e0)^2 + (y/e1)^2 = 1 with
// e0 >= e1 > 0 (Eberly's bisection).
double distance_first_quadrant(double e0, double e1, double y0, double y1) {
  if (y1 > 0.0) {
    if (y0 > 0.0) {
      const double z0 = y0 / e0;
      const double z1 = y1 / e1;
      double g = z0 * z0 + z1 * z1 - 1.0;
      if (g == 0.0) return 0.0;
      const double r0 = (e0 / e1) * (e0 / e1);
      const double n0 = r0 * z0;
      double s0 = z1 - 1.0;
      double s1 = g < 0.0 ? 0.0 : robust_length(n0, z1) - 1.0;
      double s = 0.0;
      for (int i = 0; i < 200; ++i) {
        s = 0.5 * (s0 + s1);
        if (s == s0 || s == s1) break;
        const double ratio0 = n0 / (s + r0);
        const double ratio1 = z1 / (s + 1.0);
        g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if (g > 0.0) {
          s0 = s;
        } else if (g < 0.0) {
          s1 = s;
        } else {
          break;
        }
      }
      const double x0 = r0 * y0 / (s + r0);
      const double x1 = y1 / (s + 1.0);
      return std::hypot(x0 - y0, x1 - y1);
    }
    return std::fabs(y1 - e1);
  }
  const double numer0 = e0 * y0;
  const double denom0 = e0 * e0 - e1 * e1;
  if (numer0 < denom0) {
    const double xde0 = numer0 / denom0;
    const double x0 = e0 * xde0;
    const double x1 = e1 * std::sqrt(std::max(0.0, 1.0 - xde0 * xde0));
    return std::hypot(x0 - y0, x1);
  }
  return std::fabs(y0 - e0);
}

double point_to_boundary(const Ellipse& e, double px, double py) {
  double dx = std::fabs(px - e.cx);
  double dy = std::fabs(py - e.cy);
  if (e.rx >= e.ry) return distance_first_quadrant(e.rx, e.ry, dx, dy);
  return distance_first_quadrant(e.ry, e.rx, dy, dx);
}

// Minimum distance from the boundary of `a` to the boundary of `b`, or a
// negative value once any sampled boundary point of `a` lies inside `b`.
double one_sided_gap(const Ellipse& a, const Ellipse& b) {
  constexpr int kSamples = 360;
  auto point = [&a](double t) {
    return std::pair{a.cx + a.rx * std::cos(t), a.cy + a.ry * std::sin(t)};
  };
  auto dist = [&](double t) {
    auto [x, y] = point(t);
    return point_to_boundary(b, x, y);
  };
  double best = std::numeric_limits<double>::infinity();
  int best_k = 0;
  for (int k = 0; k < kSamples; ++k) {
    const double t = 2.0 * kPi * k / kSamples;
    auto [x, y] = point(t);
    if (b.implicit(x, y) < 1.0) return -point_to_boundary(b, x, y);
    const double d = point_to_boundary(b, x, y);
    if (d < best) {
      best = d;
      best_k = k;
    }
  }
  // Golden-section refinement between the neighbouring samples.
  double lo = 2.0 * kPi * (best_k - 1) / kSamples;
  double hi = 2.0 * kPi * (best_k + 1) / kSamples;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - phi * (hi - lo);
  double d = lo + phi * (hi - lo);
  double fc = dist(c);
  double fd = dist(d);
  for (int i = 0; i < 60; ++i) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - phi * (hi - lo);
      fc = dist(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + phi * (hi - lo);
      fd = dist(d);
    }
  }
  return std::min(best, std::min(fc, fd));
}

// Distance along the ray from (ox, oy) in direction (dx, dy) to the first
// point inside `e`; infinity when the ray misses.
double ray_entry(const Ellipse& e, double ox, double oy, double dx, double dy) {
  if (e.implicit(ox, oy) < 1.0) return 0.0;
  const double px = (ox - e.cx) / e.rx;
  const double py = (oy - e.cy) / e.ry;
  const double qx = dx / e.rx;
  const double qy = dy / e.ry;
  const double a = qx * qx + qy * qy;
  const double b = 2.0 * (px * qx + py * qy);
  const double c = px * px + py * py - 1.0;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::numeric_limits<double>::infinity();
  const double t = (-b - std::sqrt(disc)) / (2.0 * a);
  return t >= 0.0 ? t : std::numeric_limits<double>::infinity();
}

bool is_superior(const Ellipse& a, const Ellipse& b, const RuleThresholds& rules) {
  return a.cy < b.cy - rules.superior_margin_px &&
         std::fabs(a.cx - b.cx) < a.rx + b.rx;
}

bool is_encasing(const std::vector<Ellipse>& ellipses, std::size_t outer,
                 std::size_t inner, const RuleThresholds& rules) {
  const double deg = encasement_coverage_deg(ellipses, outer, inner, rules);
  return deg >= rules.encase_min_deg && deg < 360.0;
}

bool is_contiguous(const Ellipse& a, const Ellipse& b, const RuleThresholds& rules) {
  const double centre_gap =
      std::hypot(a.cx - b.cx, a.cy - b.cy) - a.max_radius() - b.max_radius();
  if (centre_gap > rules.contiguity_gap_px) return false;
  return boundary_distance(a, b) <= rules.contiguity_gap_px;
}

// Track geometry for a left-side scan at lateral offset u.
std::optional<Ellipse> left_frame_ellipse(const NeckModel& model, EntityClass cls,
                                          double z, double u) {
  const auto& t = model.track(cls);
  if (z < t.z_lo || z > t.z_hi) return std::nullopt;
  Ellipse e;
  e.cls = cls;
  e.cx = t.x0 + t.x_slope * z - u * model.lateral_gain_px;
  e.cy = t.y0 + t.y_slope * z;
  e.rx = t.rx0 + t.rx_slope * z;
  e.ry = t.ry0 + t.ry_slope * z;
  return e;
}

std::optional<BBox> clipped_box(const NeckModel& model, const Ellipse& e) {
  const double x0 = std::max(0.0, e.cx - e.rx);
  const double y0 = std::max(0.0, e.cy - e.ry);
  const double x1 = std::min(model.width, e.cx + e.rx);
  const double y1 = std::min(model.height, e.cy + e.ry);
  if (!(x1 > x0) || !(y1 > y0)) return std::nullopt;
  return BBox{x0, y0, x1 - x0, y1 - y0};
}

std::vector<std::pair<Ellipse, BBox>> left_frame_section(const NeckModel& model,
                                                         double z, double u) {
  std::vector<std::pair<Ellipse, BBox>> out;
  for (auto cls : kAllEntities) {
    auto e = left_frame_ellipse(model, cls, z, u);
    if (!e) continue;
    auto box = clipped_box(model, *e);
    if (!box) continue;
    out.emplace_back(*e, *box);
  }
  return out;
}

std::string default_image_id(const ProbePose& pose) {
  std::ostringstream ss;
  ss.precision(6);
  ss << "sim_" << side_name(pose.side) << "_z" << std::fixed << pose.z << "_u" << pose.u;
  return ss.str();
}

const std::array<std::string_view, 10> kTrackFields = {
    "x0", "x_slope", "y0", "y_slope", "rx0", "rx_slope", "ry0", "ry_slope", "z_lo", "z_hi"};

std::array<double*, 10> track_members(EllipseTrack& t) {
  return {&t.x0, &t.x_slope, &t.y0, &t.y_slope, &t.rx0, &t.rx_slope,
          &t.ry0, &t.ry_slope, &t.z_lo, &t.z_hi};
}

double read_number(const json& obj, std::string_view key, double fallback,
                   const std::string& path) {
  auto it = obj.find(std::string(key));
  if (it == obj.end()) return fallback;
  if (!it->is_number()) {
    throw Error(ErrorCode::kSchema, path + "." + std::string(key), "expected a number");
  }
  return it->get<double>();
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    const std::string& path) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::kSchema, path + "." + key, "unknown field");
    }
  }
}

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

}  // namespace

double Ellipse::implicit(double x, double y) const {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  return dx * dx + dy * dy;
}

NeckModel NeckModel::default_model() {
  NeckModel m;
  // Left-side scan: midline (CR) toward image-left, vessels central, IJV
  // superficial and lateral, VB deep and medial.
  m.track(EntityClass::kCCA) = {414, 0, 400, -20, 52, 0, 50, 0, 0.0, 1.0};
  m.track(EntityClass::kIJV) = {538, 0, 375, -15, 78, -10, 42, -6, 0.0, 1.0};
  m.track(EntityClass::kCR) = {165, 0, 250, 0, 60, 0, 50, 0, 0.35, 0.80};
  m.track(EntityClass::kTH) = {250, 0, 330, 0, 150, 0, 70, 0, 0.25, 0.70};
  m.track(EntityClass::kVB) = {300, 0, 640, 0, 115, 0, 72, 0, 0.0, 1.0};
  return m;
}

void NeckModel::check() const {
  if (!(width > 0 && height > 0)) throw Error(ErrorCode::kBadConfig, "model", "bad image size");
  if (!(lateral_gain_px >= 0)) throw Error(ErrorCode::kBadConfig, "model", "negative gain");
  for (auto cls : kAllEntities) {
    const auto& t = track(cls);
    const std::string path = "tracks." + std::string(short_key(cls));
    if (!(t.z_lo <= t.z_hi) || t.z_lo < 0.0 || t.z_hi > 1.0) {
      throw Error(ErrorCode::kBadConfig, path, "presence interval must be within [0,1]");
    }
    for (double z : {t.z_lo, t.z_hi}) {
      if (!(t.rx0 + t.rx_slope * z > 0) || !(t.ry0 + t.ry_slope * z > 0)) {
        throw Error(ErrorCode::kBadConfig, path, "radii must stay positive");
      }
    }
  }
  for (auto cls : {EntityClass::kCCA, EntityClass::kIJV}) {
    if (track(cls).z_lo != 0.0 || track(cls).z_hi != 1.0) {
      throw Error(ErrorCode::kBadConfig, "tracks." + std::string(short_key(cls)),
                  "must be present on all of [0,1]");
    }
  }
  if (!(rules.contiguity_gap_px >= 0 && rules.encase_min_deg > 0 &&
        rules.superior_margin_px >= 0 && rules.encase_reach > 0 && rules.encase_rays > 0)) {
    throw Error(ErrorCode::kBadConfig, "rules", "thresholds must be positive");
  }
}

NeckModel parse_model(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSyntax, "", e.what());
  }
  if (!root.is_object()) throw Error(ErrorCode::kSchema, "$", "expected an object");
  reject_unknown(root,
                 {"width", "height", "depth_mm", "focus_mm", "lateral_gain_px", "tracks",
                  "rules"},
                 "$");
  NeckModel m = NeckModel::default_model();
  m.width = read_number(root, "width", m.width, "$");
  m.height = read_number(root, "height", m.height, "$");
  m.depth_mm = read_number(root, "depth_mm", m.depth_mm, "$");
  m.focus_mm = read_number(root, "focus_mm", m.focus_mm, "$");
  m.lateral_gain_px = read_number(root, "lateral_gain_px", m.lateral_gain_px, "$");
  if (root.contains("tracks")) {
    const auto& tracks = root["tracks"];
    if (!tracks.is_object()) throw Error(ErrorCode::kSchema, "tracks", "expected an object");
    for (const auto& [key, value] : tracks.items()) {
      auto cls = entity_from_key(key);
      if (!cls) throw Error(ErrorCode::kVocab, "tracks." + key, "unknown entity");
      if (!value.is_object()) throw Error(ErrorCode::kSchema, "tracks." + key, "expected an object");
      for (const auto& [field, _] : value.items()) {
        if (std::find(kTrackFields.begin(), kTrackFields.end(), field) == kTrackFields.end()) {
          throw Error(ErrorCode::kSchema, "tracks." + key + "." + field, "unknown field");
        }
      }
      auto members = track_members(m.track(*cls));
      for (std::size_t i = 0; i < kTrackFields.size(); ++i) {
        *members[i] = read_number(value, kTrackFields[i], *members[i], "tracks." + key);
      }
    }
  }
  if (root.contains("rules")) {
    const auto& r = root["rules"];
    if (!r.is_object()) throw Error(ErrorCode::kSchema, "rules", "expected an object");
    reject_unknown(r,
                   {"contiguity_gap_px", "encase_min_deg", "superior_margin_px",
                    "encase_reach", "encase_rays"},
                   "rules");
    m.rules.contiguity_gap_px = read_number(r, "contiguity_gap_px", m.rules.contiguity_gap_px, "rules");
    m.rules.encase_min_deg = read_number(r, "encase_min_deg", m.rules.encase_min_deg, "rules");
    m.rules.superior_margin_px =
        read_number(r, "superior_margin_px", m.rules.superior_margin_px, "rules");
    m.rules.encase_reach = read_number(r, "encase_reach", m.rules.encase_reach, "rules");
    m.rules.encase_rays = static_cast<int>(read_number(r, "encase_rays", m.rules.encase_rays, "rules"));
  }
  m.check();
  return m;
}

std::string write_model(const NeckModel& model) {
  ordered_json root;
  root["width"] = model.width;
  root["height"] = model.height;
  root["depth_mm"] = model.depth_mm;
  root["focus_mm"] = model.focus_mm;
  root["lateral_gain_px"] = model.lateral_gain_px;
  ordered_json tracks = ordered_json::object();
  for (auto cls : kAllEntities) {
    auto t = model.track(cls);
    auto members = track_members(t);
    ordered_json tj;
    for (std::size_t i = 0; i < kTrackFields.size(); ++i) tj[std::string(kTrackFields[i])] = *members[i];
    tracks[std::string(short_key(cls))] = std::move(tj);
  }
  root["tracks"] = std::move(tracks);
  root["rules"] = {{"contiguity_gap_px", model.rules.contiguity_gap_px},
                   {"encase_min_deg", model.rules.encase_min_deg},
                   {"superior_margin_px", model.rules.superior_margin_px},
                   {"encase_reach", model.rules.encase_reach},
                   {"encase_rays", model.rules.encase_rays}};
  return root.dump(2) + "\n";
}

NeckModel read_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, path, "cannot open model file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

std::vector<Ellipse> visible_ellipses(const NeckModel& model, const ProbePose& pose) {
  const bool right = pose.side == LateralSide::kRight;
  std::vector<Ellipse> out;
  for (auto& [e, _] : left_frame_section(model, pose.z, right ? -pose.u : pose.u)) {
    Ellipse m = e;
    if (right) m.cx = model.width - e.cx;
    out.push_back(m);
  }
  return out;
}

SceneGraph cross_section(const NeckModel& model, const ProbePose& pose,
                         std::string image_id) {
  if (image_id.empty()) image_id = default_image_id(pose);
  if (pose.side == LateralSide::kRight) {
    // Right-side scans are the exact mirror of the left side at -u.
    SceneGraph sg = flip_horizontal(
        cross_section(model, {pose.z, -pose.u, LateralSide::kLeft}, image_id));
    return sg;
  }
  SceneGraph sg;
  sg.image_id = std::move(image_id);
  sg.width = model.width;
  sg.height = model.height;
  std::vector<Ellipse> ellipses;
  for (auto& [e, box] : left_frame_section(model, pose.z, pose.u)) {
    sg.detections.push_back({e.cls, box, 1.0});
    ellipses.push_back(e);
  }
  sg.triplets = derive_relations(ellipses, model.rules);
  for (auto& t : sg.triplets) t.score = 1.0;
  return sg;
}

double encasement_coverage_deg(const std::vector<Ellipse>& ellipses, std::size_t outer,
                               std::size_t inner, const RuleThresholds& rules) {
  const Ellipse& b = ellipses[inner];
  const double reach = rules.encase_reach * b.max_radius();
  int hits = 0;
  for (int k = 0; k < rules.encase_rays; ++k) {
    const double angle = 2.0 * kPi * k / rules.encase_rays;
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    double nearest = std::numeric_limits<double>::infinity();
    std::size_t who = ellipses.size();
    for (std::size_t e = 0; e < ellipses.size(); ++e) {
      if (e == inner) continue;
      const double t = ray_entry(ellipses[e], b.cx, b.cy, dx, dy);
      if (t <= reach && t < nearest) {
        nearest = t;
        who = e;
      }
    }
    if (who == outer) ++hits;
  }
  return 360.0 * hits / rules.encase_rays;
}

double boundary_distance(const Ellipse& a, const Ellipse& b) {
  if (a.implicit(b.cx, b.cy) < 1.0 || b.implicit(a.cx, a.cy) < 1.0) {
    return -std::min(a.rx, a.ry);
  }
  return std::min(one_sided_gap(a, b), one_sided_gap(b, a));
}

std::vector<Triplet> derive_relations(const std::vector<Ellipse>& ellipses,
                                      const RuleThresholds& rules) {
  std::vector<Triplet> out;
  auto directed = [&](std::size_t a, std::size_t b) -> std::optional<Triplet> {
    if (is_encasing(ellipses, a, b, rules)) {
      return Triplet{a, PredicateClass::kPartiallyEncases, b, std::nullopt};
    }
    if (is_superior(ellipses[a], ellipses[b], rules)) {
      return Triplet{a, PredicateClass::kSuperiorTo, b, std::nullopt};
    }
    return std::nullopt;
  };
  for (std::size_t i = 0; i < ellipses.size(); ++i) {
    for (std::size_t j = i + 1; j < ellipses.size(); ++j) {
      auto ij = directed(i, j);
      auto ji = directed(j, i);
      if (ij) out.push_back(*ij);
      if (ji) out.push_back(*ji);
      if (!ij && !ji && is_contiguous(ellipses[i], ellipses[j], rules)) {
        const bool i_first = index_of(ellipses[i].cls) <= index_of(ellipses[j].cls);
        out.push_back({i_first ? i : j, PredicateClass::kContiguousWith, i_first ? j : i,
                       std::nullopt});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

void NoiseConfig::check() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(drop_probability) || !prob(spurious_triplet_probability)) {
    throw Error(ErrorCode::kBadConfig, "noise", "probabilities must lie in [0,1]");
  }
  if (!(box_jitter_px >= 0.0) || !(score_noise >= 0.0)) {
    throw Error(ErrorCode::kBadConfig, "noise", "standard deviations must be >= 0");
  }
}

SimulatorPredictor::SimulatorPredictor(NeckModel model, NoiseConfig noise)
    : model_(std::move(model)), noise_(noise) {
  model_.check();
  noise_.check();
}

SceneGraph SimulatorPredictor::predict(const FrameRef& frame) {
  if (!frame.pose) {
    throw Error(ErrorCode::kPrecondition, frame.image_id, "simulator needs a probe pose");
  }
  if (!frame.pose->valid()) {
    throw Error(ErrorCode::kBadConfig, frame.image_id, "probe pose out of range");
  }
  SceneGraph gt = cross_section(model_, *frame.pose, frame.image_id);
  if (noise_.is_zero()) return gt;

  const auto zb = bits(frame.pose->z);
  const auto ub = bits(frame.pose->u);
  std::seed_seq seq{static_cast<std::uint32_t>(noise_.seed),
                    static_cast<std::uint32_t>(noise_.seed >> 32),
                    static_cast<std::uint32_t>(zb), static_cast<std::uint32_t>(zb >> 32),
                    static_cast<std::uint32_t>(ub), static_cast<std::uint32_t>(ub >> 32),
                    static_cast<std::uint32_t>(frame.pose->side)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto gauss = [&rng](double sd) {
    if (sd <= 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sd)(rng);
  };
  auto noisy_score = [&](double base) {
    return std::clamp(base + gauss(noise_.score_noise), 0.0, 1.0);
  };

  SceneGraph out;
  out.image_id = gt.image_id;
  out.width = gt.width;
  out.height = gt.height;
  std::vector<std::size_t> remap(gt.detections.size(), gt.detections.size());
  for (std::size_t i = 0; i < gt.detections.size(); ++i) {
    if (noise_.drop_probability > 0.0 && unit(rng) < noise_.drop_probability) continue;
    Detection d = gt.detections[i];
    if (noise_.box_jitter_px > 0.0) {
      const double x0 = std::clamp(d.box.x + gauss(noise_.box_jitter_px), 0.0, out.width);
      const double y0 = std::clamp(d.box.y + gauss(noise_.box_jitter_px), 0.0, out.height);
      const double x1 = std::clamp(d.box.right() + gauss(noise_.box_jitter_px), 0.0, out.width);
      const double y1 = std::clamp(d.box.bottom() + gauss(noise_.box_jitter_px), 0.0, out.height);
      if (!(x1 - x0 >= 1.0) || !(y1 - y0 >= 1.0)) continue;
      d.box = {x0, y0, x1 - x0, y1 - y0};
    }
    d.score = noisy_score(d.effective_score());
    remap[i] = out.detections.size();
    out.detections.push_back(d);
  }
  const std::size_t gone = gt.detections.size();
  for (const auto& t : gt.triplets) {
    if (remap[t.sub] == gone || remap[t.obj] == gone) continue;
    out.triplets.push_back({remap[t.sub], t.pred, remap[t.obj], noisy_score(t.effective_score())});
  }
  if (noise_.spurious_triplet_probability > 0.0) {
    const std::size_t n = out.detections.size();
    std::vector<bool> used(n * n, false);
    for (const auto& t : out.triplets) used[t.sub * n + t.obj] = true;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a == b || used[a * n + b]) continue;
        if (unit(rng) >= noise_.spurious_triplet_probability) continue;
        const auto pred = kAllPredicates[static_cast<std::size_t>(unit(rng) * 3.0) % 3];
        out.triplets.push_back({a, pred, b, unit(rng)});
        used[a * n + b] = true;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Guidance
// ---------------------------------------------------------------------------

std::string_view direction_name(GuidanceDirection dir) {
  switch (dir) {
    case GuidanceDirection::kCranial: return "cranial";
    case GuidanceDirection::kCaudal: return "caudal";
    case GuidanceDirection::kMedial: return "medial";
    case GuidanceDirection::kLateral: return "lateral";
  }
  return "cranial";
}

std::optional<GuidanceDirection> direction_from_name(std::string_view name) {
  for (auto d : {GuidanceDirection::kCranial, GuidanceDirection::kCaudal,
                 GuidanceDirection::kMedial, GuidanceDirection::kLateral}) {
    if (direction_name(d) == name) return d;
  }
  return std::nullopt;
}

double lateral_sign(LateralSide side) {
  return side == LateralSide::kRight ? -1.0 : 1.0;
}

ProbePose step_pose(const ProbePose& pose, GuidanceDirection dir, double step) {
  ProbePose p = pose;
  switch (dir) {
    case GuidanceDirection::kCranial: p.z = std::clamp(p.z + step, 0.0, 1.0); break;
    case GuidanceDirection::kCaudal: p.z = std::clamp(p.z - step, 0.0, 1.0); break;
    case GuidanceDirection::kLateral:
      p.u = std::clamp(p.u + lateral_sign(p.side) * step, -1.0, 1.0);
      break;
    case GuidanceDirection::kMedial:
      p.u = std::clamp(p.u - lateral_sign(p.side) * step, -1.0, 1.0);
      break;
  }
  return p;
}

bool target_visible(const NeckModel& model, const ProbePose& pose, EntityClass target) {
  const double u = pose.side == LateralSide::kRight ? -pose.u : pose.u;
  auto e = left_frame_ellipse(model, target, pose.z, u);
  return e && clipped_box(model, *e).has_value();
}

Guidance oracle_guidance(const NeckModel& model, const ProbePose& pose,
                         EntityClass target, double step) {
  if (!pose.valid()) throw Error(ErrorCode::kBadConfig, "pose", "probe pose out of range");
  if (!(step > 0.0)) throw Error(ErrorCode::kBadConfig, "step", "step must be positive");
  Guidance g;
  if (target_visible(model, pose, target)) {
    g.already_visible = true;
    return g;
  }

  // Poses reached by stepping `dir` k = 1, 2, ... times until the clamp
  // stops the probe.
  auto walk = [step](const ProbePose& from, GuidanceDirection dir) {
    std::vector<ProbePose> poses;
    ProbePose p = from;
    for (;;) {
      ProbePose next = step_pose(p, dir, step);
      if (next == p) break;
      poses.push_back(next);
      p = next;
    }
    return poses;
  };
  struct Leg {
    GuidanceDirection dir;
    int steps;
  };
  auto single_axis = [&](const ProbePose& from, GuidanceDirection first,
                         GuidanceDirection second) -> std::optional<Leg> {
    const auto a = walk(from, first);
    const auto b = walk(from, second);
    for (std::size_t k = 0; k < std::max(a.size(), b.size()); ++k) {
      if (k < a.size() && target_visible(model, a[k], target)) {
        return Leg{first, static_cast<int>(k + 1)};
      }
      if (k < b.size() && target_visible(model, b[k], target)) {
        return Leg{second, static_cast<int>(k + 1)};
      }
    }
    return std::nullopt;
  };

  if (auto leg = single_axis(pose, GuidanceDirection::kCranial, GuidanceDirection::kCaudal)) {
    g.direction = leg->dir;
    g.steps = leg->steps;
    return g;
  }
  if (auto leg = single_axis(pose, GuidanceDirection::kMedial, GuidanceDirection::kLateral)) {
    g.direction = leg->dir;
    g.steps = leg->steps;
    return g;
  }

  // Two legs: z first, then u; minimal total step count.
  std::optional<Guidance> best;
  for (auto zdir : {GuidanceDirection::kCranial, GuidanceDirection::kCaudal}) {
    const auto zs = walk(pose, zdir);
    for (std::size_t k = 0; k < zs.size(); ++k) {
      auto leg = single_axis(zs[k], GuidanceDirection::kMedial, GuidanceDirection::kLateral);
      if (!leg) continue;
      const int total = static_cast<int>(k + 1) + leg->steps;
      if (!best || total < best->total_steps()) {
        Guidance cand;
        cand.direction = zdir;
        cand.steps = static_cast<int>(k + 1);
        cand.then_direction = leg->dir;
        cand.then_steps = leg->steps;
        best = cand;
      }
    }
  }
  if (best) return *best;
  throw Error(ErrorCode::kUnreachable, std::string(short_key(target)),
              "no reachable pose shows this structure");
}

}  // namespace ussg::anatomy
