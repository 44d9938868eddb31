#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ussg/core.hpp"

namespace ussg {

inline constexpr int kDatasetVersion = 1;

struct BoxRecord {
  EntityClass cls = EntityClass::kCCA;
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  std::optional<double> score;

  friend bool operator==(const BoxRecord&, const BoxRecord&) = default;
};

struct RelationRecord {
  std::size_t sub = 0;
  PredicateClass pred = PredicateClass::kContiguousWith;
  std::size_t obj = 0;
  std::optional<double> score;

  friend bool operator==(const RelationRecord&,
                         const RelationRecord&) = default;
};

struct ImageRecord {
  std::string id;
  double width = 0.0;
  double height = 0.0;
  LateralSide side = LateralSide::kUnknown;
  std::vector<BoxRecord> boxes;
  std::vector<RelationRecord> relations;

  SceneGraph to_scene_graph() const;
  static ImageRecord from_scene_graph(const SceneGraph& sg,
                                      LateralSide side = LateralSide::kUnknown);

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// The vocabulary lists are implied by the format version and always written
// in canonical order; they are therefore not stored.
struct DatasetFile {
  int version = kDatasetVersion;
  std::vector<ImageRecord> images;

  std::vector<SceneGraph> scene_graphs() const;
  const ImageRecord* find(std::string_view id) const;

  friend bool operator==(const DatasetFile&, const DatasetFile&) = default;
};

struct ParseOptions {
  // Unknown fields are SCHEMA errors when strict, warnings otherwise.
  bool strict = true;
};

// Throws ussg::Error with SYNTAX, SCHEMA, VOCAB, REF, BOUNDS, SELF_RELATION,
// DUPLICATE_PAIR, DUPLICATE_TRIPLET or DUPLICATE_ID; the error path names the
// offending field, e.g. "images[0].relations[0].obj".
DatasetFile parse_dataset(std::string_view text, const ParseOptions& opts = {},
                          std::vector<std::string>* warnings = nullptr);

// Canonical text: fixed key order, images in stored order, two-space indent,
// trailing newline. Integral values are written without a fraction.
std::string write_dataset(const DatasetFile& d);

DatasetFile read_dataset_file(const std::string& path,
                              const ParseOptions& opts = {},
                              std::vector<std::string>* warnings = nullptr);
void write_dataset_file(const std::string& path, const DatasetFile& d);

inline constexpr std::string_view kFlipSuffix = "_hf";

// Appends a horizontally flipped copy of every image.
DatasetFile augment_flip(const DatasetFile& d);

// Serves stored predictions by image id.
class ReplayPredictor final : public Predictor {
 public:
  // Throws MISSING_SCORES when any box or relation lacks a score.
  explicit ReplayPredictor(const DatasetFile& predictions);

  std::string_view name() const override { return "replay"; }
  // Throws UNKNOWN_IMAGE.
  SceneGraph predict(const FrameRef& frame) override;

  std::size_t size() const { return graphs_.size(); }

 private:
  std::map<std::string, SceneGraph, std::less<>> graphs_;
};

std::unique_ptr<Predictor> replay_predictor(const DatasetFile& predictions);

}  // namespace ussg
