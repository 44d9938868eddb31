#include "ussg/dataset.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ussg/error.hpp"

namespace ussg {

namespace {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

std::string at(const std::string& base, std::string_view field) {
  return base + "." + std::string(field);
}

std::string idx(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

class Reader {
 public:
  Reader(const ParseOptions& opts, std::vector<std::string>* warnings)
      : opts_(opts), warnings_(warnings) {}

  void check_fields(const json& obj, const std::string& path,
                    std::initializer_list<std::string_view> required,
                    std::initializer_list<std::string_view> optional) const {
    if (!obj.is_object()) {
      throw Error(ErrorCode::kSchema, path, "expected an object");
    }
    for (auto key : required) {
      if (!obj.contains(std::string(key))) {
        throw Error(ErrorCode::kSchema, at(path, key), "missing required field");
      }
    }
    for (const auto& [key, _] : obj.items()) {
      bool known = false;
      for (auto k : required) known = known || k == key;
      for (auto k : optional) known = known || k == key;
      if (known) continue;
      if (opts_.strict) {
        throw Error(ErrorCode::kSchema, at(path, key), "unknown field");
      }
      if (warnings_) warnings_->push_back(at(path, key) + ": unknown field ignored");
    }
  }

 private:
  const ParseOptions& opts_;
  std::vector<std::string>* warnings_;
};

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw Error(ErrorCode::kSchema, path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(ErrorCode::kSchema, path, "non-finite number");
  return d;
}

std::string string_of(const json& v, const std::string& path) {
  if (!v.is_string()) throw Error(ErrorCode::kSchema, path, "expected a string");
  return v.get<std::string>();
}

std::size_t index_value(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer()) {
    throw Error(ErrorCode::kRef, path, "negative detection index");
  }
  throw Error(ErrorCode::kSchema, path, "expected a non-negative integer");
}

std::optional<double> score_of(const json& obj, const std::string& path) {
  if (!obj.contains("score")) return std::nullopt;
  const double s = number(obj.at("score"), at(path, "score"));
  if (s < 0.0 || s > 1.0) {
    throw Error(ErrorCode::kSchema, at(path, "score"), "score outside [0,1]");
  }
  return s;
}

ErrorCode error_for(ViolationCode code) {
  switch (code) {
    case ViolationCode::kBadDimensions: return ErrorCode::kSchema;
    case ViolationCode::kBadBox: return ErrorCode::kBounds;
    case ViolationCode::kBoxOutOfBounds: return ErrorCode::kBounds;
    case ViolationCode::kBadScore: return ErrorCode::kSchema;
    case ViolationCode::kIndexOutOfRange: return ErrorCode::kRef;
    case ViolationCode::kSelfRelation: return ErrorCode::kSelfRelation;
    case ViolationCode::kDuplicatePair: return ErrorCode::kDuplicatePair;
    case ViolationCode::kDuplicateTriplet: return ErrorCode::kDuplicateTriplet;
  }
  return ErrorCode::kSchema;
}

// Scene-graph paths ("detections[i]", "triplets[i]") mapped onto the file's
// field names.
std::string file_path_for(const std::string& image_path, const Violation& v) {
  std::string p = v.path;
  if (p.rfind("detections", 0) == 0) p.replace(0, 10, "boxes");
  if (p.rfind("triplets", 0) == 0) p.replace(0, 8, "relations");
  return p.empty() ? image_path : image_path + "." + p;
}

void parse_image_body(const Reader& reader, const json& obj, const std::string& path,
                      ImageRecord& rec) {
  rec.width = number(obj.at("width"), at(path, "width"));
  rec.height = number(obj.at("height"), at(path, "height"));
  if (obj.contains("side")) {
    auto s = side_from_name(string_of(obj.at("side"), at(path, "side")));
    if (!s) {
      throw Error(ErrorCode::kVocab, at(path, "side"),
                  "expected left, right or unknown");
    }
    rec.side = *s;
  }

  const auto& boxes = obj.at("boxes");
  if (!boxes.is_array()) {
    throw Error(ErrorCode::kSchema, at(path, "boxes"), "expected an array");
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const std::string bp = idx(at(path, "boxes"), i);
    const auto& b = boxes[i];
    reader.check_fields(b, bp, {"cls", "x", "y", "w", "h"}, {"score"});
    BoxRecord box;
    const std::string key = string_of(b.at("cls"), at(bp, "cls"));
    auto cls = entity_from_key(key);
    if (!cls) {
      throw Error(ErrorCode::kVocab, at(bp, "cls"), "unknown class '" + key + "'");
    }
    box.cls = *cls;
    box.x = number(b.at("x"), at(bp, "x"));
    box.y = number(b.at("y"), at(bp, "y"));
    box.w = number(b.at("w"), at(bp, "w"));
    box.h = number(b.at("h"), at(bp, "h"));
    box.score = score_of(b, bp);
    rec.boxes.push_back(box);
  }

  const auto& rels = obj.at("relations");
  if (!rels.is_array()) {
    throw Error(ErrorCode::kSchema, at(path, "relations"), "expected an array");
  }
  for (std::size_t i = 0; i < rels.size(); ++i) {
    const std::string rp = idx(at(path, "relations"), i);
    const auto& r = rels[i];
    reader.check_fields(r, rp, {"sub", "pred", "obj"}, {"score"});
    RelationRecord rel;
    rel.sub = index_value(r.at("sub"), at(rp, "sub"));
    rel.obj = index_value(r.at("obj"), at(rp, "obj"));
    const std::string pred = string_of(r.at("pred"), at(rp, "pred"));
    auto p = predicate_from_string(pred);
    if (!p) {
      throw Error(ErrorCode::kVocab, at(rp, "pred"),
                  "unknown predicate '" + pred + "'");
    }
    rel.pred = *p;
    rel.score = score_of(r, rp);
    rec.relations.push_back(rel);
  }

  auto violations = validate(rec.to_scene_graph());
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw Error(error_for(v.code), file_path_for(path, v), v.message);
  }
}

ImageRecord parse_image(const Reader& reader, const json& obj,
                        const std::string& path) {
  reader.check_fields(obj, path, {"id", "width", "height", "boxes", "relations"},
                      {"side"});
  ImageRecord rec;
  rec.id = string_of(obj.at("id"), at(path, "id"));
  if (rec.id.empty()) throw Error(ErrorCode::kSchema, at(path, "id"), "empty id");
  try {
    parse_image_body(reader, obj, path, rec);
  } catch (const Error& e) {
    throw Error(e.code(), e.path(), e.detail() + " (image '" + rec.id + "')");
  }
  return rec;
}

// Integral values print without a fraction so canonical text stays stable
// across write/parse cycles.
ordered_json number_json(double v) {
  constexpr double kMaxExact = 9007199254740992.0;  // 2^53
  if (std::trunc(v) == v && std::fabs(v) < kMaxExact) {
    return ordered_json(static_cast<std::int64_t>(v));
  }
  return ordered_json(v);
}

}  // namespace

SceneGraph ImageRecord::to_scene_graph() const {
  SceneGraph sg;
  sg.image_id = id;
  sg.width = width;
  sg.height = height;
  sg.detections.reserve(boxes.size());
  for (const auto& b : boxes) {
    sg.detections.push_back({b.cls, {b.x, b.y, b.w, b.h}, b.score});
  }
  sg.triplets.reserve(relations.size());
  for (const auto& r : relations) {
    sg.triplets.push_back({r.sub, r.pred, r.obj, r.score});
  }
  return sg;
}

ImageRecord ImageRecord::from_scene_graph(const SceneGraph& sg,
                                          LateralSide side) {
  ImageRecord rec;
  rec.id = sg.image_id;
  rec.width = sg.width;
  rec.height = sg.height;
  rec.side = side;
  for (const auto& d : sg.detections) {
    rec.boxes.push_back({d.cls, d.box.x, d.box.y, d.box.w, d.box.h, d.score});
  }
  for (const auto& t : sg.triplets) {
    rec.relations.push_back({t.sub, t.pred, t.obj, t.score});
  }
  return rec;
}

std::vector<SceneGraph> DatasetFile::scene_graphs() const {
  std::vector<SceneGraph> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(img.to_scene_graph());
  return out;
}

const ImageRecord* DatasetFile::find(std::string_view id) const {
  for (const auto& img : images) {
    if (img.id == id) return &img;
  }
  return nullptr;
}

DatasetFile parse_dataset(std::string_view text, const ParseOptions& opts,
                          std::vector<std::string>* warnings) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSyntax, "", e.what());
  }

  Reader reader(opts, warnings);
  reader.check_fields(root, "$", {"version", "categories", "predicates", "images"},
                      {});

  DatasetFile d;
  const auto& version = root.at("version");
  if (!version.is_number_integer() || version.get<int>() != kDatasetVersion) {
    throw Error(ErrorCode::kSchema, "version",
                "expected version " + std::to_string(kDatasetVersion));
  }

  const auto& cats = root.at("categories");
  if (!cats.is_array()) throw Error(ErrorCode::kSchema, "categories", "expected an array");
  if (cats.size() != kAllEntities.size()) {
    throw Error(ErrorCode::kVocab, "categories", "expected the 5 entity keys");
  }
  for (std::size_t i = 0; i < cats.size(); ++i) {
    if (!cats[i].is_string() || cats[i].get<std::string>() != short_key(kAllEntities[i])) {
      throw Error(ErrorCode::kVocab, idx("categories", i),
                  "expected '" + std::string(short_key(kAllEntities[i])) + "'");
    }
  }

  const auto& preds = root.at("predicates");
  if (!preds.is_array()) throw Error(ErrorCode::kSchema, "predicates", "expected an array");
  if (preds.size() != kAllPredicates.size()) {
    throw Error(ErrorCode::kVocab, "predicates", "expected the 3 predicate strings");
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!preds[i].is_string() ||
        preds[i].get<std::string>() != display_string(kAllPredicates[i])) {
      throw Error(ErrorCode::kVocab, idx("predicates", i),
                  "expected '" + std::string(display_string(kAllPredicates[i])) + "'");
    }
  }

  const auto& images = root.at("images");
  if (!images.is_array()) throw Error(ErrorCode::kSchema, "images", "expected an array");
  std::set<std::string, std::less<>> ids;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string path = idx("images", i);
    auto rec = parse_image(reader, images[i], path);
    if (!ids.insert(rec.id).second) {
      throw Error(ErrorCode::kDuplicateId, at(path, "id"),
                  "image id '" + rec.id + "' repeated");
    }
    d.images.push_back(std::move(rec));
  }
  return d;
}

std::string write_dataset(const DatasetFile& d) {
  ordered_json root;
  root["version"] = kDatasetVersion;
  root["categories"] = ordered_json::array();
  for (auto cls : kAllEntities) root["categories"].push_back(short_key(cls));
  root["predicates"] = ordered_json::array();
  for (auto p : kAllPredicates) root["predicates"].push_back(display_string(p));
  root["images"] = ordered_json::array();
  for (const auto& img : d.images) {
    ordered_json j;
    j["id"] = img.id;
    j["width"] = number_json(img.width);
    j["height"] = number_json(img.height);
    j["side"] = side_name(img.side);
    j["boxes"] = ordered_json::array();
    for (const auto& b : img.boxes) {
      ordered_json bj;
      bj["cls"] = short_key(b.cls);
      bj["x"] = number_json(b.x);
      bj["y"] = number_json(b.y);
      bj["w"] = number_json(b.w);
      bj["h"] = number_json(b.h);
      if (b.score) bj["score"] = number_json(*b.score);
      j["boxes"].push_back(std::move(bj));
    }
    j["relations"] = ordered_json::array();
    for (const auto& r : img.relations) {
      ordered_json rj;
      rj["sub"] = r.sub;
      rj["pred"] = display_string(r.pred);
      rj["obj"] = r.obj;
      if (r.score) rj["score"] = number_json(*r.score);
      j["relations"].push_back(std::move(rj));
    }
    root["images"].push_back(std::move(j));
  }
  return root.dump(2) + "\n";
}

DatasetFile read_dataset_file(const std::string& path, const ParseOptions& opts,
                              std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), opts, warnings);
}

void write_dataset_file(const std::string& path, const DatasetFile& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, path, "cannot open for writing");
  out << write_dataset(d);
  if (!out) throw Error(ErrorCode::kIo, path, "write failed");
}

DatasetFile augment_flip(const DatasetFile& d) {
  std::set<std::string, std::less<>> ids;
  for (const auto& img : d.images) {
    if (img.id.size() >= kFlipSuffix.size() &&
        img.id.compare(img.id.size() - kFlipSuffix.size(), kFlipSuffix.size(),
                       kFlipSuffix) == 0) {
      throw Error(ErrorCode::kDuplicateId, "images." + img.id,
                  "id already carries the flip suffix");
    }
    ids.insert(img.id);
  }

  DatasetFile out = d;
  out.images.reserve(d.images.size() * 2);
  for (const auto& img : d.images) {
    const std::string flipped_id = img.id + std::string(kFlipSuffix);
    if (ids.count(flipped_id) != 0) {
      throw Error(ErrorCode::kDuplicateId, "images." + flipped_id,
                  "flipped id collides with an existing image");
    }
    SceneGraph sg = flip_horizontal(img.to_scene_graph());
    sg.image_id = flipped_id;
    out.images.push_back(ImageRecord::from_scene_graph(sg, opposite(img.side)));
  }
  return out;
}

ReplayPredictor::ReplayPredictor(const DatasetFile& predictions) {
  for (std::size_t i = 0; i < predictions.images.size(); ++i) {
    const auto& img = predictions.images[i];
    for (std::size_t b = 0; b < img.boxes.size(); ++b) {
      if (!img.boxes[b].score) {
        throw Error(ErrorCode::kMissingScores,
                    idx(at(idx("images", i), "boxes"), b), "box has no score");
      }
    }
    for (std::size_t r = 0; r < img.relations.size(); ++r) {
      if (!img.relations[r].score) {
        throw Error(ErrorCode::kMissingScores,
                    idx(at(idx("images", i), "relations"), r),
                    "relation has no score");
      }
    }
    graphs_.emplace(img.id, img.to_scene_graph());
  }
}

SceneGraph ReplayPredictor::predict(const FrameRef& frame) {
  auto it = graphs_.find(frame.image_id);
  if (it == graphs_.end()) {
    throw Error(ErrorCode::kUnknownImage, frame.image_id, "no stored prediction");
  }
  return it->second;
}

std::unique_ptr<Predictor> replay_predictor(const DatasetFile& predictions) {
  return std::make_unique<ReplayPredictor>(predictions);
}

}  // namespace ussg
