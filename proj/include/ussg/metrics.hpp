#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ussg/core.hpp"

namespace ussg::metrics {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct DetectionEvalConfig {
  // COCO defaults: 0.50, 0.55, ..., 0.95.
  std::vector<double> iou_thresholds = default_thresholds();
  static constexpr int kRecallPoints = 101;

  static std::vector<double> default_thresholds();
  // Throws BAD_CONFIG.
  void check() const;
};

struct RelationEvalConfig {
  std::vector<int> k_values = {5, 20};
  double match_iou = 0.5;
  // Keep only the best-scored predicate per ordered (sub, obj) pair before
  // ranking.
  bool constrained = true;

  void check() const;
};

struct TextMetricConfig {
  // F_mean = numerator_weight * P * R / (R + precision_weight * P)
  double meteor_numerator_weight = 10.0;
  double meteor_precision_weight = 9.0;
  double meteor_gamma = 0.5;
  double meteor_beta = 3.0;
  double rouge_beta = 1.0;
  // Alignment search cap; beyond it the best alignment found so far is used.
  long meteor_search_budget = 2'000'000;

  void check() const;
};

// ---------------------------------------------------------------------------
// Detection AP
// ---------------------------------------------------------------------------

struct DetectionApResult {
  std::vector<double> thresholds;
  // per_class_ap[class][threshold index]; nullopt for classes with no GT.
  std::array<std::optional<std::vector<double>>, 5> per_class_ap;
  std::vector<double> map_per_threshold;
  double ap50 = 0.0;
  double ap_range = 0.0;
  // Classes absent from every ground-truth graph (excluded from mAP).
  std::vector<EntityClass> no_gt_classes;

  std::optional<double> map_at(double threshold) const;
};

// COCO-style AP with 101-point interpolation and greedy score-ordered
// matching. Throws ID_MISMATCH when the two lists do not cover the same ids.
DetectionApResult detection_ap(const std::vector<SceneGraph>& preds,
                               const std::vector<SceneGraph>& gts,
                               const DetectionEvalConfig& cfg = {});

// AP for one class at one threshold; exposed for testing.
double average_precision(const std::vector<SceneGraph>& preds,
                         const std::vector<SceneGraph>& gts, EntityClass cls,
                         double iou_threshold);

// ---------------------------------------------------------------------------
// Relation recall
// ---------------------------------------------------------------------------

struct RecallAtK {
  int k = 0;
  double value = 0.0;
};

std::vector<RecallAtK> relation_recall(const std::vector<SceneGraph>& preds,
                                       const std::vector<SceneGraph>& gts,
                                       const RelationEvalConfig& cfg = {});

struct MeanRecallAtK {
  int k = 0;
  double value = 0.0;
  // Per-predicate recall for predicates present in GT.
  std::array<std::optional<double>, 3> per_predicate;
};

std::vector<MeanRecallAtK> mean_relation_recall(
    const std::vector<SceneGraph>& preds, const std::vector<SceneGraph>& gts,
    const RelationEvalConfig& cfg = {});

// Per image: number of GT triplets recovered by the top-k predictions, split
// by predicate. Exposed for testing.
std::array<std::size_t, 3> matched_gt_per_predicate(const SceneGraph& pred,
                                                    const SceneGraph& gt,
                                                    int k,
                                                    const RelationEvalConfig& cfg);

// ---------------------------------------------------------------------------
// Text metrics
// ---------------------------------------------------------------------------

// Lowercased tokens split on runs of non-alphanumeric ASCII. Bytes >= 0x80
// are kept inside tokens so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b);

struct RougeL {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

RougeL rouge_l(std::string_view candidate, std::string_view reference,
               const TextMetricConfig& cfg = {});

struct MeteorDetail {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_mean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
  bool search_exhausted = true;
};

// Exact-match METEOR: the alignment maximises matches and, among those,
// minimises chunks.
MeteorDetail meteor_detail(const std::vector<std::string>& candidate,
                           const std::vector<std::string>& reference,
                           const TextMetricConfig& cfg = {});
double meteor(std::string_view candidate, std::string_view reference,
              const TextMetricConfig& cfg = {});

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct TextPair {
  std::string id;
  std::string candidate;
  std::string reference;
};

struct TextScore {
  std::string id;
  double meteor = 0.0;
  RougeL rouge;
};

struct TextReport {
  std::vector<TextScore> samples;
  double meteor_mean = 0.0;
  double rouge_l_mean = 0.0;
};

TextReport score_texts(const std::vector<TextPair>& pairs,
                       const TextMetricConfig& cfg = {});

struct EvalConfigs {
  DetectionEvalConfig detection;
  RelationEvalConfig relation;
  TextMetricConfig text;
};

struct EvalReport {
  std::optional<DetectionApResult> detection;
  std::vector<RecallAtK> r_at_k;
  std::vector<MeanRecallAtK> mr_at_k;
  std::optional<TextReport> text;
  std::optional<double> human_acc;
  std::optional<double> directional_acc;
};

EvalReport score_report(const std::vector<SceneGraph>& preds,
                        const std::vector<SceneGraph>& gts,
                        const std::vector<TextPair>& text_pairs,
                        const std::optional<std::vector<bool>>& human_labels,
                        const EvalConfigs& configs = {});

// Accepts one label per line ("pass"/"fail", "1"/"0", "true"/"false"); blank
// lines and '#' comments are skipped. Throws PARSE.
std::vector<bool> parse_labels(std::string_view text);

// Text pairs file: JSON array of {"id", "candidate", "reference"}.
std::vector<TextPair> parse_text_pairs(std::string_view text);

// Structured report (JSON, stable key order) and a plain-text table.
std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

}  // namespace ussg::metrics
