#include "ussg/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "ussg/error.hpp"

namespace ussg::metrics {

namespace {

using ordered_json = nlohmann::ordered_json;

// Pairs each GT graph with its prediction, ordered by image id so every
// reduction below is independent of input order.
std::vector<std::pair<const SceneGraph*, const SceneGraph*>> align(
    const std::vector<SceneGraph>& preds, const std::vector<SceneGraph>& gts) {
  std::map<std::string_view, const SceneGraph*> by_id;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.image_id, &p).second) {
      throw Error(ErrorCode::kIdMismatch, p.image_id, "duplicate prediction id");
    }
  }
  if (preds.size() != gts.size()) {
    throw Error(ErrorCode::kIdMismatch,
                "prediction and ground-truth image counts differ (" +
                    std::to_string(preds.size()) + " vs " +
                    std::to_string(gts.size()) + ")");
  }
  std::vector<std::pair<const SceneGraph*, const SceneGraph*>> out;
  std::set<std::string_view> seen;
  for (const auto& g : gts) {
    if (!seen.insert(g.image_id).second) {
      throw Error(ErrorCode::kIdMismatch, g.image_id, "duplicate ground-truth id");
    }
    auto it = by_id.find(g.image_id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::kIdMismatch, g.image_id, "no prediction for image");
    }
    out.emplace_back(it->second, &g);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second->image_id < b.second->image_id;
  });
  return out;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double recall_point(int j) {
  return static_cast<double>(j) /
         static_cast<double>(DetectionEvalConfig::kRecallPoints - 1);
}

double ap_for(const std::vector<std::pair<const SceneGraph*, const SceneGraph*>>& pairs,
              EntityClass cls, double threshold, std::size_t* npos_out) {
  struct Candidate {
    double score;
    std::size_t image;  // position in `pairs` (id order)
    std::size_t det;
  };
  std::vector<Candidate> cands;
  std::size_t npos = 0;
  std::vector<std::vector<std::size_t>> gt_of(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [pred, gt] = pairs[i];
    for (std::size_t d = 0; d < pred->detections.size(); ++d) {
      if (pred->detections[d].cls == cls) {
        cands.push_back({pred->detections[d].effective_score(), i, d});
      }
    }
    for (std::size_t g = 0; g < gt->detections.size(); ++g) {
      if (gt->detections[g].cls == cls) gt_of[i].push_back(g);
    }
    npos += gt_of[i].size();
  }
  if (npos_out) *npos_out = npos;
  if (npos == 0) return 0.0;

  // Images are already in id order, so (image, det) is the tie-break.
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.image != b.image) return a.image < b.image;
                     return a.det < b.det;
                   });

  std::vector<std::vector<bool>> taken(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) taken[i].assign(gt_of[i].size(), false);

  std::vector<double> precision;
  std::vector<double> recall;
  precision.reserve(cands.size());
  recall.reserve(cands.size());
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& c : cands) {
    const auto& box = pairs[c.image].first->detections[c.det].box;
    const auto& gt = *pairs[c.image].second;
    double best_iou = -1.0;
    std::size_t best = gt_of[c.image].size();
    for (std::size_t k = 0; k < gt_of[c.image].size(); ++k) {
      if (taken[c.image][k]) continue;
      const double v = iou(box, gt.detections[gt_of[c.image][k]].box);
      if (v >= threshold && v > best_iou) {
        best_iou = v;
        best = k;
      }
    }
    if (best < gt_of[c.image].size()) {
      taken[c.image][best] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(npos));
  }

  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  for (int j = 0; j < DetectionEvalConfig::kRecallPoints; ++j) {
    auto it = std::lower_bound(recall.begin(), recall.end(), recall_point(j));
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / DetectionEvalConfig::kRecallPoints;
}

// Kuhn's augmenting-path matching; predictions are visited in rank order.
class BipartiteMatcher {
 public:
  BipartiteMatcher(std::size_t left, std::size_t right)
      : adj_(left), match_right_(right, kNone) {}

  void add_edge(std::size_t l, std::size_t r) { adj_[l].push_back(r); }

  std::size_t solve() {
    std::size_t matched = 0;
    for (std::size_t l = 0; l < adj_.size(); ++l) {
      std::vector<bool> seen(match_right_.size(), false);
      if (augment(l, seen)) ++matched;
    }
    return matched;
  }

  bool right_matched(std::size_t r) const { return match_right_[r] != kNone; }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  bool augment(std::size_t l, std::vector<bool>& seen) {
    for (std::size_t r : adj_[l]) {
      if (seen[r]) continue;
      seen[r] = true;
      if (match_right_[r] == kNone || augment(match_right_[r], seen)) {
        match_right_[r] = l;
        return true;
      }
    }
    return false;
  }

  std::vector<std::vector<std::size_t>> adj_;
  std::vector<std::size_t> match_right_;
};

std::vector<std::size_t> ranked_triplets(const SceneGraph& pred, bool constrained) {
  std::vector<std::size_t> order(pred.triplets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pred.triplets[a].effective_score() > pred.triplets[b].effective_score();
  });
  if (!constrained) return order;
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::vector<std::size_t> out;
  for (std::size_t t : order) {
    if (used.emplace(pred.triplets[t].sub, pred.triplets[t].obj).second) out.push_back(t);
  }
  return out;
}

struct ImageRecall {
  std::array<std::size_t, 3> gt_count{};
  std::array<std::size_t, 3> matched{};
};

ImageRecall image_recall(const SceneGraph& pred, const SceneGraph& gt, int k,
                         const RelationEvalConfig& cfg) {
  ImageRecall out;
  for (const auto& t : gt.triplets) ++out.gt_count[index_of(t.pred)];
  out.matched = matched_gt_per_predicate(pred, gt, k, cfg);
  return out;
}

struct RecallTable {
  // Per K: overall recall and per-predicate recall.
  std::vector<double> overall;
  std::vector<std::array<std::optional<double>, 3>> per_predicate;
};

RecallTable recall_table(const std::vector<SceneGraph>& preds,
                         const std::vector<SceneGraph>& gts,
                         const RelationEvalConfig& cfg) {
  cfg.check();
  const auto pairs = align(preds, gts);
  RecallTable table;
  for (int k : cfg.k_values) {
    std::vector<double> per_image;
    std::array<std::vector<double>, 3> per_pred;
    for (const auto& [pred, gt] : pairs) {
      if (gt->triplets.empty()) continue;
      const auto r = image_recall(*pred, *gt, k, cfg);
      std::size_t total = 0;
      std::size_t hit = 0;
      for (std::size_t p = 0; p < 3; ++p) {
        total += r.gt_count[p];
        hit += r.matched[p];
        if (r.gt_count[p] > 0) {
          per_pred[p].push_back(static_cast<double>(r.matched[p]) /
                                static_cast<double>(r.gt_count[p]));
        }
      }
      per_image.push_back(static_cast<double>(hit) / static_cast<double>(total));
    }
    table.overall.push_back(mean(per_image));
    std::array<std::optional<double>, 3> pp;
    for (std::size_t p = 0; p < 3; ++p) {
      if (!per_pred[p].empty()) pp[p] = mean(per_pred[p]);
    }
    table.per_predicate.push_back(pp);
  }
  return table;
}

bool word_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; }

// Exhaustive branch-and-bound over max-cardinality alignments, maximising the
// number of diagonal adjacencies (chunks = matches - adjacencies).
class AlignmentSearch {
 public:
  AlignmentSearch(const std::vector<int>& cand, const std::vector<int>& ref,
                  int vocab, long budget)
      : cand_(cand), ref_(ref), budget_(budget), used_(ref.size(), false) {
    std::vector<std::size_t> cc(static_cast<std::size_t>(vocab), 0);
    std::vector<std::size_t> cr(static_cast<std::size_t>(vocab), 0);
    ref_pos_.resize(static_cast<std::size_t>(vocab));
    for (int t : cand_) ++cc[static_cast<std::size_t>(t)];
    for (std::size_t j = 0; j < ref_.size(); ++j) {
      ++cr[static_cast<std::size_t>(ref_[j])];
      ref_pos_[static_cast<std::size_t>(ref_[j])].push_back(j);
    }
    skip_left_.resize(static_cast<std::size_t>(vocab));
    for (std::size_t t = 0; t < cc.size(); ++t) {
      const std::size_t m = std::min(cc[t], cr[t]);
      matches_ += m;
      skip_left_[t] = cc[t] - m;
    }
    // Positions at or after i that could still contribute an adjacency.
    matchable_suffix_.assign(cand_.size() + 1, 0);
    for (std::size_t i = cand_.size(); i-- > 0;) {
      matchable_suffix_[i] = matchable_suffix_[i + 1] +
                             (cr[static_cast<std::size_t>(cand_[i])] > 0 ? 1 : 0);
    }
  }

  std::size_t matches() const { return matches_; }

  // Returns the maximum number of adjacencies.
  std::size_t run() {
    if (matches_ == 0) return 0;
    dfs(0, kNone, 0);
    return best_;
  }

  bool exhausted() const { return !out_of_budget_; }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  bool done() const {
    return (found_ && best_ + 1 == matches_) || out_of_budget_;
  }

  void dfs(std::size_t i, std::size_t prev_j, std::size_t adj) {
    if (done()) return;
    if (++nodes_ > budget_) {
      out_of_budget_ = true;
      return;
    }
    if (i == cand_.size()) {
      if (!found_ || adj > best_) {
        best_ = adj;
        found_ = true;
      }
      return;
    }
    if (found_ && adj + matchable_suffix_[i] <= best_) return;

    const auto t = static_cast<std::size_t>(cand_[i]);
    const auto& positions = ref_pos_[t];
    // Continuing the current chunk first finds good bounds early.
    if (prev_j != kNone && prev_j + 1 < ref_.size() && !used_[prev_j + 1] &&
        static_cast<std::size_t>(ref_[prev_j + 1]) == t) {
      used_[prev_j + 1] = true;
      dfs(i + 1, prev_j + 1, adj + 1);
      used_[prev_j + 1] = false;
      if (done()) return;
    }
    for (std::size_t j : positions) {
      if (used_[j] || (prev_j != kNone && j == prev_j + 1)) continue;
      used_[j] = true;
      dfs(i + 1, j, adj);
      used_[j] = false;
      if (done()) return;
    }
    if (skip_left_[t] > 0) {
      --skip_left_[t];
      dfs(i + 1, kNone, adj);
      ++skip_left_[t];
    }
  }

  const std::vector<int>& cand_;
  const std::vector<int>& ref_;
  long budget_;
  long nodes_ = 0;
  bool out_of_budget_ = false;
  std::vector<bool> used_;
  std::vector<std::vector<std::size_t>> ref_pos_;
  std::vector<std::size_t> skip_left_;
  std::vector<std::size_t> matchable_suffix_;
  std::size_t matches_ = 0;
  std::size_t best_ = 0;
  bool found_ = false;
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v * 100.0);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

std::vector<double> DetectionEvalConfig::default_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(static_cast<double>(50 + 5 * i) / 100.0);
  return out;
}

void DetectionEvalConfig::check() const {
  if (iou_thresholds.empty()) {
    throw Error(ErrorCode::kBadConfig, "iou_thresholds", "empty");
  }
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0) || (i > 0 && !(t > iou_thresholds[i - 1]))) {
      throw Error(ErrorCode::kBadConfig, "iou_thresholds",
                  "thresholds must be strictly increasing within (0,1]");
    }
  }
}

void RelationEvalConfig::check() const {
  if (k_values.empty()) throw Error(ErrorCode::kBadConfig, "k_values", "empty");
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    if (k_values[i] < 1 || (i > 0 && k_values[i] < k_values[i - 1])) {
      throw Error(ErrorCode::kBadConfig, "k_values",
                  "K values must be positive and sorted ascending");
    }
  }
  if (!(match_iou > 0.0 && match_iou <= 1.0)) {
    throw Error(ErrorCode::kBadConfig, "match_iou", "must lie in (0,1]");
  }
}

void TextMetricConfig::check() const {
  if (!(meteor_numerator_weight > 0 && meteor_precision_weight > 0 &&
        meteor_gamma > 0 && meteor_beta > 0 && rouge_beta > 0 &&
        meteor_search_budget > 0)) {
    throw Error(ErrorCode::kBadConfig, "text", "all parameters must be positive");
  }
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

std::optional<double> DetectionApResult::map_at(double threshold) const {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (thresholds[i] == threshold) return map_per_threshold[i];
  }
  return std::nullopt;
}

double average_precision(const std::vector<SceneGraph>& preds,
                         const std::vector<SceneGraph>& gts, EntityClass cls,
                         double iou_threshold) {
  return ap_for(align(preds, gts), cls, iou_threshold, nullptr);
}

DetectionApResult detection_ap(const std::vector<SceneGraph>& preds,
                               const std::vector<SceneGraph>& gts,
                               const DetectionEvalConfig& cfg) {
  cfg.check();
  const auto pairs = align(preds, gts);
  DetectionApResult res;
  res.thresholds = cfg.iou_thresholds;

  auto map_at = [&](double thr, std::array<std::optional<double>, 5>* per_class) {
    std::vector<double> aps;
    for (auto cls : kAllEntities) {
      std::size_t npos = 0;
      const double ap = ap_for(pairs, cls, thr, &npos);
      if (npos == 0) continue;
      aps.push_back(ap);
      if (per_class) (*per_class)[index_of(cls)] = ap;
    }
    return mean(aps);
  };

  for (auto cls : kAllEntities) {
    bool any = false;
    for (const auto& [_, gt] : pairs) {
      for (const auto& d : gt->detections) any = any || d.cls == cls;
    }
    if (any) {
      res.per_class_ap[index_of(cls)] = std::vector<double>();
    } else {
      res.no_gt_classes.push_back(cls);
    }
  }

  for (double thr : cfg.iou_thresholds) {
    std::array<std::optional<double>, 5> per_class;
    res.map_per_threshold.push_back(map_at(thr, &per_class));
    for (auto cls : kAllEntities) {
      if (per_class[index_of(cls)]) {
        res.per_class_ap[index_of(cls)]->push_back(*per_class[index_of(cls)]);
      }
    }
  }
  const auto at50 = res.map_at(0.5);
  res.ap50 = at50 ? *at50 : map_at(0.5, nullptr);
  res.ap_range = mean(res.map_per_threshold);
  return res;
}

// ---------------------------------------------------------------------------
// Relations
// ---------------------------------------------------------------------------

std::array<std::size_t, 3> matched_gt_per_predicate(const SceneGraph& pred,
                                                    const SceneGraph& gt, int k,
                                                    const RelationEvalConfig& cfg) {
  auto ranked = ranked_triplets(pred, cfg.constrained);
  if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(static_cast<std::size_t>(k));

  BipartiteMatcher matcher(ranked.size(), gt.triplets.size());
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& pt = pred.triplets[ranked[r]];
    const auto& ps = pred.detections[pt.sub];
    const auto& po = pred.detections[pt.obj];
    for (std::size_t g = 0; g < gt.triplets.size(); ++g) {
      const auto& gt_t = gt.triplets[g];
      const auto& gs = gt.detections[gt_t.sub];
      const auto& go = gt.detections[gt_t.obj];
      if (pt.pred != gt_t.pred || ps.cls != gs.cls || po.cls != go.cls) continue;
      if (iou(ps.box, gs.box) < cfg.match_iou || iou(po.box, go.box) < cfg.match_iou) {
        continue;
      }
      matcher.add_edge(r, g);
    }
  }
  matcher.solve();
  std::array<std::size_t, 3> out{};
  for (std::size_t g = 0; g < gt.triplets.size(); ++g) {
    if (matcher.right_matched(g)) ++out[index_of(gt.triplets[g].pred)];
  }
  return out;
}

std::vector<RecallAtK> relation_recall(const std::vector<SceneGraph>& preds,
                                       const std::vector<SceneGraph>& gts,
                                       const RelationEvalConfig& cfg) {
  const auto table = recall_table(preds, gts, cfg);
  std::vector<RecallAtK> out;
  for (std::size_t i = 0; i < cfg.k_values.size(); ++i) {
    out.push_back({cfg.k_values[i], table.overall[i]});
  }
  return out;
}

std::vector<MeanRecallAtK> mean_relation_recall(const std::vector<SceneGraph>& preds,
                                                const std::vector<SceneGraph>& gts,
                                                const RelationEvalConfig& cfg) {
  const auto table = recall_table(preds, gts, cfg);
  std::vector<MeanRecallAtK> out;
  for (std::size_t i = 0; i < cfg.k_values.size(); ++i) {
    MeanRecallAtK m;
    m.k = cfg.k_values[i];
    m.per_predicate = table.per_predicate[i];
    std::vector<double> present;
    for (const auto& v : m.per_predicate) {
      if (v) present.push_back(*v);
    }
    m.value = mean(present);
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (word_byte(c)) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeL rouge_l(std::string_view candidate, std::string_view reference,
               const TextMetricConfig& cfg) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  RougeL out;
  if (c.empty() || r.empty()) return out;
  const auto lcs = static_cast<double>(lcs_length(c, r));
  out.precision = lcs / static_cast<double>(c.size());
  out.recall = lcs / static_cast<double>(r.size());
  if (out.precision + out.recall > 0.0) {
    const double b2 = cfg.rouge_beta * cfg.rouge_beta;
    out.f = (1.0 + b2) * out.precision * out.recall / (out.recall + b2 * out.precision);
  }
  return out;
}

MeteorDetail meteor_detail(const std::vector<std::string>& candidate,
                           const std::vector<std::string>& reference,
                           const TextMetricConfig& cfg) {
  std::unordered_map<std::string, int> ids;
  auto to_ids = [&ids](const std::vector<std::string>& toks) {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) {
      auto [it, _] = ids.emplace(t, static_cast<int>(ids.size()));
      out.push_back(it->second);
    }
    return out;
  };
  const auto c = to_ids(candidate);
  const auto r = to_ids(reference);

  MeteorDetail out;
  AlignmentSearch search(c, r, static_cast<int>(ids.size()), cfg.meteor_search_budget);
  out.matches = search.matches();
  if (out.matches == 0) return out;
  const std::size_t adjacencies = search.run();
  out.search_exhausted = search.exhausted();
  out.chunks = out.matches - adjacencies;

  const auto m = static_cast<double>(out.matches);
  out.precision = m / static_cast<double>(c.size());
  out.recall = m / static_cast<double>(r.size());
  out.f_mean = cfg.meteor_numerator_weight * out.precision * out.recall /
               (out.recall + cfg.meteor_precision_weight * out.precision);
  out.penalty = cfg.meteor_gamma *
                std::pow(static_cast<double>(out.chunks) / m, cfg.meteor_beta);
  out.score = out.f_mean * (1.0 - out.penalty);
  return out;
}

double meteor(std::string_view candidate, std::string_view reference,
              const TextMetricConfig& cfg) {
  return meteor_detail(tokenize(candidate), tokenize(reference), cfg).score;
}

TextReport score_texts(const std::vector<TextPair>& pairs, const TextMetricConfig& cfg) {
  cfg.check();
  TextReport out;
  std::vector<double> m;
  std::vector<double> rl;
  for (const auto& p : pairs) {
    TextScore s;
    s.id = p.id;
    s.meteor = meteor(p.candidate, p.reference, cfg);
    s.rouge = rouge_l(p.candidate, p.reference, cfg);
    m.push_back(s.meteor);
    rl.push_back(s.rouge.f);
    out.samples.push_back(std::move(s));
  }
  out.meteor_mean = mean(m);
  out.rouge_l_mean = mean(rl);
  return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

EvalReport score_report(const std::vector<SceneGraph>& preds,
                        const std::vector<SceneGraph>& gts,
                        const std::vector<TextPair>& text_pairs,
                        const std::optional<std::vector<bool>>& human_labels,
                        const EvalConfigs& configs) {
  EvalReport rep;
  rep.detection = detection_ap(preds, gts, configs.detection);
  rep.r_at_k = relation_recall(preds, gts, configs.relation);
  rep.mr_at_k = mean_relation_recall(preds, gts, configs.relation);
  if (!text_pairs.empty()) rep.text = score_texts(text_pairs, configs.text);
  if (human_labels) {
    if (human_labels->empty()) throw Error(ErrorCode::kParse, "labels", "no labels");
    const auto pass = std::count(human_labels->begin(), human_labels->end(), true);
    rep.human_acc = static_cast<double>(pass) / static_cast<double>(human_labels->size());
  }
  return rep;
}

std::vector<bool> parse_labels(std::string_view text) {
  std::vector<bool> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string word;
    for (char ch : line) {
      if (!std::isspace(static_cast<unsigned char>(ch))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      }
    }
    if (word.empty()) continue;
    if (word == "pass" || word == "1" || word == "true") {
      out.push_back(true);
    } else if (word == "fail" || word == "0" || word == "false") {
      out.push_back(false);
    } else {
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno),
                  "expected pass/fail, got '" + word + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::kParse, "labels", "no labels found");
  return out;
}

std::vector<TextPair> parse_text_pairs(std::string_view text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kSyntax, "", e.what());
  }
  if (!root.is_array()) throw Error(ErrorCode::kSchema, "$", "expected an array");
  std::vector<TextPair> out;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& item = root[i];
    const std::string path = "[" + std::to_string(i) + "]";
    if (!item.is_object() || !item.contains("candidate") || !item.contains("reference") ||
        !item["candidate"].is_string() || !item["reference"].is_string()) {
      throw Error(ErrorCode::kSchema, path, "expected {id, candidate, reference}");
    }
    TextPair p;
    p.id = item.value("id", std::to_string(i));
    p.candidate = item["candidate"].get<std::string>();
    p.reference = item["reference"].get<std::string>();
    out.push_back(std::move(p));
  }
  return out;
}

std::string report_to_json(const EvalReport& report) {
  ordered_json root = ordered_json::object();
  if (report.detection) {
    const auto& d = *report.detection;
    ordered_json det;
    det["thresholds"] = d.thresholds;
    ordered_json per_class = ordered_json::object();
    for (auto cls : kAllEntities) {
      const auto& v = d.per_class_ap[index_of(cls)];
      per_class[std::string(short_key(cls))] = v ? ordered_json(*v) : ordered_json(nullptr);
    }
    det["per_class_ap"] = std::move(per_class);
    det["map"] = d.map_per_threshold;
    det["ap50"] = d.ap50;
    det["ap_range"] = d.ap_range;
    ordered_json no_gt = ordered_json::array();
    for (auto cls : d.no_gt_classes) no_gt.push_back(short_key(cls));
    det["no_gt"] = std::move(no_gt);
    root["detection"] = std::move(det);
  }
  if (!report.r_at_k.empty() || !report.mr_at_k.empty()) {
    ordered_json rel;
    ordered_json r = ordered_json::object();
    for (const auto& v : report.r_at_k) r[std::to_string(v.k)] = v.value;
    ordered_json mr = ordered_json::object();
    ordered_json per = ordered_json::object();
    for (const auto& v : report.mr_at_k) {
      mr[std::to_string(v.k)] = v.value;
      ordered_json pp = ordered_json::object();
      for (auto p : kAllPredicates) {
        const auto& x = v.per_predicate[index_of(p)];
        pp[std::string(display_string(p))] = x ? ordered_json(*x) : ordered_json(nullptr);
      }
      per[std::to_string(v.k)] = std::move(pp);
    }
    rel["r_at_k"] = std::move(r);
    rel["mr_at_k"] = std::move(mr);
    rel["per_predicate_recall"] = std::move(per);
    root["relations"] = std::move(rel);
  }
  if (report.text) {
    ordered_json text;
    ordered_json samples = ordered_json::array();
    for (const auto& s : report.text->samples) {
      ordered_json j;
      j["id"] = s.id;
      j["meteor"] = s.meteor;
      j["rouge_l"] = {{"precision", s.rouge.precision},
                      {"recall", s.rouge.recall},
                      {"f", s.rouge.f}};
      samples.push_back(std::move(j));
    }
    text["samples"] = std::move(samples);
    text["meteor"] = report.text->meteor_mean;
    text["rouge_l"] = report.text->rouge_l_mean;
    root["text"] = std::move(text);
  }
  if (report.directional_acc) root["directional_acc"] = *report.directional_acc;
  if (report.human_acc) root["human_acc"] = *report.human_acc;
  return root.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream out;
  if (report.detection || !report.r_at_k.empty()) {
    out << "Object Detection            | Relation Detection\n";
    out << "AP50:95   AP50              |";
    for (std::size_t i = 0; i < report.r_at_k.size(); ++i) {
      out << " R@" << report.r_at_k[i].k << "   mR@" << report.mr_at_k[i].k << " ";
    }
    out << "\n";
    if (report.detection) {
      out << fmt_double(report.detection->ap_range) << "      "
          << fmt_double(report.detection->ap50) << "             |";
    } else {
      out << "-         -                 |";
    }
    for (std::size_t i = 0; i < report.r_at_k.size(); ++i) {
      out << " " << fmt_double(report.r_at_k[i].value) << "  "
          << fmt_double(report.mr_at_k[i].value) << " ";
    }
    out << "\n";
  }
  if (report.text || report.human_acc || report.directional_acc) {
    out << "Acc      DirAcc   METEOR   ROUGE_L\n";
    auto cell = [](const std::optional<double>& v) {
      std::string s = v ? fmt_double(*v) : std::string("-");
      s.resize(9, ' ');
      return s;
    };
    out << cell(report.human_acc) << cell(report.directional_acc)
        << cell(report.text ? std::optional<double>(report.text->meteor_mean) : std::nullopt)
        << cell(report.text ? std::optional<double>(report.text->rouge_l_mean) : std::nullopt)
        << "\n";
  }
  return out.str();
}

}  // namespace ussg::metrics
