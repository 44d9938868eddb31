// ussg: command-line front end for datasets, evaluation, simulation and the
// scan service.

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "ussg/anatomy.hpp"
#include "ussg/dataset.hpp"
#include "ussg/error.hpp"
#include "ussg/grounding.hpp"
#include "ussg/llm.hpp"
#include "ussg/metrics.hpp"
#include "ussg/service.hpp"

using namespace ussg;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, out_path, "cannot open for writing");
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

service::ServiceConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return service::read_service_config(path);
}

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kUsage, "--k", "expected a comma-separated list of integers");
    }
  }
  return out;
}

ProbePose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Poses on the step lattice keep guidance step counts exact.
  ProbePose p;
  p.z = std::round(unit(rng) * 20.0) / 20.0;
  p.u = std::round((unit(rng) * 0.6 - 0.3) * 20.0) / 20.0;
  p.side = unit(rng) < 0.5 ? LateralSide::kLeft : LateralSide::kRight;
  return p;
}

service::HttpFrontEnd* g_front = nullptr;

void on_signal(int) {
  if (g_front) g_front->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-graph ultrasound toolkit"};
  app.require_subcommand(1);

  // dataset ------------------------------------------------------------------
  auto* ds = app.add_subcommand("dataset", "Validate or augment annotation files");
  ds->require_subcommand(1);
  std::string ds_in, ds_out;
  bool lenient = false;
  auto* ds_validate = ds->add_subcommand("validate", "Parse and check a dataset file");
  ds_validate->add_option("file", ds_in, "Dataset JSON")->required();
  ds_validate->add_flag("--lenient", lenient, "Unknown fields are warnings");
  auto* ds_flip = ds->add_subcommand("flip", "Append horizontally flipped copies");
  ds_flip->add_option("file", ds_in, "Dataset JSON")->required();
  ds_flip->add_option("-o,--out", ds_out, "Output path (default stdout)");

  // eval ---------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Score predictions");
  ev->require_subcommand(1);
  std::string pred_path, gt_path, pairs_path, labels_path, transcript_path, refs_path, ks = "5,20";
  bool as_json = false, unconstrained = false;
  auto* ev_detect = ev->add_subcommand("detect", "Detection AP");
  auto* ev_rel = ev->add_subcommand("relations", "R@K and mR@K");
  auto* ev_text = ev->add_subcommand("text", "METEOR and ROUGE-L");
  auto* ev_report = ev->add_subcommand("report", "Full evaluation report");
  auto* ev_guide = ev->add_subcommand("guidance", "Directional accuracy from a transcript");
  for (auto* sc : {ev_detect, ev_rel, ev_report}) {
    sc->add_option("--pred", pred_path, "Predictions dataset")->required();
    sc->add_option("--gt", gt_path, "Ground-truth dataset")->required();
  }
  for (auto* sc : {ev_rel, ev_report}) {
    sc->add_option("--k", ks, "Comma-separated K values");
    sc->add_flag("--unconstrained", unconstrained, "Rank every predicate of a pair");
  }
  ev_text->add_option("--pairs", pairs_path, "JSON array of {id, candidate, reference}")
      ->required();
  ev_report->add_option("--texts", pairs_path, "Text pairs for METEOR/ROUGE-L");
  ev_report->add_option("--labels", labels_path, "Human pass/fail labels");
  ev_report->add_option("--transcript", transcript_path, "Guidance transcript");
  ev_guide->add_option("--transcript", transcript_path, "Transcript JSONL")->required();
  ev_guide->add_option("--references", refs_path, "JSON object request_id -> reference");
  for (auto* sc : {ev_detect, ev_rel, ev_text, ev_report, ev_guide}) {
    sc->add_flag("--json", as_json, "Machine-readable output");
  }

  // run ----------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Send grounded prompts through a backend");
  std::string task_name = "summarize", dataset_path, queries_path, config_path, out_path;
  std::string transcript_out;
  int sim_frames = 0;
  std::uint64_t seed = 0;
  run->add_option("task", task_name, "summarize | guide")->required();
  run->add_option("--dataset", dataset_path, "Scene graphs to ground on");
  run->add_option("--queries", queries_path, "JSON array of {image_id, query, prev_image_id?}");
  run->add_option("--sim", sim_frames, "Simulate N random frames instead of a dataset");
  run->add_option("--seed", seed, "Seed for --sim poses");
  run->add_option("--config", config_path, "Service config JSON");
  run->add_option("--transcript", transcript_out, "Transcript JSONL (overrides config)");
  run->add_option("-o,--out", out_path, "Audit JSONL output (default stdout)");

  // sim ----------------------------------------------------------------------
  auto* sim = app.add_subcommand("sim", "Anatomy simulator");
  sim->require_subcommand(1);
  auto* sim_sample = sim->add_subcommand("sample", "Cross-sections on a pose grid");
  int nz = 11, nu = 5;
  std::string sides = "both";
  bool noisy = false;
  sim_sample->add_option("--nz", nz, "Grid points along z");
  sim_sample->add_option("--nu", nu, "Grid points along u in [-0.3, 0.3]");
  sim_sample->add_option("--side", sides, "left | right | both");
  sim_sample->add_flag("--noisy", noisy, "Apply the config's noise model (predictions)");
  sim_sample->add_option("--config", config_path, "Service config JSON");
  sim_sample->add_option("--seed", seed, "Noise seed (overrides config)");
  sim_sample->add_option("-o,--out", out_path, "Output path (default stdout)");
  auto* sim_serve = sim->add_subcommand("serve", "Run the scan service over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  sim_serve->add_option("--config", config_path, "Service config JSON");
  sim_serve->add_option("--host", host, "Bind address");
  sim_serve->add_option("--port", port, "Port");
  sim_serve->add_option("--seed", seed, "Noise seed (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (ds->parsed()) {
      ParseOptions opts;
      opts.strict = !lenient;
      std::vector<std::string> warnings;
      const DatasetFile d = read_dataset_file(ds_in, opts, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      if (ds_validate->parsed()) {
        std::cout << "OK " << d.images.size() << " images\n";
      } else {
        const DatasetFile flipped = augment_flip(d);
        emit(write_dataset(flipped), ds_out);
        std::cerr << d.images.size() << " -> " << flipped.images.size() << " images\n";
      }
      return 0;
    }

    if (ev->parsed()) {
      metrics::EvalConfigs cfgs;
      cfgs.relation.k_values = parse_ks(ks);
      cfgs.relation.constrained = !unconstrained;
      std::vector<SceneGraph> preds, gts;
      if (!pred_path.empty()) preds = read_dataset_file(pred_path).scene_graphs();
      if (!gt_path.empty()) gts = read_dataset_file(gt_path).scene_graphs();

      if (ev_guide->parsed()) {
        const auto records = llm::TranscriptLog::read(transcript_path);
        std::map<std::string, std::string> refs;
        if (!refs_path.empty()) {
          try {
            refs = json::parse(slurp(refs_path)).get<std::map<std::string, std::string>>();
          } catch (const json::exception& e) {
            throw Error(ErrorCode::kParse, refs_path, e.what());
          }
        }
        const auto g = service::evaluate_guidance(records, refs_path.empty() ? nullptr : &refs);
        if (as_json) {
          nlohmann::ordered_json j;
          j["records"] = g.records;
          j["scored"] = g.scored;
          j["correct"] = g.correct;
          j["directional_acc"] = g.accuracy;
          if (g.text) {
            j["meteor"] = g.text->meteor_mean;
            j["rouge_l"] = g.text->rouge_l_mean;
          }
          std::cout << j.dump(2) << '\n';
        } else {
          std::printf("guidance records %zu, scored %zu, correct %zu, directional_acc %.4f\n",
                      g.records, g.scored, g.correct, g.accuracy);
          if (g.text) {
            std::printf("METEOR %.4f  ROUGE-L %.4f\n", g.text->meteor_mean, g.text->rouge_l_mean);
          }
        }
        return 0;
      }

      metrics::EvalReport rep;
      if (ev_detect->parsed()) {
        rep.detection = metrics::detection_ap(preds, gts, cfgs.detection);
      } else if (ev_rel->parsed()) {
        rep.r_at_k = metrics::relation_recall(preds, gts, cfgs.relation);
        rep.mr_at_k = metrics::mean_relation_recall(preds, gts, cfgs.relation);
      } else if (ev_text->parsed()) {
        rep.text = metrics::score_texts(metrics::parse_text_pairs(slurp(pairs_path)), cfgs.text);
      } else {
        std::vector<metrics::TextPair> pairs;
        if (!pairs_path.empty()) pairs = metrics::parse_text_pairs(slurp(pairs_path));
        std::optional<std::vector<bool>> labels;
        if (!labels_path.empty()) labels = metrics::parse_labels(slurp(labels_path));
        rep = metrics::score_report(preds, gts, pairs, labels, cfgs);
        if (!transcript_path.empty()) {
          rep.directional_acc =
              service::evaluate_guidance(llm::TranscriptLog::read(transcript_path)).accuracy;
        }
      }
      std::cout << (as_json ? metrics::report_to_json(rep) : metrics::report_to_table(rep));
      return 0;
    }

    if (run->parsed()) {
      const auto task = grounding::task_from_name(task_name);
      if (!task) throw Error(ErrorCode::kUsage, "task", "expected summarize or guide");
      service::ServiceConfig cfg = load_config(config_path);
      if (!transcript_out.empty()) cfg.transcript_path = transcript_out;
      std::ostringstream audits;

      if (sim_frames > 0) {
        cfg.allow_single_frame_guidance = false;
        service::ScanService svc(cfg);
        std::mt19937_64 rng(seed);
        std::size_t matched = 0, scored = 0;
        for (int i = 0; i < sim_frames; ++i) {
          const ProbePose pose = random_pose(rng);
          const std::string id = svc.create_session({pose, ""});
          // A lateral nudge gives guidance a movement line to work with.
          service::MoveCommand nudge;
          nudge.direction =
              rng() % 2 ? anatomy::GuidanceDirection::kMedial : anatomy::GuidanceDirection::kLateral;
          svc.move(id, nudge);
          const auto frame = svc.current_frame(id);
          const auto missing = missing_entities(frame.graph);
          EntityClass target = kAllEntities[rng() % kAllEntities.size()];
          if (*task == grounding::TaskKind::kGuidance && !missing.empty()) {
            target = missing[rng() % missing.size()];
          }
          const std::string q = *task == grounding::TaskKind::kGuidance
                                    ? "Where is the " + std::string(display_name(target)) + "?"
                                    : "Tell me about the " + std::string(display_name(target)) +
                                          ".";
          const auto audit = svc.query(id, {*task, q, ""});
          if (audit.direction_match) {
            ++scored;
            if (*audit.direction_match) ++matched;
          }
          audits << service::audit_to_json(audit) << '\n';
          svc.close_session(id);
        }
        emit(audits.str(), out_path);
        if (*task == grounding::TaskKind::kGuidance) {
          std::fprintf(stderr, "directional_acc %.4f (%zu/%zu)\n",
                       scored ? static_cast<double>(matched) / static_cast<double>(scored) : 0.0,
                       matched, scored);
        }
        return 0;
      }

      if (dataset_path.empty() || queries_path.empty()) {
        throw Error(ErrorCode::kUsage, "run", "give --dataset and --queries, or --sim N");
      }
      const DatasetFile d = read_dataset_file(dataset_path);
      json queries;
      try {
        queries = json::parse(slurp(queries_path));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kParse, queries_path, e.what());
      }
      if (!queries.is_array()) throw Error(ErrorCode::kParse, queries_path, "expected an array");
      std::shared_ptr<llm::TranscriptLog> log;
      if (!cfg.transcript_path.empty()) log = std::make_shared<llm::TranscriptLog>(cfg.transcript_path);
      llm::Gateway gw(log);
      if (cfg.backends.empty()) cfg.backends[cfg.default_backend] = llm::BackendConfig{};
      for (const auto& [name, b] : cfg.backends) gw.add_backend(name, b);

      std::size_t n = 0;
      for (const auto& q : queries) {
        const std::string image_id = q.at("image_id").get<std::string>();
        const std::string text = q.at("query").get<std::string>();
        const ImageRecord* rec = d.find(image_id);
        if (!rec) throw Error(ErrorCode::kUnknownImage, image_id, "not in the dataset");
        const SceneGraph sg = rec->to_scene_graph();
        const LateralSide side = rec->side != LateralSide::kUnknown
                                     ? rec->side
                                     : grounding::infer_lateral_side(sg, cfg.side_convention);
        std::optional<LateralMovement> movement;
        if (*task == grounding::TaskKind::kGuidance) {
          movement = LateralMovement{};
          if (q.contains("prev_image_id")) {
            const std::string prev_id = q["prev_image_id"].get<std::string>();
            const ImageRecord* prev = d.find(prev_id);
            if (!prev) throw Error(ErrorCode::kUnknownImage, prev_id, "not in the dataset");
            movement = grounding::infer_lateral_movement(prev->to_scene_graph(), sg, cfg.movement);
          }
        }
        const auto prompt = grounding::render_grounding(sg, side, movement, *task);
        llm::ChatRequest req;
        req.request_id = "run-" + std::to_string(++n);
        req.backend = cfg.default_backend;
        req.system = grounding::render_task_instruction(*task, text);
        req.user = grounding::render_user_message(prompt, text);
        req.meta["task"] = std::string(grounding::task_name(*task));
        req.meta["image_id"] = image_id;
        req.meta["side"] = std::string(side_name(side));
        const auto resp = gw.send(req);
        nlohmann::ordered_json j;
        j["request_id"] = req.request_id;
        j["image_id"] = image_id;
        j["query"] = text;
        j["user"] = req.user;
        j["response"] = resp.text;
        audits << j.dump() << '\n';
      }
      emit(audits.str(), out_path);
      return 0;
    }

    if (sim_sample->parsed()) {
      service::ServiceConfig cfg = load_config(config_path);
      if (sim_sample->count("--seed")) cfg.noise.seed = seed;
      if (nz < 1 || nu < 1) throw Error(ErrorCode::kUsage, "grid", "--nz and --nu must be >= 1");
      std::vector<LateralSide> side_list;
      if (sides == "left" || sides == "both") side_list.push_back(LateralSide::kLeft);
      if (sides == "right" || sides == "both") side_list.push_back(LateralSide::kRight);
      if (side_list.empty()) throw Error(ErrorCode::kUsage, "--side", "left, right or both");
      anatomy::NoiseConfig noise = noisy ? cfg.noise : anatomy::NoiseConfig{};
      anatomy::SimulatorPredictor predictor(cfg.model, noise);
      DatasetFile out;
      for (auto side : side_list) {
        for (int i = 0; i < nz; ++i) {
          for (int k = 0; k < nu; ++k) {
            ProbePose pose;
            pose.z = nz == 1 ? 0.5 : static_cast<double>(i) / (nz - 1);
            pose.u = nu == 1 ? 0.0 : -0.3 + 0.6 * static_cast<double>(k) / (nu - 1);
            pose.side = side;
            char id[64];
            std::snprintf(id, sizeof id, "sim_%s_%03d_%03d", std::string(side_name(side)).c_str(),
                          i, k);
            out.images.push_back(
                ImageRecord::from_scene_graph(predictor.predict({id, pose}), side));
          }
        }
      }
      emit(write_dataset(out), out_path);
      return 0;
    }

    if (sim_serve->parsed()) {
      service::ServiceConfig cfg = load_config(config_path);
      if (sim_serve->count("--seed")) cfg.noise.seed = seed;
      service::ScanService svc(cfg);
      service::HttpFrontEnd front(svc);
      g_front = &front;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::fprintf(stderr, "listening on %s:%d\n", host.c_str(), port);
      if (!front.listen(host, port)) {
        throw Error(ErrorCode::kIo, host + ":" + std::to_string(port), "cannot bind");
      }
      g_front = nullptr;
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kUsage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
