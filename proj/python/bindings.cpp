// Thin Python surface over the C++ core. Structured results cross the
// boundary as JSON text and are decoded in ussg/__init__.py.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "ussg/anatomy.hpp"
#include "ussg/dataset.hpp"
#include "ussg/error.hpp"
#include "ussg/grounding.hpp"
#include "ussg/metrics.hpp"
#include "ussg/service.hpp"

namespace py = pybind11;
using namespace ussg;
using nlohmann::ordered_json;

namespace {

LateralSide side_arg(const std::string& name) {
  auto s = side_from_name(name);
  if (!s) throw Error(ErrorCode::kUsage, "side", "expected left, right or unknown");
  return *s;
}

EntityClass entity_arg(const std::string& key) {
  auto e = entity_from_key(key);
  if (!e) throw Error(ErrorCode::kUsage, "target", "unknown entity '" + key + "'");
  return *e;
}

std::string graph_json(const SceneGraph& g) {
  return write_dataset(DatasetFile{kDatasetVersion, {ImageRecord::from_scene_graph(g)}});
}

class Scanner {
 public:
  explicit Scanner(const std::string& config_json)
      : svc_(config_json.empty() ? service::ServiceConfig{}
                                 : service::parse_service_config(config_json)) {}

  std::string create(double z, double u, const std::string& side) {
    return svc_.create_session({{z, u, side_arg(side)}, ""});
  }
  std::string move(const std::string& id, double dz, double du, bool toggle,
                   const std::string& direction, int steps) {
    service::MoveCommand m;
    m.dz = dz;
    m.du = du;
    m.toggle_side = toggle;
    if (!direction.empty()) {
      m.direction = anatomy::direction_from_name(direction);
      if (!m.direction) throw Error(ErrorCode::kUsage, "direction", "unknown direction");
      m.steps = steps;
    }
    return service::frame_to_json(svc_.move(id, m));
  }
  std::string frame(const std::string& id) { return service::frame_to_json(svc_.current_frame(id)); }
  std::string query(const std::string& id, const std::string& task, const std::string& q,
                    bool allow_unknown_movement) {
    service::QueryRequest r;
    auto kind = grounding::task_from_name(task);
    if (!kind) throw Error(ErrorCode::kUsage, "task", "expected summarize or guide");
    r.task = *kind;
    r.query = q;
    r.allow_unknown_movement = allow_unknown_movement;
    return service::audit_to_json(svc_.query(id, r));
  }
  bool close(const std::string& id) { return svc_.close_session(id); }

 private:
  service::ScanService svc_;
};

}  // namespace

PYBIND11_MODULE(_ussg, m) {
  // Raised as UssgError(code, path, detail).
  static py::handle ussg_error =
      py::exception<Error>(m, "UssgError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const auto args = py::make_tuple(std::string(error_code_name(e.code())), e.path(),
                                        e.detail());
      PyErr_SetObject(ussg_error.ptr(), args.ptr());
    }
  });

  m.def("canonical_dataset", [](const std::string& text, bool strict) {
    return write_dataset(parse_dataset(text, {strict}));
  }, py::arg("text"), py::arg("strict") = true);
  m.def("augment_flip", [](const std::string& text) {
    return write_dataset(augment_flip(parse_dataset(text)));
  });

  m.def("iou", [](std::array<double, 4> a, std::array<double, 4> b) {
    return iou({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]});
  });
  m.def("tokenize", [](const std::string& s) { return metrics::tokenize(s); });
  m.def("lcs_length", &metrics::lcs_length);
  m.def("rouge_l", [](const std::string& c, const std::string& r) {
    const auto v = metrics::rouge_l(c, r);
    return std::make_tuple(v.precision, v.recall, v.f);
  });
  m.def("meteor", [](const std::string& c, const std::string& r) { return metrics::meteor(c, r); });
  m.def("evaluate", [](const std::string& pred_text, const std::string& gt_text) {
    const auto preds = parse_dataset(pred_text).scene_graphs();
    const auto gts = parse_dataset(gt_text).scene_graphs();
    return metrics::report_to_json(metrics::score_report(preds, gts, {}, std::nullopt));
  });

  m.def("cross_section", [](double z, double u, const std::string& side) {
    return graph_json(anatomy::cross_section(anatomy::NeckModel::default_model(),
                                             {z, u, side_arg(side)}, "frame"));
  });
  m.def("oracle_guidance", [](double z, double u, const std::string& side,
                              const std::string& target) {
    const auto g = anatomy::oracle_guidance(anatomy::NeckModel::default_model(),
                                            {z, u, side_arg(side)}, entity_arg(target));
    ordered_json j;
    j["already_visible"] = g.already_visible;
    j["direction"] = std::string(anatomy::direction_name(g.direction));
    j["steps"] = g.steps;
    j["then_direction"] =
        g.then_direction ? ordered_json(std::string(anatomy::direction_name(*g.then_direction)))
                         : ordered_json(nullptr);
    j["then_steps"] = g.then_steps;
    return j.dump();
  });

  py::class_<Scanner>(m, "_Scanner")
      .def(py::init<const std::string&>(), py::arg("config_json") = "")
      .def("create", &Scanner::create)
      .def("move", &Scanner::move)
      .def("frame", &Scanner::frame)
      .def("query", &Scanner::query)
      .def("close", &Scanner::close);
}
