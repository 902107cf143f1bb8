#include "rotot/model_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <vector>

#include "rotot/errors.hpp"

namespace rotot {
namespace {

using nlohmann::json;

constexpr int kVersion = 1;

json tensor_json(const Tensor& t) {
  json j;
  j["shape"] = t.shape();
  std::vector<double> values(t.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < t.size(); ++i) {
    // JSON has no NaN literal, so missing cells store 0 plus their index
    values[i] = t.observed(i) ? t[i] : 0.0;
    if (!t.observed(i)) missing.push_back(i);
  }
  j["values"] = values;
  if (!missing.empty()) j["missing"] = missing;
  return j;
}

Tensor tensor_from(const json& j) {
  Shape shape = j.at("shape").get<Shape>();
  std::vector<double> values = j.at("values").get<std::vector<double>>();
  if (values.size() != shape_size(shape))
    throw FileFormatError("model: tensor value count does not match shape");
  Tensor t = Tensor::from_data(shape, std::move(values));
  if (j.contains("missing"))
    for (std::size_t i : j.at("missing").get<std::vector<std::size_t>>())
      t.set_missing(i);
  return t;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(m.data(), m.data() + m.size());
  j["data"] = data;
  return j;
}

Eigen::MatrixXd matrix_from(const json& j) {
  Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 ||
      data.size() != static_cast<std::size_t>(rows * cols))
    throw FileFormatError("model: matrix data does not match its dimensions");
  Eigen::MatrixXd m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

json rho_json(const Rho& r) {
  json j;
  switch (r.kind) {
    case Rho::Kind::Tanh:
      j["kind"] = "tanh";
      j["b"] = r.tanh_params.b;
      j["c"] = r.tanh_params.c;
      j["q2"] = r.tanh_params.q2;
      break;
    case Rho::Kind::Quadratic:
      j["kind"] = "quadratic";
      break;
    case Rho::Kind::NearL1:
      j["kind"] = "near-l1";
      j["tau"] = r.tau;
      break;
  }
  return j;
}

Rho rho_from(const json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "tanh")
    return Rho::tanh_loss(TanhParams(j.at("b").get<double>(),
                                     j.at("c").get<double>(),
                                     j.at("q2").get<double>()));
  if (kind == "quadratic") return Rho::quadratic();
  if (kind == "near-l1") return Rho::near_l1(j.at("tau").get<double>());
  throw FileFormatError("model: unknown loss kind '" + kind + "'");
}

json rompca_json(const RompcaModel& m) {
  json j;
  j["center"] = tensor_json(m.center);
  json proj = json::array();
  for (const auto& v : m.proj) proj.push_back(matrix_json(v));
  j["proj"] = proj;
  j["cell_scales"] = tensor_json(m.cell_scales);
  j["case_scale"] = m.case_scale;
  j["core_cov"] = matrix_json(m.core_cov);
  j["c_u"] = m.c_u;
  j["objective_trace"] = m.objective_trace;
  j["converged"] = m.converged;
  j["sweeps"] = m.sweeps;
  j["cfg"] = {{"max_sweeps", m.cfg.max_sweeps},
              {"tol", m.cfg.tol},
              {"core_max_iter", m.cfg.core_max_iter},
              {"core_tol", m.cfg.core_tol},
              {"pinv_rel_tol", m.cfg.pinv_rel_tol}};
  return j;
}

RompcaModel rompca_from(const json& j) {
  RompcaModel m;
  m.center = tensor_from(j.at("center"));
  for (const json& v : j.at("proj")) m.proj.push_back(matrix_from(v));
  m.cell_scales = tensor_from(j.at("cell_scales"));
  m.case_scale = j.at("case_scale").get<double>();
  m.core_cov = matrix_from(j.at("core_cov"));
  m.c_u = j.at("c_u").get<double>();
  m.objective_trace = j.at("objective_trace").get<std::vector<double>>();
  m.converged = j.at("converged").get<bool>();
  m.sweeps = j.at("sweeps").get<int>();
  const json& cfg = j.at("cfg");
  m.cfg.max_sweeps = cfg.at("max_sweeps").get<int>();
  m.cfg.tol = cfg.at("tol").get<double>();
  m.cfg.core_max_iter = cfg.at("core_max_iter").get<int>();
  m.cfg.core_tol = cfg.at("core_tol").get<double>();
  m.cfg.pinv_rel_tol = cfg.at("pinv_rel_tol").get<double>();
  return m;
}

}  // namespace

std::string model_to_json(const RototModel& m, const ModelMeta& meta) {
  json j;
  j["format"] = "rotot-model";
  j["version"] = kVersion;

  json cp;
  cp["b0"] = tensor_json(m.cp.b0);
  json u = json::array(), v = json::array();
  for (const auto& f : m.cp.u) u.push_back(matrix_json(f));
  for (const auto& f : m.cp.v) v.push_back(matrix_json(f));
  cp["u"] = u;
  cp["v"] = v;

  json model;
  model["cp"] = cp;
  model["lambda"] = m.lambda;
  model["rank"] = m.rank_r;
  model["cell_scales"] = tensor_json(m.cell_scales);
  model["case_scale"] = m.case_scale;
  model["rho1"] = rho_json(m.rho1);
  model["rho2"] = rho_json(m.rho2);
  model["rompca"] = rompca_json(m.rompca);
  j["model"] = model;

  j["meta"] = {{"seed", meta.seed},
               {"iterations", m.iterations},
               {"converged", m.converged},
               {"objective_trace", m.objective_trace},
               {"init_candidate", m.init_candidate},
               {"frozen_intercept_cells", m.frozen_intercept_cells}};
  return j.dump(2) + "\n";
}

RototModel model_from_json(const std::string& text, ModelMeta* meta) {
  try {
    json j = json::parse(text);
    if (!j.is_object() || j.value("format", "") != "rotot-model")
      throw FileFormatError("model: not a model file");
    if (j.at("version").get<int>() != kVersion)
      throw FileFormatError("model: unsupported version");

    const json& model = j.at("model");
    RototModel m;
    const json& cp = model.at("cp");
    m.cp.b0 = tensor_from(cp.at("b0"));
    for (const json& f : cp.at("u")) m.cp.u.push_back(matrix_from(f));
    for (const json& f : cp.at("v")) m.cp.v.push_back(matrix_from(f));
    m.lambda = model.at("lambda").get<double>();
    m.rank_r = model.at("rank").get<int>();
    m.cell_scales = tensor_from(model.at("cell_scales"));
    m.case_scale = model.at("case_scale").get<double>();
    m.rho1 = rho_from(model.at("rho1"));
    m.rho2 = rho_from(model.at("rho2"));
    m.rompca = rompca_from(model.at("rompca"));

    const json& md = j.at("meta");
    m.iterations = md.at("iterations").get<int>();
    m.converged = md.at("converged").get<bool>();
    m.objective_trace = md.at("objective_trace").get<std::vector<double>>();
    m.init_candidate = md.at("init_candidate").get<int>();
    m.frozen_intercept_cells = md.at("frozen_intercept_cells").get<int>();
    if (meta) meta->seed = md.at("seed").get<std::uint64_t>();
    return m;
  } catch (const json::exception& e) {
    throw FileFormatError(std::string("model: ") + e.what());
  }
}

void save_model(const std::string& path, const RototModel& m,
                const ModelMeta& meta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FileFormatError("cannot open for writing: " + path);
  f << model_to_json(m, meta);
  f.flush();
  if (!f) throw FileFormatError("write failed: " + path);
}

RototModel load_model(const std::string& path, ModelMeta* meta) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileFormatError("cannot open: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return model_from_json(buf.str(), meta);
}

}  // namespace rotot
