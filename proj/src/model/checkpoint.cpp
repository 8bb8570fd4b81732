#include "cuae/model/checkpoint.hpp"

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cuae::model {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "cuae-checkpoint";
constexpr int kVersion = 1;

json mat_to_json(const Eigen::MatrixXd& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  j["data"] = std::move(flat);
  return j;
}

Eigen::MatrixXd mat_from_json(const json& j, const std::string& name) {
  for (const char* key : {"rows", "cols", "data"})
    if (!j.contains(key))
      throw std::invalid_argument("checkpoint: tensor '" + name +
                                  "' is missing key '" + key + "'");
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 ||
      flat.size() != static_cast<size_t>(rows * cols))
    throw std::invalid_argument("checkpoint: tensor '" + name +
                                "' has inconsistent shape");
  Eigen::MatrixXd m(rows, cols);
  size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[k++];
  return m;
}

json tensors_to_json(const std::vector<nn::ParamRef>& refs) {
  json j = json::object();
  for (const auto& ref : refs) j[ref.name] = mat_to_json(*ref.tensor);
  return j;
}

void tensors_from_json(const json& j, const std::vector<nn::ParamRef>& refs,
                       const std::string& what) {
  for (const auto& ref : refs) {
    if (!j.contains(ref.name))
      throw std::invalid_argument("checkpoint: missing " + what + " '" +
                                  ref.name + "'");
    Eigen::MatrixXd m = mat_from_json(j.at(ref.name), ref.name);
    if (m.rows() != ref.tensor->rows() || m.cols() != ref.tensor->cols())
      throw std::invalid_argument("checkpoint: " + what + " '" + ref.name +
                                  "' has shape " + std::to_string(m.rows()) +
                                  "x" + std::to_string(m.cols()) +
                                  ", expected " +
                                  std::to_string(ref.tensor->rows()) + "x" +
                                  std::to_string(ref.tensor->cols()));
    *ref.tensor = std::move(m);
  }
  if (j.size() != refs.size())
    throw std::invalid_argument("checkpoint: unexpected extra " + what +
                                " entries");
}

}  // namespace

void save_checkpoint(const std::string& path, TrainState& st) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["variant"] = variant_name(st.model.variant());

  const ModelConfig& mc = st.model.config();
  json jm;
  jm["history_len"] = mc.history_len;
  jm["horizon"] = mc.horizon;
  jm["n_features"] = mc.n_features;
  jm["latent_dim"] = mc.latent_dim;
  jm["n_components"] = mc.n_components;
  jm["hidden"] = mc.hidden;
  jm["weights_hidden"] = mc.weights_hidden;
  jm["batchnorm"] = mc.batchnorm;
  jm["sigma"] = mc.sigma;
  j["model"] = std::move(jm);

  json jt;
  jt["epochs"] = st.tcfg.epochs;
  jt["batch_size"] = st.tcfg.batch_size;
  jt["n_samples"] = st.tcfg.n_samples;
  jt["base_lr"] = st.tcfg.base_lr;
  jt["seed"] = st.tcfg.seed;
  j["train"] = std::move(jt);

  j["epochs_done"] = st.epochs_done;
  j["rng"] = st.rng_state;
  j["params"] = tensors_to_json(st.model.params());
  j["buffers"] = tensors_to_json(st.model.buffers());

  json ja;
  ja["step"] = st.adam.step_count();
  json moments = json::object();
  for (const auto& [name, mom] : st.adam.moments()) {
    json jm2;
    jm2["m"] = mat_to_json(mom.m);
    jm2["v"] = mat_to_json(mom.v);
    moments[name] = std::move(jm2);
  }
  ja["moments"] = std::move(moments);
  j["adam"] = std::move(ja);

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << j.dump(2) << '\n';
  if (!f) throw std::runtime_error("failed writing " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("checkpoint " + path + ": " + e.what());
  }
  for (const char* key : {"format", "version", "variant", "model", "train",
                          "epochs_done", "rng", "params", "buffers", "adam"})
    if (!j.contains(key))
      throw std::invalid_argument("checkpoint " + path + ": missing key '" +
                                  std::string(key) + "'");
  if (j.at("format").get<std::string>() != kFormat ||
      j.at("version").get<int>() != kVersion)
    throw std::invalid_argument("checkpoint " + path +
                                ": unrecognized format");

  const Variant variant = variant_from_name(j.at("variant").get<std::string>());
  const json& jm = j.at("model");
  ModelConfig mc;
  mc.history_len = jm.at("history_len").get<int>();
  mc.horizon = jm.at("horizon").get<int>();
  mc.n_features = jm.at("n_features").get<int>();
  mc.latent_dim = jm.at("latent_dim").get<int>();
  mc.n_components = jm.at("n_components").get<int>();
  mc.hidden = jm.at("hidden").get<std::vector<int>>();
  mc.weights_hidden = jm.at("weights_hidden").get<std::vector<int>>();
  mc.batchnorm = jm.at("batchnorm").get<bool>();
  mc.sigma = jm.at("sigma").get<double>();

  TrainState st;
  st.model = Model(variant, mc);

  const json& jt = j.at("train");
  st.tcfg.epochs = jt.at("epochs").get<int>();
  st.tcfg.batch_size = jt.at("batch_size").get<int>();
  st.tcfg.n_samples = jt.at("n_samples").get<int>();
  st.tcfg.base_lr = jt.at("base_lr").get<double>();
  st.tcfg.seed = jt.at("seed").get<uint64_t>();

  st.epochs_done = j.at("epochs_done").get<int>();
  st.rng_state = j.at("rng").get<std::string>();
  tensors_from_json(j.at("params"), st.model.params(), "parameter");
  tensors_from_json(j.at("buffers"), st.model.buffers(), "buffer");

  const json& ja = j.at("adam");
  std::map<std::string, nn::Adam::Moments> moments;
  for (const auto& [name, jm2] : ja.at("moments").items()) {
    nn::Adam::Moments mom;
    mom.m = mat_from_json(jm2.at("m"), name + ".m");
    mom.v = mat_from_json(jm2.at("v"), name + ".v");
    moments.emplace(name, std::move(mom));
  }
  st.adam.restore(std::move(moments), ja.at("step").get<int64_t>());
  return st;
}

}  // namespace cuae::model
