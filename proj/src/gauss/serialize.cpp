#include "cuae/gauss/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace cuae::gauss {

using nlohmann::json;

json mixture_to_json(const GaussianMixture& m) {
  m.validate();
  json j;
  j["dim"] = m.dim();
  j["weights"] = std::vector<double>(m.weights.data(),
                                     m.weights.data() + m.weights.size());
  json comps = json::array();
  for (const auto& g : m.components) {
    json c;
    c["mean"] = std::vector<double>(g.mean.data(), g.mean.data() + g.dim());
    json rows = json::array();
    for (int r = 0; r < g.dim(); ++r) {
      rows.push_back(std::vector<double>(g.cov.row(r).begin(),
                                         g.cov.row(r).end()));
    }
    c["cov"] = std::move(rows);
    comps.push_back(std::move(c));
  }
  j["components"] = std::move(comps);
  return j;
}

GaussianMixture mixture_from_json(const json& j) {
  for (const char* key : {"dim", "weights", "components"})
    if (!j.contains(key))
      throw std::invalid_argument(std::string("mixture JSON: missing key '") +
                                  key + "'");
  const int d = j.at("dim").get<int>();
  GaussianMixture m;
  const auto w = j.at("weights").get<std::vector<double>>();
  m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
  for (const auto& c : j.at("components")) {
    FullGaussian g;
    const auto mean = c.at("mean").get<std::vector<double>>();
    if (static_cast<int>(mean.size()) != d)
      throw std::invalid_argument("mixture JSON: component mean has size " +
                                  std::to_string(mean.size()) + ", dim is " +
                                  std::to_string(d));
    g.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
    const auto& cov = c.at("cov");
    if (static_cast<int>(cov.size()) != d)
      throw std::invalid_argument("mixture JSON: component cov is not " +
                                  std::to_string(d) + "x" + std::to_string(d));
    g.cov.resize(d, d);
    for (int r = 0; r < d; ++r) {
      const auto row = cov.at(r).get<std::vector<double>>();
      if (static_cast<int>(row.size()) != d)
        throw std::invalid_argument("mixture JSON: cov row " +
                                    std::to_string(r) + " has length " +
                                    std::to_string(row.size()));
      g.cov.row(r) = Eigen::Map<const Eigen::VectorXd>(row.data(), d);
    }
    m.components.push_back(std::move(g));
  }
  m.validate();
  return m;
}

void save_mixture(const std::string& path, const GaussianMixture& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << mixture_to_json(m).dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

GaussianMixture load_mixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("mixture JSON: parse error in " + path +
                                ": " + e.what());
  }
  return mixture_from_json(j);
}

}  // namespace cuae::gauss
