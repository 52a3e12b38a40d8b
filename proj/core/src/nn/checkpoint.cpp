#include "grtp/nn/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

namespace grtp::nn {

using json = nlohmann::ordered_json;

void save_params(const std::string& path, const ModelParams& params,
                 const std::string& config_json, std::uint64_t seed) {
  json doc;
  doc["format"] = "grtp-params";
  doc["version"] = 1;
  doc["seed"] = seed;
  if (config_json.empty()) {
    doc["config"] = json::object();
  } else {
    doc["config"] = json::parse(config_json);
  }
  json blocks = json::array();
  for (const auto& [name, m] : params.blocks) {
    json b;
    b["name"] = name;
    b["rows"] = m.rows();
    b["cols"] = m.cols();
    json data = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) data.push_back(m(r, c));
    b["data"] = std::move(data);
    blocks.push_back(std::move(b));
  }
  doc["blocks"] = std::move(blocks);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << doc.dump() << "\n";
}

LoadedParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
  if (doc.value("format", "") != "grtp-params")
    throw ParseError("checkpoint '" + path + "': not a grtp-params file");
  LoadedParams out;
  out.version = doc.value("version", 0);
  if (out.version != 1)
    throw ParseError("checkpoint '" + path + "': unsupported version");
  out.seed = doc.value("seed", std::uint64_t{0});
  out.config_json = doc["config"].dump();
  for (const auto& b : doc["blocks"]) {
    const Eigen::Index rows = b["rows"].get<Eigen::Index>();
    const Eigen::Index cols = b["cols"].get<Eigen::Index>();
    const auto& data = b["data"];
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw ParseError("checkpoint '" + path + "': block size mismatch in '" +
                       b["name"].get<std::string>() + "'");
    Matrix& m = out.params.add(b["name"].get<std::string>(), rows, cols);
    std::size_t i = 0;
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = data[i++].get<double>();
  }
  return out;
}

}  // namespace grtp::nn
