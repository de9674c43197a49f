#include "aekick/snapshot.hpp"

#include <fstream>

namespace aekick {

using nlohmann::ordered_json;

const Matrix& ArrayBundle::get(const std::string& name) const {
  for (const auto& [n, m] : arrays) {
    if (n == name) return m;
  }
  throw FormatError("snapshot has no array named '" + name + "'");
}

bool ArrayBundle::contains(const std::string& name) const {
  for (const auto& entry : arrays) {
    if (entry.first == name) return true;
  }
  return false;
}

void save_bundle(const ArrayBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  ordered_json header = ordered_json::object();
  header["format_version"] = kSnapshotFormatVersion;
  header["array_count"] = bundle.arrays.size();
  header["meta"] = bundle.meta;
  out << header.dump() << '\n';
  for (const auto& [name, m] : bundle.arrays) {
    ordered_json line = ordered_json::object();
    line["name"] = name;
    line["rows"] = m.rows;
    line["cols"] = m.cols;
    line["data"] = m.data;
    out << line.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

ArrayBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open snapshot '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  if (!std::getline(in, line)) {
    line_no = 1;
    fail("missing header");
  }
  line_no = 1;
  ArrayBundle bundle;
  std::size_t expected = 0;
  try {
    const auto header = ordered_json::parse(line);
    if (header.at("format_version").get<int>() != kSnapshotFormatVersion) fail("unsupported format_version");
    expected = header.at("array_count").get<std::size_t>();
    bundle.meta = header.at("meta");
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = ordered_json::parse(line);
      Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
      auto data = j.at("data").get<std::vector<double>>();
      if (data.size() != m.rows * m.cols) fail("data length does not match rows x cols");
      m.data = std::move(data);
      bundle.arrays.emplace_back(j.at("name").get<std::string>(), std::move(m));
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad array record: ") + e.what());
    }
  }
  if (bundle.arrays.size() != expected) {
    fail("header declares " + std::to_string(expected) + " arrays, found " +
         std::to_string(bundle.arrays.size()));
  }
  return bundle;
}

void append_net(ArrayBundle& bundle, const std::string& prefix, const DenseNet& net) {
  ordered_json acts = ordered_json::array();
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    const std::string base = prefix + ".layer" + std::to_string(i);
    bundle.arrays.emplace_back(base + ".weights", l.weights);
    Matrix b(1, l.biases.size());
    b.data = l.biases;
    bundle.arrays.emplace_back(base + ".biases", std::move(b));
    acts.push_back(to_string(l.activation));
  }
  bundle.meta[prefix + ".activations"] = acts;
}

DenseNet extract_net(const ArrayBundle& bundle, const std::string& prefix) {
  const std::string key = prefix + ".activations";
  if (!bundle.meta.contains(key)) throw FormatError("snapshot has no network '" + prefix + "'");
  DenseNet net;
  const auto& acts = bundle.meta.at(key);
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const std::string base = prefix + ".layer" + std::to_string(i);
    Layer l;
    l.weights = bundle.get(base + ".weights");
    l.biases = bundle.get(base + ".biases").data;
    l.activation = activation_from_string(acts.at(i).get<std::string>());
    if (l.biases.size() != l.weights.cols) throw FormatError("bias length mismatch in " + base);
    if (!net.layers.empty() && net.layers.back().weights.cols != l.weights.rows) {
      throw FormatError("layer dimensions do not chain in " + base);
    }
    net.layers.push_back(std::move(l));
  }
  return net;
}

}  // namespace aekick
