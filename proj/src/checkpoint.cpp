#include "chnode/checkpoint.hpp"

#include <fstream>

#include "chnode/error.hpp"

namespace chnode {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw Error(ErrorCode::format, what + ": expected a non-empty array of rows");
  const auto rows = static_cast<Index>(j.size());
  const auto cols = static_cast<Index>(j.front().size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw Error(ErrorCode::format, what + ": ragged row " + std::to_string(r));
    for (Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw Error(ErrorCode::format, what + ": non-numeric entry");
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorCode::format, what + ": expected an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::format, what + ": non-numeric entry");
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

namespace {

json affine_to_json(const AffineMap& map) {
  return {{"weight", matrix_to_json(map.weight)},
          {"bias", vector_to_json(map.bias)},
          {"trainable", map.trainable}};
}

AffineMap affine_from_json(const json& j, const std::string& what) {
  AffineMap map;
  map.weight = matrix_from_json(j.at("weight"), what + ".weight");
  map.bias = vector_from_json(j.at("bias"), what + ".bias");
  map.trainable = j.value("trainable", true);
  return map;
}

}  // namespace

json checkpoint_to_json(const ModelSpec& spec) {
  json layers = json::array();
  for (const auto& layer : spec.layers) {
    layers.push_back({{"K", matrix_to_json(layer.K)},
                      {"b", vector_to_json(layer.b)},
                      {"L", matrix_to_json(layer.L)}});
  }
  return {{"format", "chnode-checkpoint"},
          {"version", 1},
          {"arch", to_string(spec.arch)},
          {"activation", "tanh"},
          {"n", spec.n},
          {"N", spec.depth()},
          {"h", spec.h},
          {"kappa", spec.kappa},
          {"gamma", spec.gamma},
          {"epsilon_user", spec.epsilon_user},
          {"train_L", spec.train_L},
          {"seed", spec.seed},
          {"J", matrix_to_json(spec.J)},
          {"layers", std::move(layers)},
          {"input_layer", affine_to_json(spec.input_layer)},
          {"output_layer", affine_to_json(spec.output_layer)}};
}

ModelSpec checkpoint_from_json(const json& doc) {
  try {
    if (doc.value("format", "") != "chnode-checkpoint")
      throw Error(ErrorCode::format, "not a chnode checkpoint document");
    if (doc.value("activation", "tanh") != "tanh")
      throw Error(ErrorCode::format, "unsupported activation");
    ModelSpec spec;
    spec.arch = parse_arch(doc.at("arch").get<std::string>());
    spec.n = doc.at("n").get<Index>();
    spec.h = doc.at("h").get<double>();
    spec.kappa = doc.at("kappa").get<double>();
    spec.gamma = doc.at("gamma").get<double>();
    spec.epsilon_user = doc.value("epsilon_user", 1e-9);
    spec.train_L = doc.value("train_L", false);
    spec.seed = doc.value("seed", std::uint64_t{0});
    spec.J = matrix_from_json(doc.at("J"), "J");
    for (const auto& layer : doc.at("layers")) {
      spec.layers.push_back({matrix_from_json(layer.at("K"), "K"),
                             vector_from_json(layer.at("b"), "b"),
                             matrix_from_json(layer.at("L"), "L")});
    }
    if (doc.at("N").get<Index>() != spec.depth())
      throw Error(ErrorCode::format, "N does not match the number of stored layers");
    spec.input_layer = affine_from_json(doc.at("input_layer"), "input_layer");
    spec.output_layer = affine_from_json(doc.at("output_layer"), "output_layer");
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ModelSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << checkpoint_to_json(spec).dump(1) << '\n';
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

ModelSpec load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open checkpoint " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace chnode
