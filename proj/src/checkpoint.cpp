#include "graphife/checkpoint.hpp"

#include "graphife/error.hpp"

#include <fstream>

namespace graphife {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["shape"] = {m.rows(), m.cols()};
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  try {
    const auto shape = j.at("shape").get<std::vector<std::int64_t>>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
        static_cast<std::int64_t>(data.size()) != shape[0] * shape[1]) {
      throw DataError(what + ": shape does not match data length");
    }
    Matrix m(shape[0], shape[1]);
    std::copy(data.begin(), data.end(), m.data());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

nlohmann::json params_to_json(std::span<const ParamRef> params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& p : params) j[p.name] = matrix_to_json(*p.value);
  return j;
}

void params_from_json(const nlohmann::json& j, std::span<const ParamRef> params) {
  for (const auto& p : params) {
    if (!j.contains(p.name)) throw DataError("checkpoint lacks parameter " + p.name);
    Matrix m = matrix_from_json(j.at(p.name), p.name);
    if (!same_shape(m, *p.value)) {
      throw DataError("checkpoint parameter " + p.name + " has shape " +
                      shape_string(m.rows(), m.cols()) + ", model expects " +
                      shape_string(p.value->rows(), p.value->cols()));
    }
    *p.value = std::move(m);
  }
}

nlohmann::json adam_to_json(const AdamState& state) {
  nlohmann::json j;
  j["step"] = state.step;
  j["beta1"] = state.config.beta1;
  j["beta2"] = state.config.beta2;
  j["epsilon"] = state.config.epsilon;
  j["weight_decay"] = state.config.weight_decay;
  auto first = nlohmann::json::array();
  auto second = nlohmann::json::array();
  for (const auto& m : state.first_moment) first.push_back(matrix_to_json(m));
  for (const auto& m : state.second_moment) second.push_back(matrix_to_json(m));
  j["first_moment"] = std::move(first);
  j["second_moment"] = std::move(second);
  return j;
}

AdamState adam_from_json(const nlohmann::json& j) {
  AdamState s;
  try {
    s.step = j.at("step").get<std::int64_t>();
    s.config.beta1 = j.at("beta1").get<double>();
    s.config.beta2 = j.at("beta2").get<double>();
    s.config.epsilon = j.at("epsilon").get<double>();
    s.config.weight_decay = j.at("weight_decay").get<double>();
    for (const auto& m : j.at("first_moment")) s.first_moment.push_back(matrix_from_json(m, "adam"));
    for (const auto& m : j.at("second_moment")) s.second_moment.push_back(matrix_from_json(m, "adam"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("optimizer state: ") + e.what());
  }
  return s;
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump() << '\n';
  if (!out) throw DataError("write failed for " + path);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid JSON: " + e.what());
  }
}

}  // namespace graphife
