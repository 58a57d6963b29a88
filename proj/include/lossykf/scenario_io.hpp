#pragma once

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lossykf/errors.hpp"
#include "lossykf/linalg.hpp"
#include "lossykf/model.hpp"

namespace lossykf::io {

using nlohmann::json;

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(path.empty() ? key + " missing"
                                       : path + "." + key + " missing");
  }
  return j.at(key);
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline double parse_number(const json& j, const std::string& path) {
  if (!j.is_number()) {
    throw ValidationError(path + " must be a number");
  }
  const double v = j.get<double>();
  if (!std::isfinite(v)) {
    throw ValidationError(path + " must be finite");
  }
  return v;
}

inline Eigen::MatrixXd parse_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) {
    throw ValidationError(path + " must be a non-empty array of rows");
  }
  const std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty()) {
    throw ValidationError(path + " rows must be non-empty arrays");
  }
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw ValidationError(path + " must be rectangular (row " + std::to_string(r) +
                            " differs)");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_number(j[r][c], path + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
  }
  return m;
}

inline model::Point parse_point(const json& j, const std::string& path) {
  if (!j.is_array() || (j.size() != 1 && j.size() != 2)) {
    throw ValidationError(path + " must be an array of 1 or 2 coordinates");
  }
  model::Point p(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    p[static_cast<Eigen::Index>(i)] = parse_number(j[i], path + "[" + std::to_string(i) + "]");
  }
  return p;
}

/// Run a construction step and re-throw any library error as a
/// ValidationError carrying the field path.
template <typename Build>
auto wrap(const std::string& path, Build&& build) {
  try {
    return build();
  } catch (const Error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace detail

inline model::LossModel parse_loss_model(const json& j) {
  const std::string family = detail::require(j, "family", "loss_model").get<std::string>();
  const double d_max =
      detail::parse_number(detail::require(j, "d_max", "loss_model"), "loss_model.d_max");
  if (family == "exponential") {
    const double kappa =
        detail::parse_number(detail::require(j, "kappa", "loss_model"), "loss_model.kappa");
    return detail::wrap("loss_model",
                        [&] { return model::LossModel::exponential(kappa, d_max); });
  }
  if (family == "linear") {
    const double slope =
        detail::parse_number(detail::require(j, "slope", "loss_model"), "loss_model.slope");
    return detail::wrap("loss_model", [&] { return model::LossModel::linear(slope, d_max); });
  }
  throw ValidationError("loss_model.family must be \"exponential\" or \"linear\", got \"" +
                        family + "\"");
}

/// Build a validated Scenario from its JSON document. Validation errors
/// name the offending field path.
inline model::Scenario parse_scenario_json(const json& j) {
  const json& jsystem = detail::require(j, "system", "");
  const Eigen::MatrixXd a =
      detail::parse_matrix(detail::require(jsystem, "A", "system"), "system.A");
  const linalg::CovMatrix q = detail::wrap("system.Q", [&] {
    return linalg::CovMatrix(
        detail::parse_matrix(detail::require(jsystem, "Q", "system"), "system.Q"));
  });
  const linalg::CovMatrix p0 = detail::wrap("system.P0", [&] {
    return linalg::CovMatrix(
        detail::parse_matrix(detail::require(jsystem, "P0", "system"), "system.P0"));
  });
  model::LinearSystem system =
      detail::wrap("system", [&] { return model::LinearSystem(a, q, p0); });

  const json& jsensors = detail::require(j, "sensors", "");
  if (!jsensors.is_array() || jsensors.empty()) {
    throw ValidationError("sensors must be a non-empty array");
  }
  std::vector<model::Sensor> sensors;
  sensors.reserve(jsensors.size());
  for (std::size_t i = 0; i < jsensors.size(); ++i) {
    const std::string path = "sensors[" + std::to_string(i) + "]";
    const json& js = jsensors[i];
    const Eigen::MatrixXd c = detail::parse_matrix(detail::require(js, "C", path), path + ".C");
    const linalg::CovMatrix r = detail::wrap(path + ".R", [&] {
      return linalg::CovMatrix(detail::parse_matrix(detail::require(js, "R", path), path + ".R"));
    });
    const model::Point pos = detail::parse_point(detail::require(js, "position", path),
                                                 path + ".position");
    sensors.push_back(detail::wrap(path, [&] { return model::Sensor(c, r, pos); }));
  }

  model::LossModel loss = parse_loss_model(detail::require(j, "loss_model", ""));

  const json& jregion = detail::require(j, "region", "");
  const model::Point lo = detail::parse_point(detail::require(jregion, "lo", "region"),
                                              "region.lo");
  const model::Point hi = detail::parse_point(detail::require(jregion, "hi", "region"),
                                              "region.hi");
  model::Region region = detail::wrap("region", [&] { return model::Region(lo, hi); });

  return detail::wrap("scenario", [&] {
    return model::Scenario(std::move(system), std::move(sensors), std::move(loss),
                           std::move(region));
  });
}

inline model::Scenario parse_scenario_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // Byte offset -> line number for a readable message.
    std::size_t line = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < e.byte; ++i) {
      if (text[i] == '\n') ++line;
    }
    throw ValidationError("parse error at line " + std::to_string(line) + ": " + e.what());
  }
  return parse_scenario_json(j);
}

inline model::Scenario parse_scenario(const std::string& file_path) {
  std::ifstream in(file_path, std::ios::binary);
  if (!in) {
    throw ValidationError("cannot open scenario file: " + file_path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario_string(buf.str());
  } catch (const ValidationError& e) {
    throw ValidationError(file_path + ": " + e.what());
  }
}

}  // namespace lossykf::io
