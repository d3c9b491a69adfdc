#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "percap/core.hpp"

namespace percap::detail {

using nlohmann::json;

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw LoadError(where + "." + key + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw LoadError(where + "." + key + ": " + e.what());
  }
}

inline Vec3 vec_field(const json& j, const char* key, const std::string& where) {
  const auto v = field<std::vector<double>>(j, key, where);
  if (v.size() != 3) throw LoadError(where + "." + key + ": expected 3 numbers");
  return {v[0], v[1], v[2]};
}

inline json points_json(const Points& p) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) rows.push_back(vec_json(p.row(i).transpose()));
  return rows;
}

inline Points points_field(const json& j, const char* key, const std::string& where) {
  const auto rows = field<std::vector<std::vector<double>>>(j, key, where);
  Points p(rows.size(), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != 3) throw LoadError(where + "." + key + "[" + std::to_string(i) + "]: expected 3 numbers");
    p.row(i) << rows[i][0], rows[i][1], rows[i][2];
  }
  return p;
}

inline json vecx_json(const VecX& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline VecX vecx_field(const json& j, const char* key, const std::string& where) {
  const auto v = field<std::vector<double>>(j, key, where);
  return Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace percap::detail
