#include <sstream>

#include "layerseg/errors.hpp"
#include "layerseg/ply.hpp"
#include "layerseg/scan.hpp"
#include "layerseg/version.hpp"

namespace layerseg {

void save_scan_ply(const std::string& path, const LabeledScan& s, bool binary,
                   const std::vector<std::string>& extra_comments) {
  PlyData data;
  data.comments.push_back("layerseg " + std::string(kVersion));
  {
    std::ostringstream os;
    os.precision(17);
    os << "scan num_views " << s.view_origins.size() << " rays_per_view "
       << s.config.rays_per_view << " noise_sigma " << s.config.noise_sigma << " seed "
       << s.config.seed << " camera_distance " << s.config.camera_distance;
    data.comments.push_back(os.str());
  }
  for (std::size_t v = 0; v < s.view_origins.size(); ++v) {
    std::ostringstream os;
    os.precision(17);
    const Vec3& o = s.view_origins[v];
    os << "view " << v << " " << o.x() << " " << o.y() << " " << o.z();
    data.comments.push_back(os.str());
  }
  for (const auto& c : extra_comments) data.comments.push_back(c);

  const std::size_t n = s.size();
  auto column = [&](const char* name, PlyType type) -> std::vector<double>& {
    data.properties.push_back({name, type, std::vector<double>(n)});
    return data.properties.back().values;
  };
  for (int a = 0; a < 3; ++a) {
    auto& col = column(a == 0 ? "x" : a == 1 ? "y" : "z", PlyType::Float32);
    for (std::size_t i = 0; i < n; ++i) col[i] = s.cloud.positions[i][a];
  }
  for (int a = 0; a < 3; ++a) {
    auto& col = column(a == 0 ? "nx" : a == 1 ? "ny" : "nz", PlyType::Float32);
    for (std::size_t i = 0; i < n; ++i) col[i] = s.cloud.normals[i][a];
  }
  auto& body = column("body", PlyType::Int32);
  auto& vis = column("visible_class", PlyType::Int32);
  auto& hid = column("hidden_class", PlyType::Int32);
  for (std::size_t i = 0; i < n; ++i) {
    body[i] = s.labels[i].is_body ? 1 : 0;
    vis[i] = garment_code(s.labels[i].visible);
    hid[i] = garment_code(s.labels[i].hidden);
  }
  if (s.cloud.has_views()) {
    auto& view = column("view", PlyType::Int32);
    for (std::size_t i = 0; i < n; ++i) view[i] = s.cloud.source_view[i];
  }
  write_ply(path, data, binary);
}

LabeledScan load_scan_ply(const std::string& path) {
  const PlyData data = read_ply(path);
  LabeledScan s;
  for (const auto& c : data.comments) {
    std::istringstream is(c);
    std::string word;
    is >> word;
    if (word == "view") {
      std::size_t v;
      double x, y, z;
      if (is >> v >> x >> y >> z) {
        if (s.view_origins.size() <= v) s.view_origins.resize(v + 1, Vec3::Zero());
        s.view_origins[v] = Vec3(x, y, z);
      }
    } else if (word == "scan") {
      std::string key;
      while (is >> key) {
        if (key == "num_views") is >> s.config.num_views;
        else if (key == "rays_per_view") is >> s.config.rays_per_view;
        else if (key == "noise_sigma") is >> s.config.noise_sigma;
        else if (key == "seed") is >> s.config.seed;
        else if (key == "camera_distance") is >> s.config.camera_distance;
      }
    }
  }
  const std::size_t n = data.count();
  const auto& x = data.get("x").values;
  const auto& y = data.get("y").values;
  const auto& z = data.get("z").values;
  const auto& nx = data.get("nx").values;
  const auto& ny = data.get("ny").values;
  const auto& nz = data.get("nz").values;
  const auto& body = data.get("body").values;
  const auto& vis = data.get("visible_class").values;
  const auto& hid = data.get("hidden_class").values;
  s.cloud.positions.resize(n);
  s.cloud.normals.resize(n);
  s.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.cloud.positions[i] = Vec3(x[i], y[i], z[i]);
    // Stored as float; restore unit length in double.
    s.cloud.normals[i] = Vec3(nx[i], ny[i], nz[i]).normalized();
    try {
      s.labels[i] = CanonicalLabel{body[i] != 0.0, garment_from_code(static_cast<int>(vis[i])),
                                   garment_from_code(static_cast<int>(hid[i]))};
    } catch (const InvalidArgument& e) {
      throw IoError("scan ply '" + path + "': point " + std::to_string(i) + ": " + e.what());
    }
  }
  if (data.has("view")) {
    const auto& view = data.get("view").values;
    s.cloud.source_view.assign(view.begin(), view.end());
  }
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw IoError("scan ply '" + path + "': " + e.what());
  }
  return s;
}

}  // namespace layerseg
