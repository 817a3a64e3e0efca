#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace layerseg {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

/// One scalar vertex property. Values are held as doubles, which represent
/// every supported type exactly.
struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  std::vector<double> values;
};

/// Vertex-only PLY table.
struct PlyData {
  std::vector<std::string> comments;
  std::vector<PlyProperty> properties;

  std::size_t count() const { return properties.empty() ? 0 : properties[0].values.size(); }
  const PlyProperty& get(const std::string& name) const;  // throws IoError when absent
  bool has(const std::string& name) const;
};

/// Writes ASCII or binary little-endian. Throws IoError on failure and
/// InvalidArgument when columns differ in length.
void write_ply(const std::string& path, const PlyData& data, bool binary);

/// Reads ASCII and binary little-endian vertex tables. Other elements must have
/// no list properties; they are skipped.
PlyData read_ply(const std::string& path);

}  // namespace layerseg
