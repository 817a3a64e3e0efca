#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "layerseg/errors.hpp"
#include "layerseg/ply.hpp"

namespace layerseg {
namespace {

struct TypeInfo {
  PlyType type;
  const char* name;
  const char* alias;
  std::size_t size;
};

constexpr TypeInfo kTypes[] = {
    {PlyType::Int8, "char", "int8", 1},      {PlyType::UInt8, "uchar", "uint8", 1},
    {PlyType::Int16, "short", "int16", 2},   {PlyType::UInt16, "ushort", "uint16", 2},
    {PlyType::Int32, "int", "int32", 4},     {PlyType::UInt32, "uint", "uint32", 4},
    {PlyType::Float32, "float", "float32", 4}, {PlyType::Float64, "double", "float64", 8},
};

const TypeInfo& info(PlyType t) {
  for (const auto& i : kTypes) {
    if (i.type == t) return i;
  }
  throw InvalidArgument("ply: unknown type");
}

const TypeInfo* find_type(const std::string& name) {
  for (const auto& i : kTypes) {
    if (name == i.name || name == i.alias) return &i;
  }
  return nullptr;
}

template <typename T>
void put(std::string& buf, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    buf.append(bytes.data(), sizeof(T));
  } else {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
  }
}

template <typename T>
double take(const char* p) {
  T v;
  if constexpr (std::endian::native == std::endian::big) {
    char bytes[sizeof(T)];
    std::reverse_copy(p, p + sizeof(T), bytes);
    std::memcpy(&v, bytes, sizeof(T));
  } else {
    std::memcpy(&v, p, sizeof(T));
  }
  return static_cast<double>(v);
}

void put_value(std::string& buf, PlyType t, double v) {
  switch (t) {
    case PlyType::Int8: put<std::int8_t>(buf, static_cast<std::int8_t>(v)); break;
    case PlyType::UInt8: put<std::uint8_t>(buf, static_cast<std::uint8_t>(v)); break;
    case PlyType::Int16: put<std::int16_t>(buf, static_cast<std::int16_t>(v)); break;
    case PlyType::UInt16: put<std::uint16_t>(buf, static_cast<std::uint16_t>(v)); break;
    case PlyType::Int32: put<std::int32_t>(buf, static_cast<std::int32_t>(v)); break;
    case PlyType::UInt32: put<std::uint32_t>(buf, static_cast<std::uint32_t>(v)); break;
    case PlyType::Float32: put<float>(buf, static_cast<float>(v)); break;
    case PlyType::Float64: put<double>(buf, v); break;
  }
}

double take_value(const char* p, PlyType t) {
  switch (t) {
    case PlyType::Int8: return take<std::int8_t>(p);
    case PlyType::UInt8: return take<std::uint8_t>(p);
    case PlyType::Int16: return take<std::int16_t>(p);
    case PlyType::UInt16: return take<std::uint16_t>(p);
    case PlyType::Int32: return take<std::int32_t>(p);
    case PlyType::UInt32: return take<std::uint32_t>(p);
    case PlyType::Float32: return take<float>(p);
    case PlyType::Float64: return take<double>(p);
  }
  return 0.0;
}

bool is_float(PlyType t) { return t == PlyType::Float32 || t == PlyType::Float64; }

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyType> types;
  std::vector<std::string> names;
};

}  // namespace

const PlyProperty& PlyData::get(const std::string& name) const {
  for (const auto& p : properties) {
    if (p.name == name) return p;
  }
  throw IoError("ply: missing vertex property '" + name + "'");
}

bool PlyData::has(const std::string& name) const {
  return std::any_of(properties.begin(), properties.end(),
                     [&](const PlyProperty& p) { return p.name == name; });
}

void write_ply(const std::string& path, const PlyData& data, bool binary) {
  const std::size_t n = data.count();
  for (const auto& p : data.properties) {
    if (p.values.size() != n) throw InvalidArgument("ply: property '" + p.name + "' has wrong length");
  }
  std::string out;
  out += "ply\n";
  out += binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
  for (const auto& c : data.comments) out += "comment " + c + "\n";
  out += "element vertex " + std::to_string(n) + "\n";
  for (const auto& p : data.properties) {
    out += std::string("property ") + info(p.type).name + " " + p.name + "\n";
  }
  out += "end_header\n";
  if (binary) {
    std::size_t row = 0;
    for (const auto& p : data.properties) row += info(p.type).size;
    out.reserve(out.size() + row * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& p : data.properties) put_value(out, p.type, p.values[i]);
    }
  } else {
    std::ostringstream os;
    os << std::setprecision(9);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < data.properties.size(); ++j) {
        const auto& p = data.properties[j];
        if (j) os << ' ';
        if (p.type == PlyType::Float64) {
          os << std::setprecision(17) << p.values[i] << std::setprecision(9);
        } else if (p.type == PlyType::Float32) {
          os << static_cast<float>(p.values[i]);
        } else {
          os << static_cast<long long>(p.values[i]);
        }
      }
      os << '\n';
    }
    out += os.str();
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("ply: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("ply: write to '" + path + "' failed");
}

PlyData read_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("ply: cannot open '" + path + "'");
  std::string line;
  std::getline(f, line);
  if (line != "ply" && line != "ply\r") throw IoError("ply: '" + path + "' lacks the ply magic");

  bool binary = false;
  PlyData data;
  std::vector<Element> elements;
  for (;;) {
    if (!std::getline(f, line)) throw IoError("ply: header of '" + path + "' is truncated");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream is(line);
    std::string word;
    is >> word;
    if (word == "end_header") break;
    if (word == "comment" || word == "obj_info") {
      const auto pos = line.find(' ');
      data.comments.push_back(pos == std::string::npos ? "" : line.substr(pos + 1));
    } else if (word == "format") {
      std::string fmt;
      is >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        throw IoError("ply: unsupported format '" + fmt + "'");
      }
    } else if (word == "element") {
      Element e;
      is >> e.name >> e.count;
      if (!is) throw IoError("ply: malformed element line '" + line + "'");
      elements.push_back(e);
    } else if (word == "property") {
      std::string type, name;
      is >> type >> name;
      if (type == "list") throw IoError("ply: list properties are not supported");
      const TypeInfo* t = find_type(type);
      if (!t || elements.empty()) throw IoError("ply: malformed property line '" + line + "'");
      elements.back().types.push_back(t->type);
      elements.back().names.push_back(name);
    } else if (!word.empty()) {
      throw IoError("ply: unexpected header line '" + line + "'");
    }
  }

  for (const auto& e : elements) {
    const bool keep = e.name == "vertex";
    if (keep) {
      for (std::size_t j = 0; j < e.names.size(); ++j) {
        data.properties.push_back({e.names[j], e.types[j], std::vector<double>(e.count)});
      }
    }
    if (binary) {
      std::size_t row = 0;
      for (auto t : e.types) row += info(t).size;
      std::string buf(row * e.count, '\0');
      f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      if (!f) throw IoError("ply: '" + path + "' ends before element '" + e.name + "'");
      if (!keep) continue;
      const char* p = buf.data();
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t j = 0; j < e.types.size(); ++j) {
          data.properties[j].values[i] = take_value(p, e.types[j]);
          p += info(e.types[j]).size;
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t j = 0; j < e.types.size(); ++j) {
          std::string tok;
          if (!(f >> tok)) throw IoError("ply: '" + path + "' ends before element '" + e.name + "'");
          if (!keep) continue;
          double v = 0.0;
          try {
            v = std::stod(tok);
          } catch (const std::exception&) {
            throw IoError("ply: bad number '" + tok + "'");
          }
          if (!is_float(e.types[j]) && v != static_cast<double>(static_cast<long long>(v))) {
            throw IoError("ply: non-integer value for integer property '" + e.names[j] + "'");
          }
          data.properties[j].values[i] = v;
        }
      }
    }
    if (keep) break;
  }
  if (data.properties.empty()) throw IoError("ply: '" + path + "' has no vertex element");
  return data;
}

}  // namespace layerseg
