#include "resim/ply.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

namespace resim {
namespace {

enum class ScalarType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<ScalarType> parse_scalar_type(std::string_view name) {
  if (name == "char" || name == "int8") return ScalarType::Int8;
  if (name == "uchar" || name == "uint8") return ScalarType::UInt8;
  if (name == "short" || name == "int16") return ScalarType::Int16;
  if (name == "ushort" || name == "uint16") return ScalarType::UInt16;
  if (name == "int" || name == "int32") return ScalarType::Int32;
  if (name == "uint" || name == "uint32") return ScalarType::UInt32;
  if (name == "float" || name == "float32") return ScalarType::Float32;
  if (name == "double" || name == "float64") return ScalarType::Float64;
  return std::nullopt;
}

std::size_t scalar_size(ScalarType t) {
  switch (t) {
    case ScalarType::Int8:
    case ScalarType::UInt8: return 1;
    case ScalarType::Int16:
    case ScalarType::UInt16: return 2;
    case ScalarType::Int32:
    case ScalarType::UInt32:
    case ScalarType::Float32: return 4;
    case ScalarType::Float64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::Float64;
  bool is_list = false;
  ScalarType count_type = ScalarType::UInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
  std::size_t header_line = 0;
};

enum class Format { Ascii, BinaryLittle, BinaryBig };

struct Header {
  Format format = Format::Ascii;
  std::vector<Element> elements;
  std::size_t body_offset = 0;
  std::size_t body_first_line = 0;
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

Header parse_header(const std::string& data) {
  Header h;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_format = false;
  auto next_line = [&]() -> std::optional<std::string_view> {
    if (pos >= data.size()) return std::nullopt;
    std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) end = data.size();
    std::string_view line(data.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  };

  auto first = next_line();
  if (!first || *first != "ply") throw PlyParseError("missing 'ply' magic", 1);

  while (true) {
    auto line = next_line();
    if (!line) throw PlyParseError("unexpected end of header", line_no);
    auto tok = split_ws(*line);
    if (tok.empty()) continue;
    const auto& kw = tok[0];
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info") continue;
    if (kw == "format") {
      if (tok.size() != 3) throw PlyParseError("malformed format line", line_no);
      if (tok[1] == "ascii") h.format = Format::Ascii;
      else if (tok[1] == "binary_little_endian") h.format = Format::BinaryLittle;
      else if (tok[1] == "binary_big_endian") h.format = Format::BinaryBig;
      else throw PlyParseError("unknown format '" + std::string(tok[1]) + "'", line_no);
      if (tok[2] != "1.0") throw PlyUnsupportedError("unsupported PLY version " + std::string(tok[2]));
      saw_format = true;
    } else if (kw == "element") {
      if (tok.size() != 3) throw PlyParseError("malformed element line", line_no);
      Element e;
      e.name = std::string(tok[1]);
      auto [ptr, ec] = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), e.count);
      if (ec != std::errc{} || ptr != tok[2].data() + tok[2].size()) {
        throw PlyParseError("bad element count", line_no);
      }
      e.header_line = line_no;
      h.elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (h.elements.empty()) throw PlyParseError("property before any element", line_no);
      Property p;
      if (tok.size() >= 2 && tok[1] == "list") {
        if (tok.size() != 5) throw PlyParseError("malformed list property", line_no);
        auto ct = parse_scalar_type(tok[2]);
        auto it = parse_scalar_type(tok[3]);
        if (!ct || !it) throw PlyUnsupportedError("unknown property type on line " + std::to_string(line_no));
        p.is_list = true;
        p.count_type = *ct;
        p.type = *it;
        p.name = std::string(tok[4]);
      } else {
        if (tok.size() != 3) throw PlyParseError("malformed property line", line_no);
        auto t = parse_scalar_type(tok[1]);
        if (!t) throw PlyUnsupportedError("unknown property type '" + std::string(tok[1]) + "' on line " + std::to_string(line_no));
        p.type = *t;
        p.name = std::string(tok[2]);
      }
      h.elements.back().properties.push_back(std::move(p));
    } else {
      throw PlyParseError("unknown header keyword '" + std::string(kw) + "'", line_no);
    }
  }
  if (!saw_format) throw PlyParseError("missing format line", line_no);
  h.body_offset = pos;
  h.body_first_line = line_no + 1;
  return h;
}

template <typename T>
T load_raw(const char* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    std::reverse(buf, buf + sizeof(T));
    std::memcpy(&v, buf, sizeof(T));
  }
  return v;
}

double load_scalar(const char* p, ScalarType t, bool swap) {
  switch (t) {
    case ScalarType::Int8: return load_raw<std::int8_t>(p, false);
    case ScalarType::UInt8: return load_raw<std::uint8_t>(p, false);
    case ScalarType::Int16: return load_raw<std::int16_t>(p, swap);
    case ScalarType::UInt16: return load_raw<std::uint16_t>(p, swap);
    case ScalarType::Int32: return load_raw<std::int32_t>(p, swap);
    case ScalarType::UInt32: return load_raw<std::uint32_t>(p, swap);
    case ScalarType::Float32: return load_raw<float>(p, swap);
    case ScalarType::Float64: return load_raw<double>(p, swap);
  }
  return 0.0;
}

// Streams values out of the body one scalar at a time regardless of encoding.
class BodyReader {
 public:
  BodyReader(const std::string& data, const Header& h)
      : data_(data), pos_(h.body_offset), line_(h.body_first_line), format_(h.format) {
    swap_ = (format_ == Format::BinaryBig) != (std::endian::native == std::endian::big);
    if (format_ == Format::Ascii) swap_ = false;
  }

  void begin_record() {
    if (format_ != Format::Ascii) return;
    // Each ASCII element instance occupies one line.
    while (true) {
      if (pos_ >= data_.size()) throw PlyParseError("unexpected end of data", line_);
      std::size_t end = data_.find('\n', pos_);
      if (end == std::string::npos) end = data_.size();
      tokens_ = split_ws(std::string_view(data_.data() + pos_, end - pos_));
      record_line_ = line_;
      pos_ = end + 1;
      ++line_;
      if (!tokens_.empty()) break;
    }
    token_ = 0;
  }

  void end_record() {
    if (format_ == Format::Ascii && token_ != tokens_.size()) {
      throw PlyParseError("trailing values in record", record_line_);
    }
  }

  double next(ScalarType t) {
    if (format_ == Format::Ascii) {
      if (token_ >= tokens_.size()) throw PlyParseError("too few values in record", record_line_);
      std::string s(tokens_[token_++]);
      char* end = nullptr;
      double v = std::strtod(s.c_str(), &end);
      if (end == s.c_str() || *end != '\0') {
        throw PlyParseError("bad numeric value '" + s + "'", record_line_);
      }
      return v;
    }
    const std::size_t n = scalar_size(t);
    if (pos_ + n > data_.size()) throw PlyParseError("binary payload truncated", 0);
    double v = load_scalar(data_.data() + pos_, t, swap_);
    pos_ += n;
    return v;
  }

 private:
  const std::string& data_;
  std::size_t pos_;
  std::size_t line_;
  std::size_t record_line_ = 0;
  Format format_;
  bool swap_ = false;
  std::vector<std::string_view> tokens_;
  std::size_t token_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const Element* find_element(const Header& h, std::string_view name) {
  for (const auto& e : h.elements) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

struct Parsed {
  PointCloud cloud;
  std::optional<std::vector<Triangle>> faces;
};

Parsed parse(const std::filesystem::path& path) {
  const std::string data = slurp(path);
  const Header h = parse_header(data);
  const Element* vertex = find_element(h, "vertex");
  if (!vertex) throw PlyUnsupportedError("no 'vertex' element in " + path.string());

  auto index_of = [](const Element& e, std::string_view name) -> int {
    for (std::size_t i = 0; i < e.properties.size(); ++i) {
      if (e.properties[i].name == name && !e.properties[i].is_list) return static_cast<int>(i);
    }
    return -1;
  };
  const int ix = index_of(*vertex, "x");
  const int iy = index_of(*vertex, "y");
  const int iz = index_of(*vertex, "z");
  if (ix < 0 || iy < 0 || iz < 0) {
    throw PlyUnsupportedError("vertex element lacks x/y/z in " + path.string());
  }
  const int i_int = index_of(*vertex, "intensity");
  const int i_beam = index_of(*vertex, "beam_id");
  const int i_step = index_of(*vertex, "azimuth_step");
  const int i_az = index_of(*vertex, "azimuth");
  const int i_range = index_of(*vertex, "range");
  const int i_src = index_of(*vertex, "source");

  Parsed out;
  std::optional<std::size_t> face_prop;
  if (const Element* face = find_element(h, "face")) {
    for (std::size_t i = 0; i < face->properties.size(); ++i) {
      const auto& p = face->properties[i];
      if (p.is_list && (p.name == "vertex_indices" || p.name == "vertex_index")) face_prop = i;
    }
    if (!face_prop) {
      throw PlyUnsupportedError("face element lacks vertex_indices in " + path.string());
    }
    out.faces.emplace();
  }

  BodyReader reader(data, h);
  PointCloud& cloud = out.cloud;
  std::vector<double> row;
  for (const auto& e : h.elements) {
    const bool is_vertex = &e == vertex;
    const bool is_face = e.name == "face";
    if (is_vertex) {
      cloud.points.reserve(e.count);
      if (i_int >= 0) cloud.intensity.reserve(e.count);
    }
    for (std::size_t n = 0; n < e.count; ++n) {
      reader.begin_record();
      row.assign(e.properties.size(), 0.0);
      for (std::size_t pi = 0; pi < e.properties.size(); ++pi) {
        const auto& p = e.properties[pi];
        if (!p.is_list) {
          row[pi] = reader.next(p.type);
          continue;
        }
        const double cnt_d = reader.next(p.count_type);
        if (cnt_d < 0 || cnt_d != std::floor(cnt_d)) throw PlyParseError("bad list count", 0);
        const auto cnt = static_cast<std::size_t>(cnt_d);
        std::vector<std::uint32_t> idx(cnt);
        for (auto& v : idx) {
          const double d = reader.next(p.type);
          if (d < 0) throw PlyParseError("negative vertex index", 0);
          v = static_cast<std::uint32_t>(d);
        }
        if (is_face && face_prop && pi == *face_prop) {
          if (cnt < 3) throw PlyParseError("face with fewer than 3 vertices", 0);
          for (std::size_t k = 1; k + 1 < cnt; ++k) {
            out.faces->push_back({idx[0], idx[k], idx[k + 1]});
          }
        }
      }
      reader.end_record();
      if (is_vertex) {
        cloud.points.emplace_back(row[ix], row[iy], row[iz]);
        if (i_int >= 0) cloud.intensity.push_back(static_cast<float>(row[i_int]));
        if (i_beam >= 0) cloud.beam_id.push_back(static_cast<std::int32_t>(row[i_beam]));
        if (i_step >= 0) cloud.azimuth_step.push_back(static_cast<std::int32_t>(row[i_step]));
        if (i_az >= 0) cloud.azimuth.push_back(row[i_az]);
        if (i_range >= 0) cloud.range.push_back(row[i_range]);
        if (i_src >= 0) {
          cloud.source.push_back(row[i_src] != 0.0 ? PointSource::Side : PointSource::Top);
        }
      }
    }
  }
  return out;
}

template <typename T>
void put_le(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  buf.append(bytes, sizeof(T));
}

void append_double(std::string& buf, double v) {
  char tmp[32];
  auto [ptr, ec] = std::to_chars(tmp, tmp + sizeof(tmp), v);
  buf.append(tmp, ptr);
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

const char* format_line(PlyEncoding enc) {
  return enc == PlyEncoding::Ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
}

}  // namespace

PlyObject read_ply(const std::filesystem::path& path) {
  Parsed p = parse(path);
  if (p.faces) {
    TriangleMesh mesh{std::move(p.cloud.points), std::move(*p.faces)};
    mesh.validate();
    return mesh;
  }
  return std::move(p.cloud);
}

PointCloud read_ply_cloud(const std::filesystem::path& path) {
  return std::move(parse(path).cloud);
}

TriangleMesh read_ply_mesh(const std::filesystem::path& path) {
  Parsed p = parse(path);
  if (!p.faces) throw PlyUnsupportedError("no 'face' element in " + path.string());
  TriangleMesh mesh{std::move(p.cloud.points), std::move(*p.faces)};
  mesh.validate();
  return mesh;
}

void write_ply(const PointCloud& cloud, const std::filesystem::path& path, PlyEncoding encoding) {
  if (!cloud.attributes_consistent()) {
    throw std::invalid_argument("write_ply: attribute length mismatch");
  }
  std::string buf = "ply\n";
  buf += format_line(encoding);
  buf += "element vertex " + std::to_string(cloud.size()) + "\n";
  buf += "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_intensity()) buf += "property float intensity\n";
  if (cloud.has_beam_id()) buf += "property int beam_id\n";
  if (cloud.has_azimuth_step()) buf += "property int azimuth_step\n";
  if (cloud.has_azimuth()) buf += "property double azimuth\n";
  if (cloud.has_range()) buf += "property double range\n";
  if (cloud.has_source()) buf += "property uchar source\n";
  buf += "end_header\n";

  const bool ascii = encoding == PlyEncoding::Ascii;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    if (ascii) {
      append_double(buf, p.x());
      buf += ' ';
      append_double(buf, p.y());
      buf += ' ';
      append_double(buf, p.z());
      if (cloud.has_intensity()) {
        char tmp[32];
        auto [ptr, ec] = std::to_chars(tmp, tmp + sizeof(tmp), cloud.intensity[i]);
        buf += ' ';
        buf.append(tmp, ptr);
      }
      if (cloud.has_beam_id()) buf += ' ' + std::to_string(cloud.beam_id[i]);
      if (cloud.has_azimuth_step()) buf += ' ' + std::to_string(cloud.azimuth_step[i]);
      if (cloud.has_azimuth()) {
        buf += ' ';
        append_double(buf, cloud.azimuth[i]);
      }
      if (cloud.has_range()) {
        buf += ' ';
        append_double(buf, cloud.range[i]);
      }
      if (cloud.has_source()) buf += ' ' + std::to_string(static_cast<int>(cloud.source[i]));
      buf += '\n';
    } else {
      put_le(buf, p.x());
      put_le(buf, p.y());
      put_le(buf, p.z());
      if (cloud.has_intensity()) put_le(buf, cloud.intensity[i]);
      if (cloud.has_beam_id()) put_le(buf, cloud.beam_id[i]);
      if (cloud.has_azimuth_step()) put_le(buf, cloud.azimuth_step[i]);
      if (cloud.has_azimuth()) put_le(buf, cloud.azimuth[i]);
      if (cloud.has_range()) put_le(buf, cloud.range[i]);
      if (cloud.has_source()) put_le(buf, static_cast<std::uint8_t>(cloud.source[i]));
    }
  }
  write_file(path, buf);
}

void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path, PlyEncoding encoding) {
  mesh.validate();
  std::string buf = "ply\n";
  buf += format_line(encoding);
  buf += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  buf += "property double x\nproperty double y\nproperty double z\n";
  buf += "element face " + std::to_string(mesh.triangles.size()) + "\n";
  buf += "property list uchar int vertex_indices\n";
  buf += "end_header\n";
  const bool ascii = encoding == PlyEncoding::Ascii;
  for (const auto& v : mesh.vertices) {
    if (ascii) {
      append_double(buf, v.x());
      buf += ' ';
      append_double(buf, v.y());
      buf += ' ';
      append_double(buf, v.z());
      buf += '\n';
    } else {
      put_le(buf, v.x());
      put_le(buf, v.y());
      put_le(buf, v.z());
    }
  }
  for (const auto& t : mesh.triangles) {
    if (ascii) {
      buf += "3 " + std::to_string(t[0]) + ' ' + std::to_string(t[1]) + ' ' + std::to_string(t[2]) + '\n';
    } else {
      put_le(buf, std::uint8_t{3});
      for (auto idx : t) put_le(buf, static_cast<std::int32_t>(idx));
    }
  }
  write_file(path, buf);
}

}  // namespace resim
