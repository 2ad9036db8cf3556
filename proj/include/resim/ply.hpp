// PLY 1.0 reader/writer for point clouds and triangle meshes.
//
// Point clouds are written with x, y, z as float64 and whichever optional
// attributes are present: intensity (float32), beam_id (int32),
// azimuth_step (int32), azimuth (float64), range (float64), source (uint8,
// 0 = top, 1 = side). Meshes carry x, y, z and a `vertex_indices` list per
// face. The reader accepts any scalar type for known properties and ignores
// unknown optional ones.
#pragma once

#include "resim/geometry.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>

namespace resim {

enum class PlyEncoding { Ascii, BinaryLittleEndian };

/// Malformed file. `line()` is the 1-based header/body line for ASCII
/// content, or 0 when the error is inside a binary payload.
class PlyParseError : public std::runtime_error {
 public:
  PlyParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed PLY that lacks something we need (e.g. no `x` property) or
/// uses a type we do not understand.
class PlyUnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using PlyObject = std::variant<PointCloud, TriangleMesh>;

/// Returns a TriangleMesh when the file declares a `face` element, a
/// PointCloud otherwise.
PlyObject read_ply(const std::filesystem::path& path);
PointCloud read_ply_cloud(const std::filesystem::path& path);
TriangleMesh read_ply_mesh(const std::filesystem::path& path);

void write_ply(const PointCloud& cloud, const std::filesystem::path& path,
               PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);
void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path,
               PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

}  // namespace resim
