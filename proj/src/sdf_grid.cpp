#include "resim/sdf_grid.hpp"

#include "resim/errors.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace resim {

void GridSpec::validate() const {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw std::invalid_argument("grid voxel_size must be positive");
  }
  for (int d : dims) {
    if (d < 2) throw std::invalid_argument("grid dims must be >= 2 per axis");
  }
  if (!origin.allFinite()) throw std::invalid_argument("grid origin must be finite");
}

GridSpec GridSpec::covering(const Aabb& box, double voxel_size, double padding) {
  if (!box.valid()) throw std::invalid_argument("cannot cover an empty box");
  GridSpec spec;
  spec.voxel_size = voxel_size;
  const Vec3 lo = box.min - Vec3::Constant(padding);
  const Vec3 hi = box.max + Vec3::Constant(padding);
  // Snap the origin to the voxel lattice so grids from different inputs align.
  for (int a = 0; a < 3; ++a) {
    spec.origin[a] = std::floor(lo[a] / voxel_size) * voxel_size;
    const double span = hi[a] - spec.origin[a];
    spec.dims[a] = std::max(2, static_cast<int>(std::ceil(span / voxel_size)) + 1);
  }
  spec.validate();
  return spec;
}

SdfGrid::SdfGrid(const GridSpec& spec, double fill) : spec_(spec) {
  spec_.validate();
  values_.assign(spec_.node_count(), fill);
}

SdfGrid SdfGrid::from_function(const GridSpec& spec,
                               const std::function<double(const Vec3&)>& f) {
  SdfGrid g(spec, 0.0);
  for (int k = 0; k < spec.dims[2]; ++k) {
    for (int j = 0; j < spec.dims[1]; ++j) {
      for (int i = 0; i < spec.dims[0]; ++i) g.at(i, j, k) = f(g.node_position(i, j, k));
    }
  }
  return g;
}

TrilinearStencil trilinear_stencil(const GridSpec& spec, const Vec3& x) {
  TrilinearStencil st;
  const Vec3 lo = spec.origin;
  const Vec3 hi = spec.max_corner();
  const Vec3 clamped = x.cwiseMax(lo).cwiseMin(hi);
  st.outside_distance = (x - clamped).norm();
  st.extrapolated = st.outside_distance > 0.0;

  std::array<int, 3> base{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const double u = (clamped[a] - lo[a]) / spec.voxel_size;
    int i0 = static_cast<int>(std::floor(u));
    i0 = std::clamp(i0, 0, spec.dims[a] - 2);
    base[a] = i0;
    frac[a] = std::clamp(u - i0, 0.0, 1.0);
  }
  const std::size_t nx = static_cast<std::size_t>(spec.dims[0]);
  const std::size_t nxy = nx * static_cast<std::size_t>(spec.dims[1]);
  const std::size_t b = static_cast<std::size_t>(base[0]) + nx * base[1] + nxy * base[2];
  int n = 0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? frac[2] : 1.0 - frac[2];
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? frac[1] : 1.0 - frac[1];
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? frac[0] : 1.0 - frac[0];
        st.node[n] = b + dx + nx * dy + nxy * dz;
        st.weight[n] = wx * wy * wz;
        ++n;
      }
    }
  }
  return st;
}

SdfSample sample_sdf(const SdfGrid& grid, const Vec3& x) {
  const auto st = trilinear_stencil(grid.spec(), x);
  return {st.evaluate(grid.values()), st.extrapolated};
}

namespace {

std::string num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace

void write_sdf_grid(const SdfGrid& grid, const std::filesystem::path& path) {
  const auto& s = grid.spec();
  std::string header = "RESIM_SDF 1\n";
  header += "origin " + num(s.origin.x()) + " " + num(s.origin.y()) + " " + num(s.origin.z()) + "\n";
  header += "voxel_size " + num(s.voxel_size) + "\n";
  header += "dims " + std::to_string(s.dims[0]) + " " + std::to_string(s.dims[1]) + " " +
            std::to_string(s.dims[2]) + "\n";
  header += "sign positive_outside\n";
  header += "end_header\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(grid.values().data()),
              static_cast<std::streamsize>(grid.values().size() * sizeof(double)));
  } else {
    for (double v : grid.values()) {
      char b[8];
      std::memcpy(b, &v, 8);
      std::reverse(b, b + 8);
      out.write(b, 8);
    }
  }
  if (!out) throw InputError("write failed for " + path.string());
}

SdfGrid read_sdf_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  GridSpec spec;
  bool saw_magic = false;
  bool saw_origin = false, saw_voxel = false, saw_dims = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "RESIM_SDF") {
      saw_magic = true;
    } else if (key == "origin") {
      ss >> spec.origin.x() >> spec.origin.y() >> spec.origin.z();
      saw_origin = !ss.fail();
    } else if (key == "voxel_size") {
      ss >> spec.voxel_size;
      saw_voxel = !ss.fail();
    } else if (key == "dims") {
      ss >> spec.dims[0] >> spec.dims[1] >> spec.dims[2];
      saw_dims = !ss.fail();
    } else if (key == "sign") {
      std::string tag;
      ss >> tag;
      if (tag != "positive_outside") throw InputError(path.string() + ": unsupported sign tag " + tag);
    } else if (key == "end_header") {
      break;
    } else {
      throw InputError(path.string() + ": unknown header key '" + key + "'");
    }
  }
  if (!saw_magic || !saw_origin || !saw_voxel || !saw_dims) {
    throw InputError(path.string() + ": incomplete SDF grid header");
  }
  SdfGrid grid(spec, 0.0);
  auto& v = grid.values();
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != v.size() * sizeof(double)) {
    throw InputError(path.string() + ": truncated SDF payload");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (double& x : v) {
      char b[8];
      std::memcpy(b, &x, 8);
      std::reverse(b, b + 8);
      std::memcpy(&x, b, 8);
    }
  }
  return grid;
}

}  // namespace resim
