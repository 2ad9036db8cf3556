#include "resim/scene_replay.hpp"

#include "resim/errors.hpp"
#include "resim/log.hpp"
#include "resim/ply.hpp"
#include "resim/shapes.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace resim {

void Asset::validate() const {
  if (!(size.array() > 0.0).all()) {
    throw std::invalid_argument("asset " + asset_id + ": size must be positive");
  }
  mesh.validate();
  if (mesh.vertices.empty()) throw std::invalid_argument("asset " + asset_id + ": empty mesh");
  const Vec3 extent = bounds_of(mesh.vertices).extent();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(extent[a] - size[a]) > 0.05 * size[a]) {
      throw std::invalid_argument("asset " + asset_id +
                                  ": mesh bounds differ from the declared size by more than 5%");
    }
  }
}

namespace {

const Pose6D& pose_in(const std::map<int, Pose6D>& poses, int t, const std::string& what) {
  auto it = poses.find(t);
  if (it == poses.end()) {
    throw NotFoundError(what + " has no pose for frame " + std::to_string(t));
  }
  return it->second;
}

}  // namespace

Pose6D ego_pose_at(const EgoTrack& ego, int t, PoseUpdate mode) {
  const Pose6D& l0 = pose_in(ego.poses, 0, "ego track");
  const Pose6D& lt = pose_in(ego.poses, t, "ego track");
  if (mode == PoseUpdate::Componentwise) return pose_difference(lt, l0);
  return transform_to_pose(compose(pose_to_transform(l0).inverse(), pose_to_transform(lt)));
}

Pose6D target_pose_at(const TrackedObject& object, const EgoTrack& ego, int t, PoseUpdate mode) {
  const Pose6D& rel = pose_in(object.relative_poses, t, "object " + object.object_id);
  const Pose6D p_ego = ego_pose_at(ego, t, mode);
  if (mode == PoseUpdate::Componentwise) return pose_sum(rel, p_ego);
  return transform_to_pose(compose(pose_to_transform(p_ego), pose_to_transform(rel)));
}

void SizeMap::validate() const {
  for (const auto& [cls, params] : classes) {
    for (const auto& p : params) {
      if (!(p.scale > 0.0) || !std::isfinite(p.offset)) {
        throw std::invalid_argument("size map for " + std::string(to_string(cls)) +
                                    ": scale must be > 0 and offset finite");
      }
    }
  }
}

Vec3 map_size(const Vec3& size, ObjectClass class_name, const SizeMap& map) {
  auto it = map.classes.find(class_name);
  if (it == map.classes.end()) {
    warn("size map has no entry for class " + std::string(to_string(class_name)) +
         "; size left unchanged");
    return size;
  }
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    out[a] = std::max(kMinMappedSize, it->second[a].scale * size[a] + it->second[a].offset);
  }
  return out;
}

namespace {

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return m;
}

std::map<ObjectClass, std::array<std::vector<double>, 3>> sizes_by_class(
    std::span<const BoxLabel> labels) {
  std::map<ObjectClass, std::array<std::vector<double>, 3>> out;
  for (const auto& b : labels) {
    for (int a = 0; a < 3; ++a) out[b.class_name][a].push_back(b.size[a]);
  }
  return out;
}

}  // namespace

SizeMap fit_size_map(std::span<const BoxLabel> source, std::span<const BoxLabel> target) {
  const auto src = sizes_by_class(source);
  const auto dst = sizes_by_class(target);
  SizeMap map;
  for (const auto& [cls, dims] : src) {
    auto it = dst.find(cls);
    if (it == dst.end()) continue;
    std::array<AffineParam, 3> params;
    for (int a = 0; a < 3; ++a) {
      const Moments s = moments(dims[a]);
      const Moments t = moments(it->second[a]);
      params[a].scale = s.stddev > 0.0 && t.stddev > 0.0 ? t.stddev / s.stddev : 1.0;
      params[a].offset = t.mean - params[a].scale * s.mean;
    }
    map.classes[cls] = params;
  }
  return map;
}

const Asset& match_asset(std::span<const Asset> library, ObjectClass class_name,
                         const Vec3& size) {
  const Asset* best = nullptr;
  double best_d = 0.0;
  for (const auto& a : library) {
    if (a.class_name != class_name) continue;
    const double d = (a.size - size).norm();
    if (!best || d < best_d || (d == best_d && a.asset_id < best->asset_id)) {
      best = &a;
      best_d = d;
    }
  }
  if (!best) {
    std::set<std::string> names;
    for (const auto& a : library) names.insert(std::string(to_string(a.class_name)));
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw NotFoundError("no asset of class " + std::string(to_string(class_name)) +
                        " in the library; available classes: " +
                        (list.empty() ? std::string("none") : list));
  }
  return *best;
}

TriangleMesh compose_frame(const TriangleMesh& background, std::span<const Placement> placements) {
  TriangleMesh out = background;
  for (const auto& p : placements) {
    TriangleMesh m = p.asset.mesh;
    const Vec3 scale = p.size.cwiseQuotient(p.asset.size);
    for (auto& v : m.vertices) v = v.cwiseProduct(scale);
    m.transform(pose_to_transform(p.pose));
    out.append(m);
  }
  return out;
}

std::string export_labels(std::span<const Placement> placements, int frame,
                          const Pose6D& sensor_pose) {
  std::vector<const Placement*> order;
  for (const auto& p : placements) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(),
                   [](const Placement* a, const Placement* b) { return a->object_id < b->object_id; });
  const RigidTransform world_to_sensor = pose_to_transform(sensor_pose).inverse();
  std::string out = "# frame " + std::to_string(frame) + ": class l w h cx cy cz yaw\n";
  char buf[320];
  for (const Placement* p : order) {
    const RigidTransform local = compose(world_to_sensor, pose_to_transform(p->pose));
    const Vec3 c = local.translation();
    const Vec3 heading = local.rotation().col(0);
    const double yaw = std::atan2(heading.y(), heading.x());
    // + 0.0 turns a negative zero into a positive one
    std::snprintf(buf, sizeof(buf), "%s %.6f %.6f %.6f %.6f %.6f %.6f %.6f\n",
                  std::string(to_string(p->asset.class_name)).c_str(), p->size.x(), p->size.y(),
                  p->size.z(), c.x() + 0.0, c.y() + 0.0, c.z() + 0.0, yaw + 0.0);
    out += buf;
  }
  return out;
}

std::vector<ExportedLabel> read_exported_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open label file " + path.string());
  std::vector<ExportedLabel> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    std::istringstream ss(line);
    std::string cls, extra;
    ExportedLabel l;
    double v[7];
    if (!(ss >> cls >> v[0] >> v[1] >> v[2] >> v[3] >> v[4] >> v[5] >> v[6])) {
      throw InputError(where + ": expected 'class l w h cx cy cz yaw'");
    }
    if (ss >> extra) throw InputError(where + ": trailing field '" + extra + "'");
    auto parsed = parse_object_class(cls);
    if (!parsed) throw InputError(where + ": unknown class '" + cls + "'");
    if (!(v[0] > 0 && v[1] > 0 && v[2] > 0)) throw InputError(where + ": box size must be positive");
    l.class_name = *parsed;
    l.size = {v[0], v[1], v[2]};
    l.bottom_center = {v[3], v[4], v[5]};
    l.yaw = v[6];
    out.push_back(l);
  }
  return out;
}

std::vector<Asset> default_asset_library() {
  struct Spec {
    const char* id;
    ObjectClass cls;
    Vec3 size;
  };
  const Spec specs[] = {
      {"vehicle-compact", ObjectClass::Vehicle, {3.9, 1.7, 1.5}},
      {"vehicle-sedan", ObjectClass::Vehicle, {4.6, 1.85, 1.5}},
      {"vehicle-suv", ObjectClass::Vehicle, {4.9, 2.0, 1.8}},
      {"vehicle-van", ObjectClass::Vehicle, {5.3, 2.05, 2.2}},
      {"vehicle-truck", ObjectClass::Vehicle, {8.5, 2.5, 3.2}},
      {"pedestrian-adult", ObjectClass::Pedestrian, {0.7, 0.7, 1.75}},
      {"pedestrian-child", ObjectClass::Pedestrian, {0.5, 0.5, 1.2}},
      {"cyclist-bike", ObjectClass::Cyclist, {1.8, 0.7, 1.7}},
      {"other-cone", ObjectClass::Other, {0.4, 0.4, 0.7}},
      {"other-barrier", ObjectClass::Other, {2.0, 0.5, 1.0}},
  };
  std::vector<Asset> out;
  for (const auto& s : specs) out.push_back({s.id, s.cls, s.size, make_grounded_box(s.size)});
  return out;
}

std::vector<Asset> read_asset_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open asset manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("asset manifest " + path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("assets") || !j["assets"].is_array()) {
    throw InputError("assets: expected an array in " + path.string());
  }
  std::vector<Asset> out;
  for (std::size_t i = 0; i < j["assets"].size(); ++i) {
    const auto& a = j["assets"][i];
    const std::string field = "assets[" + std::to_string(i) + "]";
    Asset asset;
    try {
      asset.asset_id = a.at("id").get<std::string>();
      const auto cls = parse_object_class(a.at("class").get<std::string>());
      if (!cls) throw InputError(field + ".class: unknown class");
      asset.class_name = *cls;
      const auto size = a.at("size").get<std::vector<double>>();
      if (size.size() != 3) throw InputError(field + ".size: expected [l, w, h]");
      asset.size = {size[0], size[1], size[2]};
      if (a.contains("mesh")) {
        std::filesystem::path mp(a["mesh"].get<std::string>());
        if (mp.is_relative()) mp = path.parent_path() / mp;
        asset.mesh = read_ply_mesh(mp);
      } else {
        asset.mesh = make_grounded_box(asset.size);
      }
      asset.validate();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(field + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw InputError(field + ": " + e.what());
    }
    out.push_back(std::move(asset));
  }
  return out;
}

namespace {

bool content_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first != std::string::npos && line[first] != '#';
}

bool parse_pose_line(std::istringstream& ss, int& t, Pose6D& p) {
  double v[6];
  if (!(ss >> t >> v[0] >> v[1] >> v[2] >> v[3] >> v[4] >> v[5])) return false;
  p = make_pose(v[0], v[1], v[2], v[3], v[4], v[5]);
  return true;
}

void write_pose_line(std::ostream& out, int t, const Pose6D& p) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d %.17g %.17g %.17g %.17g %.17g %.17g\n", t, p.x, p.y, p.z,
                p.roll, p.yaw, p.pitch);
  out << buf;
}

}  // namespace

std::vector<TrackedObject> read_tracks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open track file " + path.string());
  std::vector<TrackedObject> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!content_line(line)) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    std::istringstream ss(line);
    std::string head;
    ss >> head;
    if (head == "object") {
      TrackedObject o;
      std::string cls;
      double l, w, h;
      if (!(ss >> o.object_id >> cls >> l >> w >> h)) {
        throw InputError(where + ": expected 'object ID CLASS L W H'");
      }
      const auto parsed = parse_object_class(cls);
      if (!parsed) throw InputError(where + ": unknown class '" + cls + "'");
      if (!(l > 0 && w > 0 && h > 0)) throw InputError(where + ": object size must be positive");
      o.class_name = *parsed;
      o.size = {l, w, h};
      out.push_back(std::move(o));
      continue;
    }
    if (out.empty()) throw InputError(where + ": pose line before any 'object' line");
    std::istringstream pose_ss(line);
    int t = 0;
    Pose6D p;
    if (!parse_pose_line(pose_ss, t, p)) throw InputError(where + ": expected 't x y z roll yaw pitch'");
    if (!out.back().relative_poses.emplace(t, p).second) {
      throw InputError(where + ": duplicate frame " + std::to_string(t));
    }
  }
  return out;
}

void write_tracks(std::span<const TrackedObject> objects, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << "# object ID CLASS L W H, then t x y z roll yaw pitch per frame\n";
  char buf[256];
  for (const auto& o : objects) {
    std::snprintf(buf, sizeof(buf), "object %s %s %.17g %.17g %.17g\n", o.object_id.c_str(),
                  std::string(to_string(o.class_name)).c_str(), o.size.x(), o.size.y(), o.size.z());
    out << buf;
    for (const auto& [t, p] : o.relative_poses) write_pose_line(out, t, p);
  }
}

EgoTrack read_ego_track(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open ego track " + path.string());
  EgoTrack ego;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!content_line(line)) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    std::istringstream ss(line);
    int t = 0;
    Pose6D p;
    if (!parse_pose_line(ss, t, p)) throw InputError(where + ": expected 't x y z roll yaw pitch'");
    if (!ego.poses.emplace(t, p).second) {
      throw InputError(where + ": duplicate frame " + std::to_string(t));
    }
  }
  if (!ego.poses.count(0)) throw InputError(path.string() + ": ego track has no frame 0");
  return ego;
}

void write_ego_track(const EgoTrack& ego, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << "# t x y z roll yaw pitch\n";
  for (const auto& [t, p] : ego.poses) write_pose_line(out, t, p);
}

namespace {
constexpr const char* kDimNames[3] = {"length", "width", "height"};
}

SizeMap read_size_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open size map " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("size map " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw InputError("size map " + path.string() + ": expected an object");
  SizeMap map;
  for (const auto& [name, dims] : j.items()) {
    const auto cls = parse_object_class(name);
    if (!cls) throw InputError("size_map." + name + ": unknown class");
    std::array<AffineParam, 3> params;
    for (int a = 0; a < 3; ++a) {
      if (!dims.contains(kDimNames[a])) continue;
      try {
        const auto ab = dims[kDimNames[a]].get<std::vector<double>>();
        if (ab.size() != 2) throw InputError("");
        params[a] = {ab[0], ab[1]};
      } catch (const std::exception&) {
        throw InputError("size_map." + name + "." + kDimNames[a] + ": expected [scale, offset]");
      }
    }
    map.classes[*cls] = params;
  }
  try {
    map.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  return map;
}

void write_size_map(const SizeMap& map, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [cls, params] : map.classes) {
    auto& entry = j[std::string(to_string(cls))];
    for (int a = 0; a < 3; ++a) entry[kDimNames[a]] = {params[a].scale, params[a].offset};
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace resim
