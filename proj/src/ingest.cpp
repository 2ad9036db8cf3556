#include "resim/ingest.hpp"

#include "resim/errors.hpp"
#include "resim/kdtree.hpp"
#include "resim/ply.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace resim {

std::string_view to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::Vehicle: return "Vehicle";
    case ObjectClass::Pedestrian: return "Pedestrian";
    case ObjectClass::Cyclist: return "Cyclist";
    case ObjectClass::Other: return "Other";
  }
  return "Other";
}

std::optional<ObjectClass> parse_object_class(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "vehicle" || lower == "car") return ObjectClass::Vehicle;
  if (lower == "pedestrian") return ObjectClass::Pedestrian;
  if (lower == "cyclist") return ObjectClass::Cyclist;
  if (lower == "other") return ObjectClass::Other;
  return std::nullopt;
}

bool BoxLabel::contains(const Vec3& p) const {
  const Vec3 d = p - center;
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double lx = c * d.x() + s * d.y();
  const double ly = -s * d.x() + c * d.y();
  return std::abs(lx) <= 0.5 * size.x() && std::abs(ly) <= 0.5 * size.y() &&
         std::abs(d.z()) <= 0.5 * size.z();
}

PointCloud remove_dynamic_points(const Frame& frame, std::span<const BoxLabel> boxes) {
  std::vector<const BoxLabel*> dynamic;
  for (const auto& b : boxes) {
    if (!b.is_dynamic) continue;
    if (b.frame != LabelFrame::Sensor) {
      throw std::invalid_argument(
          "remove_dynamic_points: box is world-frame but the cloud is sensor-frame");
    }
    dynamic.push_back(&b);
  }
  std::vector<std::size_t> keep;
  keep.reserve(frame.cloud.size());
  for (std::size_t i = 0; i < frame.cloud.size(); ++i) {
    const Vec3& p = frame.cloud.points[i];
    const bool inside = std::any_of(dynamic.begin(), dynamic.end(),
                                    [&](const BoxLabel* b) { return b->contains(p); });
    if (!inside) keep.push_back(i);
  }
  return frame.cloud.subset(keep);
}

RigidTransform to_reference(const Pose6D& reference, const Pose6D& pose) {
  return compose(pose_to_transform(reference).inverse(), pose_to_transform(pose));
}

namespace {

std::vector<const Frame*> ordered_frames(std::span<const Frame> frames) {
  if (frames.empty()) throw std::invalid_argument("empty frame sequence");
  std::vector<const Frame*> order;
  order.reserve(frames.size());
  for (const auto& f : frames) {
    if (!f.sensor_pose.is_finite()) throw std::invalid_argument("frame pose is not finite");
    order.push_back(&f);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const Frame* a, const Frame* b) { return a->frame_index < b->frame_index; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->frame_index == order[i - 1]->frame_index) {
      throw std::invalid_argument("duplicate frame_index " +
                                  std::to_string(order[i]->frame_index));
    }
  }
  return order;
}

}  // namespace

PointCloud register_frames(std::span<const Frame> frames) {
  const auto order = ordered_frames(frames);
  const Pose6D& ref = order.front()->sensor_pose;
  PointCloud out;
  for (const Frame* f : order) {
    PointCloud local = f->cloud;
    if (!local.has_source()) local.source.assign(local.size(), PointSource::Top);
    local.transform(to_reference(ref, f->sensor_pose));
    out.append(local);
  }
  return out;
}

std::vector<std::size_t> outlier_inliers(const PointCloud& cloud, std::size_t k, double sigma_mult) {
  std::vector<std::size_t> keep;
  if (k < 1 || cloud.size() <= k) {
    keep.resize(cloud.size());
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    return keep;
  }
  const NearestNeighborIndex index(cloud.points);
  const std::size_t n = cloud.size();
  std::vector<double> mean_dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto nn = index.knn(cloud.points[i], k + 1);
    auto self = std::find_if(nn.begin(), nn.end(), [i](const Neighbor& nb) { return nb.index == i; });
    if (self != nn.end()) {
      nn.erase(self);
    } else {
      nn.pop_back();  // more than k exact duplicates; all at distance zero
    }
    double sum = 0.0;
    for (const auto& nb : nn) sum += std::sqrt(nb.distance_sq);
    mean_dist[i] = sum / static_cast<double>(nn.size());
  }
  const double mean = std::accumulate(mean_dist.begin(), mean_dist.end(), 0.0) / n;
  double var = 0.0;
  for (double d : mean_dist) var += (d - mean) * (d - mean);
  const double stddev = std::sqrt(var / n);
  const double threshold = mean + sigma_mult * stddev;
  // Rounding slack so that clouds with identical neighborhoods keep every point.
  const double slack = 1e-9 * std::max(1.0, std::abs(threshold));
  keep.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (mean_dist[i] <= threshold + slack) keep.push_back(i);
  }
  return keep;
}

PointCloud filter_outliers(const PointCloud& cloud, std::size_t k, double sigma_mult) {
  return cloud.subset(outlier_inliers(cloud, k, sigma_mult));
}

RayBundle build_ray_bundle(std::span<const Frame> frames, double side_weight) {
  if (!(side_weight > 0.0)) throw std::invalid_argument("side_weight must be positive");
  const auto order = ordered_frames(frames);
  const Pose6D& ref = order.front()->sensor_pose;
  RayBundle bundle;
  for (const Frame* f : order) {
    const RigidTransform t = to_reference(ref, f->sensor_pose);
    const Vec3 origin = t.translation();
    const auto& cloud = f->cloud;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Vec3 p = t.apply(cloud.points[i]);
      const Vec3 d = p - origin;
      const double depth = d.norm();
      if (!(depth > 0.0)) {
        ++bundle.skipped_zero_range;
        continue;
      }
      LidarRay ray;
      ray.origin = origin;
      ray.direction = d / depth;
      ray.measured_depth = depth;
      ray.source = cloud.has_source() ? cloud.source[i] : PointSource::Top;
      ray.weight = ray.source == PointSource::Side ? side_weight : 1.0;
      bundle.rays.push_back(ray);
    }
  }
  return bundle;
}

std::vector<BoxLabel> read_labels(const std::filesystem::path& path, int frame_index) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open label file " + path.string());
  std::vector<BoxLabel> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::string cls;
    BoxLabel b;
    int dyn = 0;
    double cx, cy, cz, l, w, h, yaw;
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (!(ss >> cls >> cx >> cy >> cz >> l >> w >> h >> yaw >> dyn)) {
      throw InputError(where + ": expected 'class cx cy cz length width height yaw dynamic_flag'");
    }
    std::string extra;
    if (ss >> extra) throw InputError(where + ": trailing field '" + extra + "'");
    auto parsed = parse_object_class(cls);
    if (!parsed) throw InputError(where + ": unknown class '" + cls + "'");
    if (!(l > 0 && w > 0 && h > 0)) throw InputError(where + ": box size must be positive");
    b.class_name = *parsed;
    b.center = {cx, cy, cz};
    b.size = {l, w, h};
    b.yaw = yaw;
    b.is_dynamic = dyn != 0;
    b.frame_index = frame_index;
    out.push_back(b);
  }
  return out;
}

void write_labels(std::span<const BoxLabel> labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << "# class cx cy cz length width height yaw dynamic\n";
  char buf[256];
  for (const auto& b : labels) {
    std::snprintf(buf, sizeof(buf), "%s %.6f %.6f %.6f %.6f %.6f %.6f %.6f %d\n",
                  std::string(to_string(b.class_name)).c_str(), b.center.x(), b.center.y(),
                  b.center.z(), b.size.x(), b.size.y(), b.size.z(), b.yaw, b.is_dynamic ? 1 : 0);
    out << buf;
  }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("manifest " + path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  if (!j.contains("frames") || !j["frames"].is_array()) {
    throw InputError("manifest.frames: missing or not a list");
  }
  std::vector<ManifestEntry> out;
  std::size_t i = 0;
  for (const auto& f : j["frames"]) {
    const std::string field = "manifest.frames[" + std::to_string(i) + "]";
    if (!f.contains("cloud") || !f["cloud"].is_string()) {
      throw InputError(field + ".cloud: missing");
    }
    if (!f.contains("pose") || !f["pose"].is_array() || f["pose"].size() != 6) {
      throw InputError(field + ".pose: expected [x, y, z, roll, yaw, pitch]");
    }
    ManifestEntry e;
    e.cloud = resolve(f["cloud"].get<std::string>());
    const auto& p = f["pose"];
    try {
      e.pose = make_pose(p[0].get<double>(), p[1].get<double>(), p[2].get<double>(),
                         p[3].get<double>(), p[4].get<double>(), p[5].get<double>());
    } catch (const nlohmann::json::exception&) {
      throw InputError(field + ".pose: values must be numbers");
    }
    if (f.contains("labels") && f["labels"].is_string()) {
      e.labels = resolve(f["labels"].get<std::string>());
    }
    e.timestamp = f.value("timestamp", static_cast<double>(i));
    e.frame_index = f.value("frame_index", static_cast<int>(i));
    out.push_back(std::move(e));
    ++i;
  }
  return out;
}

void write_manifest(std::span<const ManifestEntry> entries, const std::filesystem::path& path) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json f;
    f["cloud"] = e.cloud.string();
    f["pose"] = {e.pose.x, e.pose.y, e.pose.z, e.pose.roll, e.pose.yaw, e.pose.pitch};
    if (e.labels) f["labels"] = e.labels->string();
    f["timestamp"] = e.timestamp;
    f["frame_index"] = e.frame_index;
    frames.push_back(f);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << nlohmann::json{{"frames", frames}}.dump(2) << "\n";
}

LoadedSequence load_sequence(const std::filesystem::path& manifest_path) {
  LoadedSequence seq;
  for (const auto& e : read_manifest(manifest_path)) {
    Frame f;
    try {
      f.cloud = read_ply_cloud(e.cloud);
    } catch (const std::exception& ex) {
      throw InputError("frame " + std::to_string(e.frame_index) + " cloud: " + ex.what());
    }
    f.sensor_pose = e.pose;
    f.timestamp = e.timestamp;
    f.frame_index = e.frame_index;
    seq.frames.push_back(std::move(f));
    seq.labels.push_back(e.labels ? read_labels(*e.labels, e.frame_index)
                                  : std::vector<BoxLabel>{});
  }
  return seq;
}

}  // namespace resim
