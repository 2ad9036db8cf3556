#include "resim/lidar_sim.hpp"

#include "resim/errors.hpp"
#include "resim/parallel.hpp"
#include "resim/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace resim {

void SensorProfile::validate() const {
  if (channels < 1) throw std::invalid_argument("profile " + name + ": channels must be >= 1");
  if (!(vfov_min_deg < vfov_max_deg)) {
    throw std::invalid_argument("profile " + name + ": vfov_min must be below vfov_max");
  }
  if (!(hfov_min_deg < hfov_max_deg) || hfov_max_deg - hfov_min_deg > 360.0 + 1e-9) {
    throw std::invalid_argument("profile " + name + ": bad horizontal field of view");
  }
  if (!(rotation_rate_hz > 0.0) || !(points_per_second > 0.0)) {
    throw std::invalid_argument("profile " + name + ": rotation rate and point rate must be > 0");
  }
  if (!(max_range > 0.0)) throw std::invalid_argument("profile " + name + ": max_range must be > 0");
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) {
    throw std::invalid_argument("profile " + name + ": drop_rate must be in [0, 1)");
  }
  if (!(range_noise_sigma >= 0.0)) {
    throw std::invalid_argument("profile " + name + ": range_noise_sigma must be >= 0");
  }
  if (elevation_override_deg) {
    if (elevation_override_deg->size() != static_cast<std::size_t>(channels)) {
      throw std::invalid_argument("profile " + name + ": elevation_override has " +
                                  std::to_string(elevation_override_deg->size()) +
                                  " entries for " + std::to_string(channels) + " channels");
    }
    for (double e : *elevation_override_deg) {
      if (e < vfov_min_deg || e > vfov_max_deg) {
        throw std::invalid_argument("profile " + name + ": elevation_override outside the vFoV");
      }
    }
  }
}

int SensorProfile::azimuth_steps_per_rotation() const {
  const double per_channel = points_per_second / rotation_rate_hz / channels;
  return std::max(1, static_cast<int>(std::lround(per_channel)));
}

double SensorProfile::azimuth_step_rad() const {
  return 2.0 * kPi / azimuth_steps_per_rotation();
}

std::vector<double> SensorProfile::azimuths() const {
  const int n = azimuth_steps_per_rotation();
  const double span = hfov_max_deg - hfov_min_deg;
  const double step_deg = 360.0 / n;
  const int m = span >= 360.0 - 1e-9
                    ? n
                    : std::max(1, static_cast<int>(std::ceil(span / step_deg - 1e-9)));
  std::vector<double> out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) out[j] = deg_to_rad(hfov_min_deg) + j * azimuth_step_rad();
  return out;
}

std::vector<double> beam_pattern(const SensorProfile& profile) {
  profile.validate();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(profile.channels));
  if (profile.elevation_override_deg) {
    for (double e : *profile.elevation_override_deg) out.push_back(deg_to_rad(e));
    return out;
  }
  if (profile.channels == 1) {
    out.push_back(deg_to_rad(0.5 * (profile.vfov_min_deg + profile.vfov_max_deg)));
    return out;
  }
  const double span = profile.vfov_max_deg - profile.vfov_min_deg;
  for (int c = 0; c < profile.channels; ++c) {
    out.push_back(deg_to_rad(profile.vfov_min_deg + span * c / (profile.channels - 1)));
  }
  out.back() = deg_to_rad(profile.vfov_max_deg);
  return out;
}

Vec3 spherical_to_point(double elevation, double azimuth, double range) {
  const double ce = std::cos(elevation);
  return {range * ce * std::cos(azimuth), range * ce * std::sin(azimuth),
          range * std::sin(elevation)};
}

double elevation_of(const Vec3& p) { return std::atan2(p.z(), std::hypot(p.x(), p.y())); }

SimulatedScan cast_scan(const Bvh& scene, const SensorProfile& profile,
                        const Pose6D& platform_pose, std::uint64_t seed, int threads) {
  const auto elevations = beam_pattern(profile);
  const auto azimuths = profile.azimuths();
  const RigidTransform sensor =
      compose(pose_to_transform(platform_pose), pose_to_transform(profile.mount));
  const Vec3 origin = sensor.translation();
  const std::size_t n_ch = elevations.size();
  const std::size_t n_az = azimuths.size();
  const std::size_t n = n_ch * n_az;
  const CounterRng noise_rng(seed, 0x401535);
  const CounterRng drop_rng(seed, 0xD209);

  enum class Outcome : std::uint8_t { Miss, Dropped, Hit };
  std::vector<Outcome> outcome(n, Outcome::Miss);
  std::vector<double> ranges(n, 0.0);
  parallel_for(n_ch, threads, [&](std::size_t c) {
    for (std::size_t j = 0; j < n_az; ++j) {
      const std::size_t r = c * n_az + j;
      const Vec3 dir = sensor.rotate(spherical_to_point(elevations[c], azimuths[j], 1.0));
      const auto hit = scene.intersect(origin, dir, profile.max_range);
      if (!hit) continue;
      double range = hit->distance;
      if (profile.range_noise_sigma > 0.0) {
        range += profile.range_noise_sigma * noise_rng.normal(r);
        range = std::clamp(range, 0.0, profile.max_range);
      }
      if (profile.drop_rate > 0.0 && drop_rng.uniform(r) < profile.drop_rate) {
        outcome[r] = Outcome::Dropped;
        continue;
      }
      outcome[r] = Outcome::Hit;
      ranges[r] = range;
    }
  });

  SimulatedScan scan;
  scan.rays_cast = n;
  auto& cloud = scan.cloud;
  for (std::size_t c = 0; c < n_ch; ++c) {
    for (std::size_t j = 0; j < n_az; ++j) {
      const std::size_t r = c * n_az + j;
      if (outcome[r] == Outcome::Miss) {
        ++scan.miss_count;
        continue;
      }
      if (outcome[r] == Outcome::Dropped) {
        ++scan.dropped_count;
        continue;
      }
      cloud.points.push_back(sensor.apply(spherical_to_point(elevations[c], azimuths[j], ranges[r])));
      cloud.beam_id.push_back(static_cast<std::int32_t>(c));
      cloud.azimuth_step.push_back(static_cast<std::int32_t>(j));
      cloud.azimuth.push_back(azimuths[j]);
      cloud.range.push_back(ranges[r]);
    }
  }
  return scan;
}

namespace {

SensorProfile make_profile(std::string name, int channels, double vmin, double vmax, double rate,
                           double pps, double max_range, double drop, double noise) {
  SensorProfile p;
  p.name = std::move(name);
  p.channels = channels;
  p.vfov_min_deg = vmin;
  p.vfov_max_deg = vmax;
  p.rotation_rate_hz = rate;
  p.points_per_second = pps;
  p.max_range = max_range;
  p.drop_rate = drop;
  p.range_noise_sigma = noise;
  return p;
}

}  // namespace

// vFoV bounds come from the published sensor tables. Channel counts, rates,
// ranges and noise levels are documented defaults for the sensor classes.
// The platform frame is the main (top) sensor frame, so mounts are identity
// except for the perimeter units.
SensorProfile preset(std::string_view name) {
  if (name == "waymo-top") {
    return make_profile("waymo-top", 64, -17.6, 2.4, 10.0, 64.0 * 2650.0 * 10.0, 75.0, 0.0, 0.02);
  }
  if (name == "waymo-side") return waymo_side_profiles().front();
  if (name == "kitti") {
    return make_profile("kitti", 64, -24.9, 2.0, 10.0, 1'300'000.0, 120.0, 0.0, 0.02);
  }
  if (name == "nuscenes") {
    return make_profile("nuscenes", 32, -30.67, 10.67, 20.0, 1'390'000.0, 70.0, 0.0, 0.02);
  }
  if (name == "carla-default-32") {
    // CARLA's stock ray-cast LiDAR: 56k points/s, 10 Hz, 45% general dropoff.
    return make_profile("carla-default-32", 32, -30.0, 10.0, 10.0, 56'000.0, 100.0, 0.45, 0.0);
  }
  std::string valid;
  for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw NotFoundError("unknown sensor preset '" + std::string(name) + "'; valid presets: " + valid);
}

std::vector<std::string> preset_names() {
  return {"waymo-top", "waymo-side", "kitti", "nuscenes", "carla-default-32"};
}

std::vector<SensorProfile> waymo_side_profiles() {
  struct Mount {
    const char* suffix;
    Pose6D pose;
  };
  const Mount mounts[] = {
      {"front", make_pose(1.5, 0.0, -1.2, 0.0, 0.0, 0.0)},
      {"rear", make_pose(-1.5, 0.0, -1.2, 0.0, kPi, 0.0)},
      {"left", make_pose(0.0, 0.9, -1.2, 0.0, 0.5 * kPi, 0.0)},
      {"right", make_pose(0.0, -0.9, -1.2, 0.0, -0.5 * kPi, 0.0)},
  };
  std::vector<SensorProfile> out;
  for (const auto& m : mounts) {
    auto p = make_profile("waymo-side", 32, -90.0, 30.0, 10.0, 32.0 * 600.0 * 10.0, 20.0, 0.0, 0.02);
    p.name = std::string("waymo-side-") + m.suffix;
    p.mount = m.pose;
    out.push_back(std::move(p));
  }
  out.front().name = "waymo-side";
  return out;
}

SensorProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open sensor profile " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("profile " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw InputError("profile " + path.string() + ": expected a JSON object");
  SensorProfile p;
  if (j.contains("base")) p = preset(j["base"].get<std::string>());
  p.name = path.stem().string();
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "base") continue;
      if (key == "name") p.name = value.get<std::string>();
      else if (key == "channels") p.channels = value.get<int>();
      else if (key == "vfov_min") p.vfov_min_deg = value.get<double>();
      else if (key == "vfov_max") p.vfov_max_deg = value.get<double>();
      else if (key == "hfov_min") p.hfov_min_deg = value.get<double>();
      else if (key == "hfov_max") p.hfov_max_deg = value.get<double>();
      else if (key == "rotation_rate") p.rotation_rate_hz = value.get<double>();
      else if (key == "points_per_second") p.points_per_second = value.get<double>();
      else if (key == "max_range") p.max_range = value.get<double>();
      else if (key == "drop_rate") p.drop_rate = value.get<double>();
      else if (key == "range_noise_sigma") p.range_noise_sigma = value.get<double>();
      else if (key == "mount") {
        const auto m = value.get<std::vector<double>>();
        if (m.size() != 6) throw InputError("profile.mount: expected 6 values");
        p.mount = make_pose(m[0], m[1], m[2], m[3], m[4], m[5]);
      } else if (key == "elevation_override") {
        p.elevation_override_deg = value.get<std::vector<double>>();
      } else {
        throw InputError("profile." + key + ": unknown key in " + path.string());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("profile " + path.string() + ": " + e.what());
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  return p;
}

void save_profile(const SensorProfile& p, const std::filesystem::path& path) {
  nlohmann::json j = {
      {"name", p.name},
      {"channels", p.channels},
      {"vfov_min", p.vfov_min_deg},
      {"vfov_max", p.vfov_max_deg},
      {"hfov_min", p.hfov_min_deg},
      {"hfov_max", p.hfov_max_deg},
      {"rotation_rate", p.rotation_rate_hz},
      {"points_per_second", p.points_per_second},
      {"max_range", p.max_range},
      {"drop_rate", p.drop_rate},
      {"range_noise_sigma", p.range_noise_sigma},
      {"mount", {p.mount.x, p.mount.y, p.mount.z, p.mount.roll, p.mount.yaw, p.mount.pitch}},
  };
  if (p.elevation_override_deg) j["elevation_override"] = *p.elevation_override_deg;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

SensorProfile resolve_profile(const std::string& name_or_path) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    return preset(name_or_path);
  }
  if (std::filesystem::exists(name_or_path)) return load_profile(name_or_path);
  return preset(name_or_path);  // throws NotFoundError with the preset list
}

}  // namespace resim
